"""Run loop, output files and the run summary."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..collision import kernel_growth_exponent
from ..errors import RunAbort
from ..grid import write_moments_csv, write_snapshot
from ..maxwell import constraint_residuals, field_norms, write_fields_csv
from .config import SimConfig, save_config
from .diagnostics import DiagnosticsRecord, momentum_scale, write_diagnostics_csv
from .solver import SimState, Solver

log = logging.getLogger(__name__)

# slack for rounding in the per-step Gauss growth inequality
GAUSS_ROUNDING = 1e-12


@dataclass
class StepLog:
    """Per-step constraint data (cheap, recorded every step regardless of cadence)."""

    t: list[float] = field(default_factory=list)
    gauss: list[float] = field(default_factory=list)
    divb: list[float] = field(default_factory=list)
    continuity: list[float] = field(default_factory=list)
    e_l5: list[float] = field(default_factory=list)
    b_l6: list[float] = field(default_factory=list)

    def gauss_bound_holds(self, dt: float) -> bool:
        """``gauss_n <= gauss_0 + sum_{k<=n} dt * continuity_k`` at every step."""
        if not self.gauss:
            return True
        g = np.asarray(self.gauss)
        budget = g[0] + np.concatenate([[0.0], np.cumsum(dt * np.asarray(self.continuity[1:]))])
        return bool(np.all(g <= budget + GAUSS_ROUNDING))


@dataclass
class RunReport:
    status: str
    reason: str
    steps: int
    dt: float
    records: list[DiagnosticsRecord]
    step_log: StepLog
    momentum_scale: float
    entropy_budget: float
    kernel_growth: float = float("nan")
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "ok" else 3

    def drifts(self) -> dict[str, float]:
        if not self.records:
            return {}
        r0 = self.records[0]
        m = np.array([r.mass + r.mass_tally for r in self.records])
        e = np.array([r.energy for r in self.records])
        p = np.array([r.momentum for r in self.records])
        h = np.array([r.entropy for r in self.records])
        out = {
            "mass_abs": float(np.max(np.abs(m - r0.mass))),
            "mass_rel": float(np.max(np.abs(m - r0.mass)) / r0.mass) if r0.mass else 0.0,
            "energy_rel": float(np.max(np.abs(e - r0.energy)) / abs(r0.energy)) if r0.energy else 0.0,
            "momentum_abs": float(np.max(np.linalg.norm(p - p[0], axis=1))),
            "entropy_excess": float(np.max(h - r0.entropy)),
        }
        out["momentum_rel"] = out["momentum_abs"] / self.momentum_scale if self.momentum_scale else 0.0
        if "rho_ratio" in r0.extra:
            out["rho_bound_ratio"] = float(max(r.extra["rho_ratio"] for r in self.records))
        return out

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "status": self.status,
            "reason": self.reason,
            "steps": self.steps,
            "dt": self.dt,
            "t_final": last.t if last else 0.0,
            "drifts": self.drifts(),
            "momentum_scale": self.momentum_scale,
            "entropy_budget": self.entropy_budget,
            "entropy_within_budget": bool(
                not self.records or self.drifts()["entropy_excess"] <= self.entropy_budget + 1e-12),
            "gauss_bound_holds": self.step_log.gauss_bound_holds(self.dt),
            "max_divb": float(max(self.step_log.divb, default=0.0)),
            "max_E_L5": float(max(self.step_log.e_l5, default=0.0)),
            "max_B_L6": float(max(self.step_log.b_l6, default=0.0)),
            "kernel_growth_exponent": self.kernel_growth,
            "final": last.to_dict() if last else {},
            "outputs": self.outputs,
        }


def simulate(config: SimConfig, state: SimState | None = None, solver: Solver | None = None,
             on_record=None) -> tuple[RunReport, SimState]:
    """Integrate ``config.steps`` steps in memory; no files are written."""
    solver = solver or Solver(config)
    state = state or solver.initial_state()
    scale = momentum_scale(state.f)
    dt = solver.resolve_dt(state)
    records = [solver.diagnostics(state)]
    if on_record:
        on_record(state, records[-1])
    slog = StepLog()

    def log_step(s: SimState):
        g, b = constraint_residuals(s.fields, s.f.values.sum(axis=(1, 2, 3)) * s.f.velocity.cell_volume,
                                    s.background)
        slog.t.append(s.t)
        slog.gauss.append(g)
        slog.divb.append(b)
        slog.continuity.append(s.continuity)
        e_norm, b_norm = field_norms(s.fields)
        slog.e_l5.append(e_norm)
        slog.b_l6.append(b_norm)

    log_step(state)
    status, reason = "ok", ""
    cadence = config.output.cadence
    for n in range(config.steps):
        try:
            state = solver.step(state, dt)
        except RunAbort as exc:
            status, reason = "aborted", str(exc)
            log.error("run aborted at step %d: %s", n, exc)
            records.append(solver.diagnostics(state))
            break
        log_step(state)
        if (n + 1) % cadence == 0 or n + 1 == config.steps:
            records.append(solver.diagnostics(state))
            if on_record:
                on_record(state, records[-1])
    report = RunReport(status, reason, state.step, dt, records, slog, scale,
                       state.tally.entropy_budget,
                       kernel_growth_exponent(solver.kernel, solver.quad, solver.velocity))
    return report, state


def run(config: SimConfig, out_dir: str | Path | None = None) -> RunReport:
    """Run the configured simulation and write its outputs.

    Files: ``config.json``, ``diagnostics.csv``, ``steps.csv``, periodic and
    final snapshots, ``fields.csv``, ``moments.csv``, ``report.json`` and,
    if enabled, PNG plots.  I/O failures propagate as ``OSError``.
    """
    out = Path(out_dir or config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    snaps = config.output.snapshot_cadence

    def on_record(state: SimState, _record):
        if snaps and state.step % snaps == 0:
            write_snapshot(out / f"snapshot_{state.step:06d}.bin", state.f, state.t)

    report, state = simulate(config, on_record=on_record)
    write_outputs(out, config, report, state)
    return report


def write_outputs(out: Path, config: SimConfig, report: RunReport, state: SimState) -> None:
    write_diagnostics_csv(out / "diagnostics.csv", report.records)
    with open(out / "steps.csv", "w") as fh:
        fh.write("t,gauss,divb,continuity,E_L5,B_L6\n")
        sl = report.step_log
        for row in zip(sl.t, sl.gauss, sl.divb, sl.continuity, sl.e_l5, sl.b_l6):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    write_snapshot(out / "snapshot_final.bin", state.f, state.t,
                   extra={"status": report.status, "step": state.step})
    write_fields_csv(out / "fields.csv", state.fields)
    write_moments_csv(out / "moments.csv", state.f)
    report.outputs = {p.name: str(p) for p in sorted(out.iterdir()) if p.is_file()}
    if config.output.plots:
        from .plotting import plot_run
        for path in plot_run(report, out):
            report.outputs[Path(path).name] = str(path)
    report.outputs["report.json"] = str(out / "report.json")
    (out / "report.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")


def records_to_dict(records: list[DiagnosticsRecord]) -> list[dict]:
    return [asdict(r) for r in records]
