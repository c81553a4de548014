"""Experiment runners: homogeneous relaxation, stability in the initial data, splitting order."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, RunAbort, StudyError
from ..grid import DistributionFunction
from ..mollify import GaussianDensity, ScheduleStudy, Window, loglog_slope, schedule_study
from .config import SimConfig
from .diagnostics import DiagnosticsRecord
from .solver import SimState, Solver

# slack on H(t) monotonicity, relative to |H(0)|
ENTROPY_SLACK = 1e-12
# D(t) may dip below zero by rounding only
DISSIPATION_FLOOR = -1e-12


@dataclass
class RelaxationReport:
    """Time series of a pure collision relaxation and its pass/fail checks."""

    t: np.ndarray
    entropy: np.ndarray
    dissipation: np.ndarray
    rel_entropy: np.ndarray
    gap: np.ndarray
    status: str = "ok"
    reason: str = ""

    @property
    def entropy_increase(self) -> float:
        """Largest step-to-step increase of ``H`` (negative when strictly decreasing)."""
        if self.entropy.size < 2:
            return 0.0
        return float(np.max(np.diff(self.entropy)))

    @property
    def monotone(self) -> bool:
        return self.entropy_increase <= ENTROPY_SLACK * abs(self.entropy[0])

    @property
    def dissipation_nonnegative(self) -> bool:
        d = self.dissipation[np.isfinite(self.dissipation)]
        return bool(np.all(d >= DISSIPATION_FLOOR))

    @property
    def rel_entropy_ratio(self) -> float:
        r0 = self.rel_entropy[0]
        return float(self.rel_entropy[-1] / r0) if r0 > 0 else 0.0

    @property
    def gap_reduction(self) -> float:
        """``gap(0) / gap(T)``; infinite when the terminal gap vanishes."""
        return float(self.gap[0] / self.gap[-1]) if self.gap[-1] > 0 else math.inf

    def dissipation_mismatch(self) -> float:
        """Relative difference between ``-dH/dt`` (finite differences) and the midpoint ``D``."""
        if self.t.size < 2:
            return 0.0
        rate = -np.diff(self.entropy) / np.diff(self.t)
        mid = 0.5 * (self.dissipation[1:] + self.dissipation[:-1])
        scale = np.max(np.abs(mid))
        return float(np.max(np.abs(rate - mid)) / scale) if scale > 0 else 0.0

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "steps": int(self.t.size - 1),
            "monotone": bool(self.monotone),
            "max_entropy_increase": self.entropy_increase,
            "dissipation_nonnegative": bool(self.dissipation_nonnegative),
            "min_dissipation": float(np.nanmin(self.dissipation)),
            "rel_entropy_initial": float(self.rel_entropy[0]),
            "rel_entropy_final": float(self.rel_entropy[-1]),
            "rel_entropy_ratio": self.rel_entropy_ratio,
            "gap_initial": float(self.gap[0]),
            "gap_final": float(self.gap[-1]),
            "gap_reduction": self.gap_reduction,
            "dissipation_mismatch": self.dissipation_mismatch(),
        }

    def rows(self) -> list[tuple[float, ...]]:
        return list(zip(self.t, self.entropy, self.dissipation, self.rel_entropy, self.gap))


def _check_homogeneous(config: SimConfig) -> None:
    fc = config.initial.fields
    if config.grid.nx != 1:
        raise ConfigError("relaxation needs a spatially homogeneous grid (grid.nx = 1)")
    if fc.wave_amplitude or any(fc.B):
        raise ConfigError("relaxation needs vanishing fields")
    if not config.collision.enabled:
        raise ConfigError("relaxation needs collisions enabled")


def relaxation_experiment(config: SimConfig, solver: Solver | None = None) -> RelaxationReport:
    """Pure collision relaxation of a homogeneous state, one record per ``output.cadence``.

    Only the collision step is applied.  The transport and field substeps
    would otherwise feed the lattice's small net current into ``E_1``.
    """
    _check_homogeneous(config)
    solver = solver or Solver(config)
    state = solver.initial_state()
    dt = solver.resolve_dt(state)
    records = [solver.diagnostics(state)]
    status, reason = "ok", ""
    cadence = config.output.cadence
    for n in range(config.steps):
        tally = copy.copy(state.tally)
        try:
            f = solver.collide(state.f, dt, tally)
        except RunAbort as exc:
            status, reason = "aborted", str(exc)
            break
        state = replace(state, t=state.t + dt, f=f, tally=tally, step=state.step + 1)
        if (n + 1) % cadence == 0 or n + 1 == config.steps:
            records.append(solver.diagnostics(state))
    return RelaxationReport(
        t=np.array([r.t for r in records]),
        entropy=np.array([r.entropy for r in records]),
        dissipation=np.array([r.dissipation for r in records]),
        rel_entropy=np.array([r.rel_entropy for r in records]),
        gap=np.array([r.maxw_gap for r in records]),
        status=status,
        reason=reason,
    )


def l1_distance(a: DistributionFunction, b: DistributionFunction) -> float:
    """``sum |f_a - f_b| dx dv^3``."""
    return float(np.abs(a.values - b.values).sum() * a.phase_volume)


def perturb(f: DistributionFunction, l1: float, mode: int = 1) -> DistributionFunction:
    """``f (1 + c cos(2 pi mode x / L))`` with ``c`` set so the L1 change is ``l1 ||f||_1``."""
    k = 2.0 * math.pi * mode / f.space.length
    shape = np.cos(k * f.space.centers)[:, None, None, None]
    weight = float(np.abs(f.values * shape).sum() * f.phase_volume)
    if weight == 0:
        raise StudyError("perturbation shape vanishes on the support of f")
    c = l1 * f.total_mass() / weight
    if c >= 1.0:
        raise StudyError(f"perturbation of relative size {l1} would make f negative")
    return f.with_values(f.values * (1.0 + c * shape))


@dataclass
class StabilityReport:
    t: np.ndarray
    distance: np.ndarray
    status: str = "ok"
    reason: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def amplification(self) -> float:
        """``max_t d(t) / d(0)``; zero when both data coincide."""
        d0 = self.distance[0]
        if d0 == 0:
            return 0.0
        return float(self.distance.max() / d0)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "steps": int(self.t.size - 1),
            "d0": float(self.distance[0]),
            "d_final": float(self.distance[-1]),
            "amplification": self.amplification,
            **self.extra,
        }


def stability_experiment(config: SimConfig, f0_a: np.ndarray | DistributionFunction,
                         f0_b: np.ndarray | DistributionFunction,
                         cadence: int | None = None) -> StabilityReport:
    """Run both initial data with identical settings and record their L1 distance.

    Each trajectory starts from its own Gauss-consistent fields; both use
    the time step resolved for ``f0_a``.
    """
    solver = Solver(config)
    a = solver.initial_state(_values(f0_a))
    b = solver.initial_state(_values(f0_b))
    if a.f.values.shape != b.f.values.shape:
        raise StudyError("initial data live on different grids")
    dt = solver.resolve_dt(a)
    cadence = cadence or config.output.cadence
    t, dist = [0.0], [l1_distance(a.f, b.f)]
    status, reason = "ok", ""
    for n in range(config.steps):
        try:
            a = solver.step(a, dt)
            b = solver.step(b, dt)
        except RunAbort as exc:
            status, reason = "aborted", str(exc)
            break
        if (n + 1) % cadence == 0 or n + 1 == config.steps:
            t.append(a.t)
            dist.append(l1_distance(a.f, b.f))
    return StabilityReport(np.array(t), np.array(dist), status, reason, {"dt": dt})


def _values(f0) -> np.ndarray | None:
    if f0 is None:
        return None
    return f0.values if isinstance(f0, DistributionFunction) else np.asarray(f0, dtype=float)


def perturbed_pair(config: SimConfig) -> tuple[DistributionFunction, DistributionFunction]:
    """The configured initial datum and its ``perturbation``-sized L1 perturbation."""
    f0 = Solver(config).initial_state().f
    p = config.perturbation
    return f0, perturb(f0, p.l1, p.mode)


@dataclass
class SplittingStudy:
    dts: np.ndarray
    errors: np.ndarray

    @property
    def slope(self) -> float:
        return loglog_slope(self.dts, self.errors)

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.dts, self.errors))


def state_distance(a: SimState, b: SimState) -> float:
    """L1 distance of ``f`` plus the L1 distance of the fields, both times ``dx``."""
    dx = a.f.space.dx
    fields = (np.abs(a.fields.E - b.fields.E).sum() + np.abs(a.fields.B - b.fields.B).sum()) * dx
    return l1_distance(a.f, b.f) + float(fields)


def splitting_study(config: SimConfig, dts, state: SimState | None = None) -> SplittingStudy:
    """One step of size ``dt`` against two steps of size ``dt/2`` from the same state.

    For a second-order splitting the difference is a local error of order
    ``dt^3``; the fitted log-log slope estimates that order.
    """
    dts = np.asarray(dts, dtype=float)
    if dts.size < 3 or np.any(np.diff(dts) >= 0):
        raise StudyError("splitting study needs at least 3 strictly decreasing time steps")
    solver = Solver(config)
    state = state or solver.initial_state()
    errors = []
    for dt in dts:
        one = solver.step(state, dt)
        two = solver.step(solver.step(state, 0.5 * dt), 0.5 * dt)
        errors.append(state_distance(one, two))
    return SplittingStudy(dts, np.array(errors))


def records_series(records: list[DiagnosticsRecord], name: str) -> np.ndarray:
    """One diagnostics column as an array."""
    return np.array([r.to_dict()[name] for r in records])


def commutator_inputs(config: SimConfig) -> tuple[GaussianDensity, object, tuple, Window]:
    """Density, electric field, magnetic field and window of the commutator study."""
    c = config.commutator
    f = GaussianDensity(c.density, c.velocity, c.temperature, c.amplitude, c.wavenumber)
    amp = np.asarray(c.e_amplitude)
    k = c.wavenumber

    def E(x):
        x = np.asarray(x, dtype=float)
        return np.stack([amp[0] * np.sin(k * x), amp[1] * np.cos(k * x), amp[2] * np.sin(k * x)], -1)

    window = Window(c.x_center, c.x_half, (0.0, 0.0, 0.0), c.xi_half, c.window_nx, c.window_nv)
    return f, E, c.B, window


def commutator_study(config: SimConfig) -> ScheduleStudy:
    """The ``mu = eps^2`` schedule study configured by the ``commutator`` section."""
    f, E, B, window = commutator_inputs(config)
    return schedule_study(f, E, B, config.commutator.eps, window=window,
                          order=config.commutator.order)
