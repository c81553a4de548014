"""Command line entry point ``vmbsim``.

Exit codes: 0 success, 2 configuration error, 3 run abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import sys
from pathlib import Path

from ..collision import (collision_operator, conservative_projection, entropy_dissipation,
                         invariant_moments)
from ..errors import DataError, RunAbort, VMBError
from ..grid import read_snapshot
from .config import SimConfig, load_config, save_config
from .experiments import (commutator_study, perturb, relaxation_experiment, splitting_study,
                          stability_experiment)
from .presets import PRESETS
from .runner import run
from .solver import Solver

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("vmbsim")


def _preset(name: str, mode: str | None) -> SimConfig:
    # presets that depend on the mode rebuild their initial data for it
    factory = PRESETS[name]
    if mode and "mode" in inspect.signature(factory).parameters:
        return factory(mode=mode)
    cfg = factory()
    return cfg.replace(**{"transport.mode": mode}) if mode else cfg


def _config(args) -> SimConfig:
    if args.config in PRESETS and not Path(args.config).exists():
        cfg = _preset(args.config, args.mode)
    else:
        cfg = load_config(args.config)
    changes = {}
    if args.mode:
        changes["transport.mode"] = args.mode
    if args.steps is not None:
        changes["steps"] = args.steps
    if getattr(args, "no_plots", False):
        changes["output.plots"] = False
    return cfg.replace(**changes) if changes else cfg


def _out_dir(args, cfg: SimConfig, default: str) -> Path:
    out = Path(args.out or (cfg.output.directory if args.command == "run" else default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in row])


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run(cfg, _out_dir(args, cfg, "vmb_out"))
    summary = report.summary()
    print(json.dumps({k: summary[k] for k in ("status", "reason", "steps", "drifts")}, indent=2))
    return report.exit_code


def cmd_check(args) -> int:
    """Invariant table of the collision term on every cell of the initial state."""
    cfg = _config(args)
    solver = Solver(cfg)
    f = solver.initial_state().f
    v, mode = solver.velocity, solver.mode
    header = ["cell", "pre_mass", "pre_p1", "pre_p2", "pre_p3", "pre_energy",
              "post_mass", "post_p1", "post_p2", "post_p3", "post_energy",
              "dissipation", "skipped", "truncated"]
    out = csv.writer(sys.stdout)
    out.writerow(header)
    for i, cell in enumerate(f.values):
        raw = collision_operator(cell, solver.kernel, solver.quad, v, mode)
        weight = cell if cfg.collision.projection == "density" else None
        projected = conservative_projection(raw, v, mode, weight=weight)
        pre = invariant_moments(raw.raw, v, mode)
        post = invariant_moments(projected.net, v, mode)
        d = entropy_dissipation(cell, solver.kernel, solver.quad, v, mode)
        out.writerow([i, *(repr(float(x)) for x in pre), *(repr(float(x)) for x in post),
                      repr(float(d.value)), repr(float(d.skipped)), repr(float(raw.truncated))])
    return EXIT_OK


def cmd_commutator(args) -> int:
    cfg = _config(args)
    study = commutator_study(cfg)
    rows = [(r.eps, r.mu, r.i1, r.i2, r.bound) for r in study.rows]
    header = ["epsilon", "mu", "i1_norm", "i2_norm", "bound_rhs"]
    w = csv.writer(sys.stdout)
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    print(f"# slope_i1={study.slope_i1:.4f} slope_i2={study.slope_i2:.4f} "
          f"slope_total={study.slope_total:.4f} bound_holds={study.bound_holds()}")
    if args.out:
        out = _out_dir(args, cfg, "vmb_commutator")
        _write_rows(out / "commutator.csv", header, rows)
        _write_json(out / "report.json", {
            "slope_i1": study.slope_i1, "slope_i2": study.slope_i2,
            "slope_total": study.slope_total, "bound_holds": study.bound_holds(),
            "i1_monotone": study.monotone("i1"), "i2_monotone": study.monotone("i2")})
        if cfg.output.plots:
            from .plotting import plot_commutator
            plot_commutator(study, out)
    return EXIT_OK


def cmd_relax(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg, "vmb_relax")
    save_config(cfg, out / "config.json")
    report = relaxation_experiment(cfg)
    _write_rows(out / "relax.csv", ["t", "entropy", "dissipation", "rel_entropy", "maxw_gap"],
                report.rows())
    summary = report.summary()
    _write_json(out / "report.json", summary)
    if cfg.output.plots:
        from .plotting import plot_relaxation
        plot_relaxation(report, out)
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK if report.status == "ok" else EXIT_ABORT


def _perturbed(cfg: SimConfig, source: str):
    """``source`` is a relative L1 size, a JSON perturbation section or a snapshot file."""
    base = Solver(cfg).initial_state().f
    try:
        size = float(source)
    except ValueError:
        path = Path(source)
        if path.suffix == ".json":
            data = json.loads(path.read_text())
            p = cfg.replace(perturbation=data).perturbation
            return base, perturb(base, p.l1, p.mode)
        other, _ = read_snapshot(path)
        if other.values.shape != base.values.shape:
            raise DataError("snapshot grid does not match the config grid")
        return base, other
    p = cfg.replace(**{"perturbation.l1": size}).perturbation
    return base, perturb(base, p.l1, p.mode)


def cmd_stability(args) -> int:
    cfg = _config(args)
    f0_a, f0_b = _perturbed(cfg, args.perturbation)
    out = _out_dir(args, cfg, "vmb_stability")
    save_config(cfg, out / "config.json")
    report = stability_experiment(cfg, f0_a, f0_b)
    _write_rows(out / "stability.csv", ["t", "distance"], zip(report.t, report.distance))
    summary = report.summary()
    _write_json(out / "report.json", summary)
    if cfg.output.plots:
        from .plotting import plot_stability
        plot_stability(report, out)
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK if report.status == "ok" else EXIT_ABORT


def cmd_splitting(args) -> int:
    cfg = _config(args)
    dts = [float(x) for x in args.dt]
    study = splitting_study(cfg, dts)
    w = csv.writer(sys.stdout)
    w.writerow(["dt", "error"])
    for dt, err in study.rows():
        w.writerow([repr(float(dt)), repr(float(err))])
    print(f"# slope={study.slope:.4f}")
    if args.out:
        out = _out_dir(args, cfg, "vmb_splitting")
        _write_rows(out / "splitting.csv", ["dt", "error"], study.rows())
        if cfg.output.plots:
            from .plotting import plot_splitting
            plot_splitting(study, out)
    return EXIT_OK


def cmd_preset(args) -> int:
    cfg = _preset(args.name, args.mode)
    text = cfg.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmbsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("config", help="JSON config file or preset name "
                                      f"({', '.join(sorted(PRESETS))})")
        p.add_argument("--mode", choices=("classical", "relativistic"), default=None,
                       help="override transport.mode")
        p.add_argument("--steps", type=int, default=None, help="override the step count")
        p.add_argument("--out", default=None, help=out_help)
        p.add_argument("--no-plots", action="store_true", help="skip PNG output")

    p = sub.add_parser("run", help="coupled run: diagnostics, snapshots, report, plots")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="invariant checks")
    p.add_argument("what", choices=("collisions",))
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("study-commutator", help="commutator schedule study as CSV")
    common(p, "also write CSV, report and plot to this directory")
    p.set_defaults(func=cmd_commutator)

    p = sub.add_parser("relax", help="homogeneous relaxation experiment")
    common(p)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("stability", help="L1 distance of two nearby trajectories")
    common(p)
    p.add_argument("perturbation", help="relative L1 size, perturbation JSON or snapshot file")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("study-splitting", help="one step against two half steps")
    common(p, "also write CSV and plot to this directory")
    p.add_argument("--dt", nargs="+", default=["0.016", "0.008", "0.004", "0.002", "0.001"])
    p.set_defaults(func=cmd_splitting)

    p = sub.add_parser("preset", help="print a named preset as a JSON config")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--mode", choices=("classical", "relativistic"), default=None)
    p.add_argument("--out", default=None, help="write to this file instead of stdout")
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RunAbort as exc:
        log.error("run aborted: %s", exc)
        return EXIT_ABORT
    except (VMBError, json.JSONDecodeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
