"""Batch PNG figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _drift(values: np.ndarray) -> np.ndarray:
    v0 = values[0]
    return (values - v0) / abs(v0) if v0 else values - v0


def plot_run(report, out_dir: str | Path) -> list[Path]:
    """Conservation, entropy and constraint histories of a coupled run."""
    out = Path(out_dir)
    rec = report.records
    if not rec:
        return []
    t = np.array([r.t for r in rec])
    mass = np.array([r.mass + r.mass_tally for r in rec])
    energy = np.array([r.energy for r in rec])
    mom = np.array([r.momentum for r in rec])
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, _drift(mass), label="mass + tally")
        ax.plot(t, _drift(energy), label="energy")
        scale = report.momentum_scale or 1.0
        ax.plot(t, np.linalg.norm(mom - mom[0], axis=1) / scale, label="|momentum drift| / scale")
        ax.set_xlabel("t")
        ax.set_ylabel("relative drift")
        ax.legend()
        paths.append(_save(fig, out / "conservation.png"))

        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.5))
        a1.plot(t, [r.entropy for r in rec], label="H")
        a1.set_ylabel("H")
        d = np.array([r.dissipation for r in rec])
        if np.isfinite(d).any():
            a2.plot(t, d, label="D")
        a2.plot(t, [r.rel_entropy for r in rec], label="relative entropy")
        a2.plot(t, [r.maxw_gap for r in rec], label="Maxwellian gap")
        a2.set_yscale("symlog", linthresh=1e-12)
        a2.set_xlabel("t")
        a2.legend()
        paths.append(_save(fig, out / "entropy.png"))

        sl = report.step_log
        fig, ax = plt.subplots()
        ax.semilogy(sl.t, np.maximum(sl.gauss, 1e-300), label="Gauss residual")
        ax.semilogy(sl.t, np.maximum(sl.continuity, 1e-300), label="continuity residual")
        ax.semilogy(sl.t, np.maximum(sl.divb, 1e-300), label="div B")
        ax.set_xlabel("t")
        ax.legend()
        paths.append(_save(fig, out / "constraints.png"))
    return paths


def plot_relaxation(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.5))
        a1.plot(report.t, report.entropy)
        a1.set_ylabel("H")
        a2.semilogy(report.t, np.maximum(report.dissipation, 1e-300), label="D")
        a2.semilogy(report.t, np.maximum(report.rel_entropy, 1e-300), label="relative entropy")
        a2.semilogy(report.t, np.maximum(report.gap, 1e-300), label="Maxwellian gap")
        a2.set_xlabel("t")
        a2.legend()
        return [_save(fig, out / "relaxation.png")]


def plot_stability(report, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        d0 = report.distance[0]
        ax.plot(report.t, report.distance / d0 if d0 else report.distance)
        ax.set_xlabel("t")
        ax.set_ylabel("d(t) / d(0)")
        return [_save(fig, out / "stability.png")]


def plot_commutator(study, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    eps = np.array([r.eps for r in study.rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(eps, [r.i1 for r in study.rows], "o-", label=f"I1 (slope {study.slope_i1:.2f})")
        ax.loglog(eps, [r.i2 for r in study.rows], "s-", label=f"I2 (slope {study.slope_i2:.2f})")
        ax.loglog(eps, [r.bound for r in study.rows], "k--", label="I2 bound")
        ax.set_xlabel("epsilon")
        ax.legend()
        return [_save(fig, out / "commutator.png")]


def plot_splitting(study, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(study.dts, study.errors, "o-", label=f"slope {study.slope:.2f}")
        ref = study.errors[0] * (study.dts / study.dts[0]) ** 3
        ax.loglog(study.dts, ref, "k--", label="dt^3")
        ax.set_xlabel("dt")
        ax.set_ylabel("one step vs two half steps")
        ax.legend()
        return [_save(fig, out / "splitting.png")]
