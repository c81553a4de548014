"""Per-record diagnostics: conservation, entropy, constraints and equilibrium gap."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from ..collision import SphereQuadrature, collide_pair, interpolate
from ..errors import DegenerateCellError
from ..grid import DistributionFunction, VelocityGrid, relative_entropy
from ..relativistic import gamma

DIAGNOSTICS_HEADER = ["t", "mass", "px", "py", "pz", "energy", "entropy", "dissipation", "gauss",
                      "divb", "continuity", "rel_entropy", "maxw_gap", "mass_tally"]
RELATIVISTIC_COLUMNS = ["rel_energy", "weighted_mass", "rho_max", "rho_bound", "rho_ratio"]


class GapSampler:
    """Deterministic sample of lattice quadruples ``(xi, xi_*, omega)``.

    ``pairs`` node pairs are drawn once from a fixed-seed generator; every
    quadrature direction is used for each pair, and quadruples whose
    post-collision velocities leave the lattice hull are discarded.
    """

    def __init__(self, velocity: VelocityGrid, quad: SphereQuadrature, pairs: int = 4096,
                 seed: int = 0):
        self.velocity = velocity
        n = velocity.nv**3
        rng = np.random.default_rng(seed)
        a = rng.integers(0, n, size=pairs)
        b = rng.integers(0, n, size=pairs)
        keep = a != b
        a, b = a[keep], b[keep]
        mesh = velocity.mesh.reshape(-1, 3)
        nodes = quad.nodes
        xi = np.repeat(mesh[a], len(nodes), axis=0)
        xs = np.repeat(mesh[b], len(nodes), axis=0)
        om = np.tile(nodes, (len(a), 1))
        p, ps = collide_pair(xi, xs, om)
        lo, hi = -velocity.vmax, velocity.vmax - velocity.dv
        inside = np.all((p >= lo) & (p <= hi) & (ps >= lo) & (ps <= hi), axis=1)
        self.a = np.repeat(a, len(nodes))[inside]
        self.b = np.repeat(b, len(nodes))[inside]
        self.post = p[inside]
        self.post_star = ps[inside]

    def __len__(self) -> int:
        return self.a.size


def maxwellian_gap(f_cell: np.ndarray, sampler: GapSampler) -> float:
    """``max |f' f'_* - f f_*| / (1 + f' f'_* + f f_*)`` over the sampled quadruples."""
    f_cell = np.asarray(f_cell, dtype=float)
    if not f_cell.any() or len(sampler) == 0:
        return 0.0
    flat = f_cell.ravel()
    pre = flat[sampler.a] * flat[sampler.b]
    post = interpolate(f_cell, sampler.post, sampler.velocity) * \
        interpolate(f_cell, sampler.post_star, sampler.velocity)
    return float(np.max(np.abs(post - pre) / (1.0 + post + pre)))


def entropy(f: DistributionFunction) -> float:
    """``H = sum f ln f dx dv^3`` with ``0 ln 0 = 0``."""
    return float(xlogy(f.values, f.values).sum() * f.phase_volume)


def total_relative_entropy(f: DistributionFunction) -> float:
    """Sum over cells of the relative entropy to the local fitted Maxwellian, times ``dx``."""
    total = 0.0
    for cell in f.values:
        try:
            total += relative_entropy(cell, f.velocity)
        except DegenerateCellError:
            continue
    return total * f.space.dx


def particle_energy(f: DistributionFunction, mode: str) -> float:
    """``sum f |xi|^2`` (classical) or ``sum f sqrt(1 + |xi|^2)`` (relativistic)."""
    weight = f.velocity.speed2 if mode == "classical" else gamma(f.velocity.mesh)
    return float(np.einsum("iabc,abc->", f.values, weight) * f.phase_volume)


def field_energy_weight(mode: str) -> float:
    """Factor on ``sum (|E|^2 + |B|^2) dx`` that balances ``particle_energy``.

    In classical mode both terms carry the same factor; the relativistic
    particle energy has no factor 1/2, so the field term needs one.
    """
    return 1.0 if mode == "classical" else 0.5


def momentum_scale(f: DistributionFunction) -> float:
    """``sum f |xi| dx dv^3``, the scale against which momentum drift is judged."""
    return float(np.einsum("iabc,abc->", f.values, np.sqrt(f.velocity.speed2)) * f.phase_volume)


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: tuple[float, float, float]
    energy: float
    entropy: float
    dissipation: float
    gauss: float
    divb: float
    continuity: float
    rel_entropy: float
    maxw_gap: float
    mass_tally: float
    extra: dict[str, float] = field(default_factory=dict)

    def row(self) -> list[float]:
        return [self.t, self.mass, *self.momentum, self.energy, self.entropy, self.dissipation,
                self.gauss, self.divb, self.continuity, self.rel_entropy, self.maxw_gap,
                self.mass_tally, *self.extra.values()]

    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.row())

    def to_dict(self) -> dict[str, float]:
        header = DIAGNOSTICS_HEADER + list(self.extra)
        return dict(zip(header, self.row()))


def write_diagnostics_csv(path: str | Path, records: list[DiagnosticsRecord]) -> None:
    """Fixed header (plus relativistic columns when present), floats in ``repr`` form."""
    extra = list(records[0].extra) if records else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTICS_HEADER + extra)
        for r in records:
            w.writerow([repr(float(v)) for v in r.row()])


def read_diagnostics_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}
