"""Relativistic kinematics and functionals.

The relativistic collision weight and the bounded transport speed are mode
flags of ``collision`` and ``transport``; this module owns the velocity map
``xi -> xi / sqrt(1 + |xi|^2)`` and the relativistic moments and bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import UNIT_BALL_VOLUME, DistributionFunction


def xi_hat(xi) -> np.ndarray:
    """``xi / sqrt(1 + |xi|^2)`` along the trailing axis; always shorter than 1."""
    xi = np.asarray(xi, dtype=float)
    return xi / np.sqrt(1.0 + np.sum(xi * xi, axis=-1, keepdims=True))


def gamma(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(1.0 + np.sum(xi * xi, axis=-1))


@dataclass
class RelMoments:
    """Per-cell ``rho``, ``j_hat``, ``rel_energy`` and the global ``weighted_mass``."""

    rho: np.ndarray
    j_hat: np.ndarray
    rel_energy: np.ndarray
    weighted_mass: float


def rel_moments(f: DistributionFunction) -> RelMoments:
    """Lattice sums of ``f``, ``f xi_hat`` and ``f gamma`` per cell.

    ``weighted_mass`` integrates ``f (gamma + sqrt(1 + d^2))`` over the whole
    grid, where ``d`` is the distance of the cell center from the midpoint
    of the periodic cell.
    """
    vel = f.velocity
    vol = vel.cell_volume
    g = gamma(vel.mesh)
    rho = f.values.sum(axis=(1, 2, 3)) * vol
    j_hat = np.einsum("iabc,abcd->id", f.values, xi_hat(vel.mesh)) * vol
    rel_energy = np.einsum("iabc,abc->i", f.values, g) * vol
    d = f.space.distance_to_center(f.space.centers)
    weighted = float(np.sum(rel_energy + rho * np.sqrt(1.0 + d * d)) * f.space.dx)
    return RelMoments(rho, j_hat, rel_energy, weighted)


def rho_bound_constant(f_inf: float) -> float:
    """Constant ``C`` in ``rho <= C e^{3/4}`` with ``e = int f sqrt(1 + |xi|^2)``.

    Splitting at radius ``R``: ``rho <= omega_3 R^3 ||f||_inf + e / R`` since
    ``sqrt(1 + |xi|^2) >= |xi| >= R`` outside the ball.  Taking ``R = e^{1/4}``
    gives ``C = omega_3 ||f||_inf + 1``.
    """
    return UNIT_BALL_VOLUME * f_inf + 1.0


def rho_moment_cells(f: DistributionFunction, f_inf_bound: float | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell ``rho_i`` and the bound ``C e_i^{3/4}``."""
    fmax = float(f.values.max(initial=0.0))
    if f_inf_bound is None:
        f_inf_bound = fmax
    elif f_inf_bound < fmax:
        raise DomainError(f"f_inf_bound {f_inf_bound} is below max f = {fmax}")
    m = rel_moments(f)
    return m.rho, rho_bound_constant(f_inf_bound) * m.rel_energy**0.75


def rho_moment_bound(f: DistributionFunction, f_inf_bound: float | None = None
                     ) -> tuple[float, float]:
    """``(max_i rho_i, C max_i e_i^{3/4})``; the first never exceeds the second."""
    rho, bound = rho_moment_cells(f, f_inf_bound)
    return float(rho.max(initial=0.0)), float(bound.max(initial=0.0))
