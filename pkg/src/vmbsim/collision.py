"""Cut-off Boltzmann collision operator on the velocity lattice.

``Q(f, f) = Q+ - Q-`` with

    Q+(xi) = sum_{xi_*} sum_k w_k b(xi - xi_*, omega_k) f(xi') f(xi'_*) dv^3
    Q-(xi) = f(xi) L(f)(xi),   L(f) = A * f,   A(z) = sum_k w_k b(z, omega_k)

where post-collision values are read by trilinear interpolation and terms
whose post-collision velocities leave the lattice hull are dropped (and
counted).  In relativistic mode every kernel evaluation carries the extra
weight ``1 / (gamma(xi) gamma(xi_*))`` with ``gamma = sqrt(1 + |xi|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DegenerateCellError, DomainError, ProjectionError
from .grid import VelocityGrid, fit_moments

MODES = ("classical", "relativistic")
KERNEL_MODELS = {
    "hard_sphere": _kernels.MODEL_HARD_SPHERE,
    "vhs": _kernels.MODEL_VHS,
    "constant": _kernels.MODEL_CONSTANT,
}
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class CollisionKernel:
    """Angular cut-off kernel ``b(z, omega)``.

    ``hard_sphere``: ``|z . omega|``; ``vhs``: ``|z|^(alpha - 1) |z . omega|``
    with ``b(0, omega) = 0``; ``constant``: ``b0`` (Grad cut-off with a
    constant cross section).
    """

    model: str = "hard_sphere"
    alpha: float = 1.0
    b0: float = 1.0

    def __post_init__(self):
        if self.model not in KERNEL_MODELS:
            raise DomainError(f"unknown kernel model {self.model!r}")
        if self.model == "vhs" and not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"VHS exponent must lie in [0, 1], got {self.alpha}")
        if self.b0 < 0:
            raise DomainError("constant kernel value must be nonnegative")

    @property
    def code(self) -> int:
        return KERNEL_MODELS[self.model]

    def __call__(self, z, omega):
        """Vectorized ``b`` for arrays with a trailing axis of length 3."""
        z = np.asarray(z, dtype=float)
        omega = np.asarray(omega, dtype=float)
        s = np.abs(np.sum(z * omega, axis=-1))
        if self.model == "hard_sphere":
            return s
        if self.model == "constant":
            return np.full(np.broadcast(z[..., 0], omega[..., 0]).shape, self.b0)
        r = np.sqrt(np.sum(z * z, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, r ** (self.alpha - 1.0) * s, 0.0)
        return out


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Nodes ``omega_k`` on the unit sphere with positive weights summing to ``4 pi``."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int = 0
    label: str = "custom"

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 3)
        weights = np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise DomainError("node and weight counts differ")
        if np.any(np.abs(np.linalg.norm(nodes, axis=1) - 1.0) > UNIT_TOL):
            raise DomainError("quadrature nodes must be unit vectors")
        if np.any(weights <= 0):
            raise DomainError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def gauss_legendre(cls, polar: int = 8, azimuth: int = 16) -> "SphereQuadrature":
        """Product rule: Gauss-Legendre in ``cos(theta)`` times uniform azimuth.

        Integrates spherical harmonics exactly up to degree
        ``min(2 * polar - 1, azimuth - 1)``.  The rule is antipodally
        symmetric when ``azimuth`` is even.
        """
        if polar < 1 or azimuth < 1:
            raise DomainError("polar and azimuth counts must be positive")
        x, w = np.polynomial.legendre.leggauss(polar)
        phi = 2.0 * math.pi * np.arange(azimuth) / azimuth
        ct = np.repeat(x, azimuth)
        st = np.sqrt(1.0 - ct**2)
        ph = np.tile(phi, polar)
        nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
        nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
        weights = np.repeat(w, azimuth) * (2.0 * math.pi / azimuth)
        return cls(nodes, weights, min(2 * polar - 1, azimuth - 1), f"gl{polar}x{azimuth}")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def antipodal_partners(self) -> np.ndarray | None:
        """Index of the node at ``-omega_k`` with equal weight, or None if absent."""
        partner = np.full(self.size, -1)
        for k in range(self.size):
            d = np.abs(self.nodes + self.nodes[k]).max(axis=1)
            cand = np.flatnonzero((d < 1e-13) & (np.abs(self.weights - self.weights[k]) < 1e-14))
            if cand.size == 0:
                return None
            partner[k] = cand[0]
        return partner

    def reduced(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Node set actually summed by the kernels and the term-count multiplier.

        For antipodally symmetric rules one node of each pair is kept with
        doubled weight, which is exact since ``b`` and the pair map only
        depend on ``omega`` through ``(z . omega) omega``.
        """
        partner = self.antipodal_partners()
        if partner is None or np.any(partner == np.arange(self.size)):
            return self.nodes, self.weights, 1.0
        keep = np.flatnonzero(np.arange(self.size) < partner)
        return (np.ascontiguousarray(self.nodes[keep]),
                np.ascontiguousarray(2.0 * self.weights[keep]), 2.0)


@dataclass
class CollisionOutput:
    """Gain, loss and loss factor of one velocity slice.

    ``equilibrium`` is the optional equilibrium-preserving term subtracted
    by ``EquilibriumCorrection.apply``; ``correction`` is the component removed by
    ``conservative_projection`` (zero before projection); ``net`` is the
    collision term actually applied.
    """

    gain: np.ndarray
    loss: np.ndarray
    loss_factor: np.ndarray
    truncated: float = 0.0
    correction: np.ndarray | None = field(default=None, repr=False)
    equilibrium: np.ndarray | None = field(default=None, repr=False)

    @property
    def raw(self) -> np.ndarray:
        q = self.gain - self.loss
        if self.equilibrium is not None:
            q = q - self.equilibrium
        return q

    @property
    def net(self) -> np.ndarray:
        q = self.raw
        if self.correction is not None:
            q = q - self.correction
        return q


@dataclass(frozen=True)
class Dissipation:
    value: float
    skipped: float
    truncated: float


@dataclass(frozen=True)
class WeakFormCheck:
    lhs: float
    rhs: float

    @property
    def difference(self) -> float:
        return self.lhs - self.rhs


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")


def kernel_eval(kernel: CollisionKernel, z, omega) -> float:
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > UNIT_TOL:
        raise DomainError(f"omega must be a unit vector, got {omega}")
    return float(kernel(z, omega))


def collide_pair(xi, xi_star, omega):
    """Elastic pair map ``xi' = xi - ((xi - xi_*) . omega) omega``, ``xi'_* = xi_* + (...)``.

    Works on broadcastable arrays with a trailing axis of length 3.
    """
    xi = np.asarray(xi, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    s = np.sum((xi - xi_star) * omega, axis=-1, keepdims=True)
    d = s * omega
    return xi - d, xi_star + d


def inverse_gamma(velocity: VelocityGrid, mode: str) -> np.ndarray:
    _check_mode(mode)
    if mode == "classical":
        return np.ones((velocity.nv,) * 3)
    return 1.0 / np.sqrt(1.0 + velocity.speed2)


@lru_cache(maxsize=32)
def _a_table_cached(kernel: CollisionKernel, quad_key: tuple, nv: int, dv: float):
    nodes = np.array(quad_key[0]).reshape(-1, 3)
    weights = np.array(quad_key[1])
    r = np.arange(-(nv - 1), nv) * dv
    z = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1)
    table = np.zeros(z.shape[:3])
    for w, om in zip(weights, nodes):
        table += w * kernel(z, om)
    table.setflags(write=False)
    return table


def _quad_key(quad: SphereQuadrature) -> tuple:
    return (tuple(quad.nodes.ravel().tolist()), tuple(quad.weights.tolist()))


def a_table(kernel: CollisionKernel, quad: SphereQuadrature, velocity: VelocityGrid) -> np.ndarray:
    """``A(z) = sum_k w_k b(z, omega_k)`` on the difference lattice ``z = n dv``."""
    return _a_table_cached(kernel, _quad_key(quad), velocity.nv, velocity.dv)


def kernel_growth_exponent(kernel: CollisionKernel, quad: SphereQuadrature,
                           velocity: VelocityGrid) -> float:
    """Fitted exponent ``p`` in ``A(z) ~ |z|^p`` over the lattice's relative speeds.

    Recorded for the run report.  The decay condition on ``A`` is a limit at
    infinity, so a truncated lattice can only report this local rate.
    """
    table = a_table(kernel, quad, velocity)
    n = velocity.nv
    k = np.arange(1, n)
    # sample along a generic lattice direction so the rule's symmetry axes are avoided
    idx = (n - 1 + k, n - 1 + (k * 2) // 3, n - 1 + k // 3)
    speed = velocity.dv * np.sqrt(k**2 + ((k * 2) // 3) ** 2 + (k // 3) ** 2)
    values = table[idx]
    if np.any(values <= 0):
        return math.nan
    return float(np.polyfit(np.log(speed), np.log(values), 1)[0])


def loss_convolution(f_cell: np.ndarray, kernel: CollisionKernel, quad: SphereQuadrature,
                     velocity: VelocityGrid, mode: str = "classical") -> np.ndarray:
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    return _kernels.loss_factor(f_cell, a_table(kernel, quad, velocity),
                                inverse_gamma(velocity, mode), velocity.dv)


def pad(f_cell: np.ndarray) -> np.ndarray:
    return np.pad(np.asarray(f_cell, dtype=float), 1)


def _gain(f_cell, kernel, quad, velocity, mode, want_d):
    nodes, weights, mult = quad.reduced()
    gain, d, truncated, skipped = _kernels.gain_and_dissipation(
        pad(f_cell), nodes, weights, kernel.code, float(kernel.alpha), float(kernel.b0),
        inverse_gamma(velocity, mode), velocity.dv, want_d)
    return gain, d, truncated * mult, skipped * mult


def collision_operator(f_cell: np.ndarray, kernel: CollisionKernel, quad: SphereQuadrature,
                       velocity: VelocityGrid, mode: str = "classical") -> CollisionOutput:
    """Gain, loss and loss factor for one spatial cell."""
    _check_mode(mode)
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    if not f_cell.any():
        z = np.zeros_like(f_cell)
        return CollisionOutput(z, z.copy(), z.copy(), 0.0)
    gain, _, truncated, _ = _gain(f_cell, kernel, quad, velocity, mode, False)
    lf = loss_convolution(f_cell, kernel, quad, velocity, mode)
    return CollisionOutput(gain, f_cell * lf, lf, truncated)


def invariant_basis(velocity: VelocityGrid, mode: str = "classical") -> np.ndarray:
    """Collision invariants ``1, xi_1, xi_2, xi_3`` and the energy density, shape (5, N, N, N).

    The energy invariant is ``|xi|^2`` in classical mode and
    ``sqrt(1 + |xi|^2)`` in relativistic mode.
    """
    _check_mode(mode)
    mesh = velocity.mesh
    energy = velocity.speed2 if mode == "classical" else np.sqrt(1.0 + velocity.speed2)
    return np.stack([np.ones_like(energy), mesh[..., 0], mesh[..., 1], mesh[..., 2], energy])


def invariant_moments(q: np.ndarray, velocity: VelocityGrid, mode: str = "classical") -> np.ndarray:
    basis = invariant_basis(velocity, mode)
    return np.tensordot(basis, q, axes=3) * velocity.cell_volume


def conservative_projection(out: CollisionOutput, velocity: VelocityGrid,
                            mode: str = "classical", weight: np.ndarray | None = None
                            ) -> CollisionOutput:
    """Remove the projection of ``Q`` onto the collision invariants.

    With ``weight=None`` this is the orthogonal projection in the plain
    discrete L2 inner product, so the correction is a global polynomial
    ``c . psi``.  With a nonnegative ``weight`` the projection is orthogonal
    in the inner product weighted by ``1/weight`` and the correction becomes
    ``weight * (c . psi)``; passing the density itself keeps the correction
    proportional to ``f`` and so it cannot push empty tails negative.
    Either way ``sum Q~ psi dv^3 = 0`` for all five invariants.
    """
    basis = invariant_basis(velocity, mode)
    vol = velocity.cell_volume
    flat = basis.reshape(5, -1)
    w = np.ones(flat.shape[1]) if weight is None else np.asarray(weight, dtype=float).ravel()
    if np.any(w < 0):
        raise ProjectionError("projection weight must be nonnegative")
    gram = (flat * w) @ flat.T * vol
    if not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > 1e13:
        raise ProjectionError("Gram matrix of collision invariants is singular")
    q = out.raw
    correction = np.zeros_like(q)
    # two passes: the second removes the rounding residue of the first
    for _ in range(2):
        rhs = flat @ (q - correction).ravel() * vol
        coef = np.linalg.solve(gram, rhs)
        correction = correction + (w * (coef @ flat)).reshape(q.shape)
    return replace(out, correction=correction)


def discrete_maxwellian(f_cell: np.ndarray, velocity: VelocityGrid, mode: str = "classical",
                        tol: float = 1e-14, max_iter: int = 60) -> np.ndarray:
    """``exp(lambda . psi)`` on the lattice with the same invariant moments as ``f_cell``.

    This is the minimizer of ``sum f ln f`` among lattice functions with the
    given discrete mass, momentum and energy.  ``lambda`` solves the convex
    dual problem by damped Newton iteration started from the fitted
    Maxwellian.
    """
    _check_mode(mode)
    f_cell = np.asarray(f_cell, dtype=float)
    if not f_cell.any():
        return np.zeros_like(f_cell)
    vol = velocity.cell_volume
    flat = invariant_basis(velocity, mode).reshape(5, -1)
    target = flat @ f_cell.ravel() * vol
    p = fit_moments(f_cell, velocity)
    u = np.array(p.velocity)
    t = p.temperature
    a0 = math.log(p.density * (2.0 * math.pi * t) ** -1.5) - float(u @ u) / (2.0 * t)
    if mode == "classical":
        lam = np.array([a0, *(u / t), -0.5 / t])
    else:
        # gamma - 1 ~ |xi|^2 / 2 near rest
        lam = np.array([a0 + 1.0 / t, *(u / t), -1.0 / t])

    def dual(lam):
        expo = lam @ flat
        return float(np.exp(expo).sum() * vol - lam @ target), expo

    phi, expo = dual(lam)
    for _ in range(max_iter):
        m = np.exp(expo)
        grad = flat @ m * vol - target
        hess = (flat * m) @ flat.T * vol
        step = np.linalg.solve(hess, grad)
        h = 1.0
        while True:
            trial, texpo = dual(lam - h * step)
            if trial <= phi + 1e-15 * abs(phi) or h < 1e-8:
                break
            h *= 0.5
        lam, phi, expo = lam - h * step, trial, texpo
        if np.max(np.abs(h * step)) < tol * max(1.0, np.max(np.abs(lam))):
            break
    else:
        raise DegenerateCellError("discrete Maxwellian fit did not converge")
    return np.exp(expo).reshape(f_cell.shape)


class EquilibriumCorrection:
    """Makes the discrete Maxwellian an exact fixed point of the collision step.

    The term subtracted from ``Q(f)`` is ``f * Q(M) / M`` where ``M`` is the
    discrete Maxwellian with the moments of ``f``.  It vanishes where ``f``
    does and cancels ``Q(M)`` exactly when ``f = M``, so the interpolation
    residual of the operator no longer moves the equilibrium away from the
    minimizer of the entropy.  Ratios are cached per cell and reused while
    the cell's invariant moments agree to ``rtol``.
    """

    def __init__(self, kernel: CollisionKernel, quad: SphereQuadrature, velocity: VelocityGrid,
                 mode: str = "classical", rtol: float = 1e-12):
        _check_mode(mode)
        self.kernel, self.quad, self.velocity, self.mode = kernel, quad, velocity, mode
        self.rtol = rtol
        self._cache: dict = {}
        self.evaluations = 0

    def ratio(self, f_cell: np.ndarray, key=None) -> np.ndarray:
        moments = invariant_moments(f_cell, self.velocity, self.mode)
        hit = self._cache.get(key)
        if hit is not None:
            cached, r = hit
            if np.all(np.abs(cached - moments) <= self.rtol * np.max(np.abs(cached))):
                return r
        m = discrete_maxwellian(f_cell, self.velocity, self.mode)
        out = collision_operator(m, self.kernel, self.quad, self.velocity, self.mode)
        q = out.gain - out.loss
        r = np.zeros_like(m)
        pos = m > 1e-300
        r[pos] = q[pos] / m[pos]
        self.evaluations += 1
        if key is not None:
            self._cache[key] = (moments, r)
        return r

    def apply(self, out: CollisionOutput, f_cell: np.ndarray, key=None) -> CollisionOutput:
        if not np.asarray(f_cell).any():
            return out
        return replace(out, equilibrium=f_cell * self.ratio(f_cell, key))


def weak_form(f_cell: np.ndarray, zeta: Callable[[np.ndarray], np.ndarray],
              kernel: CollisionKernel, quad: SphereQuadrature, velocity: VelocityGrid,
              mode: str = "classical") -> WeakFormCheck:
    """Both sides of the symmetrized weak form of ``Q``.

    ``lhs = sum Q(f, f) zeta dv^3`` uses the production operator.  ``rhs`` is
    ``1/4 sum b (f' f'_* - f f_*)(zeta + zeta_* - zeta' - zeta'_*) dv^6``,
    enumerated pair by pair with ``zeta`` evaluated exactly at the
    post-collision velocities and ``f'`` read by trilinear interpolation
    (zero off the hull).
    """
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    out = collision_operator(f_cell, kernel, quad, velocity, mode)
    lhs = float(np.sum((out.gain - out.loss) * zeta(velocity.mesh)) * velocity.cell_volume)

    mesh = velocity.mesh.reshape(-1, 3)
    fv = f_cell.ravel()
    zv = zeta(mesh)
    invg = inverse_gamma(velocity, mode).ravel()
    fp = pad(f_cell)
    total = 0.0
    for a in range(mesh.shape[0]):
        xi = mesh[a]
        for w, om in zip(quad.weights, quad.nodes):
            b = kernel(xi - mesh, om) * invg[a] * invg
            xp, xps = collide_pair(xi, mesh, om)
            fpv = _interp(fp, xp, velocity)
            fpsv = _interp(fp, xps, velocity)
            dz = zv[a] + zv - zeta(xp) - zeta(xps)
            total += w * np.sum(b * (fpv * fpsv - fv[a] * fv) * dz)
    rhs = 0.25 * total * velocity.cell_volume**2
    return WeakFormCheck(lhs, float(rhs))


def _interp(fp: np.ndarray, points: np.ndarray, velocity: VelocityGrid) -> np.ndarray:
    p = (points + velocity.vmax) / velocity.dv
    return _kernels.trilinear_points(fp, np.ascontiguousarray(p[:, 0]),
                                     np.ascontiguousarray(p[:, 1]), np.ascontiguousarray(p[:, 2]))


def interpolate(f_cell: np.ndarray, points: np.ndarray, velocity: VelocityGrid) -> np.ndarray:
    """Trilinear interpolation of a velocity slice at physical points ``(..., 3)``."""
    points = np.asarray(points, dtype=float)
    flat = points.reshape(-1, 3)
    return _interp(pad(f_cell), flat, velocity).reshape(points.shape[:-1])


def entropy_dissipation(f_cell: np.ndarray, kernel: CollisionKernel, quad: SphereQuadrature,
                        velocity: VelocityGrid, mode: str = "classical") -> Dissipation:
    """``D(f) = 1/4 sum b (f' f'_* - f f_*) ln(f' f'_* / (f f_*)) dv^6``.

    Terms whose post-collision velocities leave the hull are omitted and
    counted in ``truncated``; terms where exactly one of the two products
    vanishes are omitted and counted in ``skipped``.
    """
    _check_mode(mode)
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    if not f_cell.any():
        return Dissipation(0.0, 0.0, 0.0)
    _, d, truncated, skipped = _gain(f_cell, kernel, quad, velocity, mode, True)
    return Dissipation(float(d), float(skipped), float(truncated))


def gain_with_dissipation(f_cell, kernel, quad, velocity, mode="classical"):
    """Collision output and dissipation from a single pass over the terms."""
    _check_mode(mode)
    f_cell = np.ascontiguousarray(f_cell, dtype=float)
    if not f_cell.any():
        z = np.zeros_like(f_cell)
        return CollisionOutput(z, z.copy(), z.copy(), 0.0), Dissipation(0.0, 0.0, 0.0)
    gain, d, truncated, skipped = _gain(f_cell, kernel, quad, velocity, mode, True)
    lf = loss_convolution(f_cell, kernel, quad, velocity, mode)
    return (CollisionOutput(gain, f_cell * lf, lf, truncated),
            Dissipation(float(d), float(skipped), float(truncated)))
