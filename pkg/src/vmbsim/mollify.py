"""Mollifiers and commutator studies.

The base profile is ``kappa(y) = c_n exp(-1 / (1 - |y|^2))`` on the unit ball
of R^n, normalized to unit mass, and ``kappa_eps(y) = eps^-n kappa(y / eps)``.

Two discretizations are used.  ``mollify`` convolves lattice data with a
sampled and discretely renormalized stencil.  The commutator studies work on
a smooth callable density instead: convolutions are evaluated by a tensor
Gauss-Legendre rule scaled to the mollifier support, and gradients by the
4th-order centered difference

    D_h g(p) = (-g(p + 2h) + 8 g(p + h) - 8 g(p - h) + g(p - 2h)) / (12 h)

on a refined window lattice.  Because ``D_h`` commutes with translations,
the discrete commutators reduce exactly to sums of coefficient differences,
so the only error left is the one the study measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, ndimage

from .errors import ConfigError, StudyError
from .grid import DistributionFunction, SpatialGrid, VelocityGrid

AXES = ("x", "xi", "both")
STENCIL = ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0))


def _profile(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=8)
def normalization(dim: int) -> float:
    """``c_n`` with ``c_n int_{B_1} exp(-1 / (1 - |y|^2)) dy = 1``."""
    if dim not in (1, 2, 3):
        raise ConfigError(f"mollifier dimension must be 1, 2 or 3, got {dim}")
    sphere = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[dim]
    radial, _ = integrate.quad(lambda r: r ** (dim - 1) * math.exp(-1.0 / (1.0 - r * r)),
                               0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return 1.0 / (sphere * radial)


@dataclass(frozen=True)
class Mollifier:
    """``kappa_eps`` in ``dim`` dimensions."""

    eps: float
    dim: int = 3

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"mollifier scale must be positive, got {self.eps}")
        normalization(self.dim)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r = np.abs(y) if self.dim == 1 else np.sqrt(np.sum(y * y, axis=-1))
        return normalization(self.dim) * _profile(r / self.eps) / self.eps**self.dim

    def derivative_l1(self) -> float:
        """``||kappa_eps'||_{L^1}`` in one dimension.

        The profile is even and decreasing in ``|y|``, so the total variation
        is twice the peak value: ``2 c_1 e^{-1} / eps``.
        """
        if self.dim != 1:
            raise ConfigError("derivative_l1 is defined for the one-dimensional mollifier")
        return 2.0 * normalization(1) * math.exp(-1.0) / self.eps

    def lattice_weights(self, h: float) -> np.ndarray:
        """Samples on a lattice of spacing ``h`` renormalized so ``sum w h^n = 1``.

        The returned array has odd side ``2r + 1`` with ``r = ceil(eps / h) - 1``.
        """
        if self.eps < 2.0 * h * (1.0 - 1e-12):
            raise ConfigError(f"mollifier scale {self.eps} is not resolved by spacing {h}")
        r = int(math.ceil(self.eps / h - 1e-12)) - 1
        offs = np.arange(-r, r + 1) * h
        grids = np.meshgrid(*(offs,) * self.dim, indexing="ij")
        y = np.stack(grids, axis=-1)
        w = self(y[..., 0] if self.dim == 1 else y)
        return w / (w.sum() * h**self.dim)

    def quadrature(self, order: int = 6) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``(Q, dim)`` and weights summing to one for ``int kappa_eps(y) g(y) dy``.

        Tensor Gauss-Legendre nodes on ``[-eps, eps]^dim`` weighted by the
        profile; nodes outside the ball carry zero weight and are dropped.
        The node set is symmetric under reflections and axis permutations,
        so all odd moments vanish and the second moments are isotropic.
        """
        nodes, weights = unit_quadrature(order, self.dim)
        return self.eps * nodes, weights


@lru_cache(maxsize=16)
def unit_quadrature(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    s, w = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*(s,) * dim, indexing="ij")
    y = np.stack(grids, axis=-1).reshape(-1, dim)
    wt = np.ones(1)
    for _ in range(dim):
        wt = np.multiply.outer(wt, w)
    wt = wt.ravel() * _profile(np.sqrt(np.sum(y * y, axis=-1)))
    keep = wt > 0
    y, wt = y[keep], wt[keep]
    y.setflags(write=False)
    wt = wt / wt.sum()
    wt.setflags(write=False)
    return y, wt


# ------------------------------------------------------------ lattice mollification

def _convolve_x(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    r = weights.size // 2
    out = np.zeros_like(values)
    for k, w in enumerate(weights):
        out += w * np.roll(values, k - r, axis=0)
    return out


def mollify(f: DistributionFunction, eps: float, axes: str = "both") -> DistributionFunction:
    """Convolve ``f`` with ``kappa_eps`` along x (periodic), xi (zero-extended) or both.

    Mass is preserved exactly along x; along xi, the part of the kernel
    reaching outside the velocity box is lost, as for outflow.
    """
    if axes not in AXES:
        raise ConfigError(f"axes must be one of {AXES}, got {axes!r}")
    values = f.values
    if axes in ("x", "both"):
        dx = f.space.dx
        w = Mollifier(eps, 1).lattice_weights(dx) * dx
        values = _convolve_x(values, w)
    if axes in ("xi", "both"):
        dv = f.velocity.dv
        w = Mollifier(eps, 3).lattice_weights(dv) * dv**3
        values = np.stack([ndimage.correlate(cell, w, mode="constant", cval=0.0)
                           for cell in values])
    return f.with_values(np.maximum(values, 0.0))


# ------------------------------------------------------------ commutators

Density = Callable[[np.ndarray, np.ndarray], np.ndarray]
FieldLike = Callable[[np.ndarray], np.ndarray] | Sequence[float] | np.ndarray


@dataclass(frozen=True)
class GaussianDensity:
    """Smooth test density ``(1 + a cos(k x)) rho (2 pi T)^{-3/2} exp(-|xi - u|^2 / 2T)``."""

    rho: float = 1.0
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: float = 1.0
    amplitude: float = 0.5
    wavenumber: float = 1.0

    def __call__(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        d = xi - np.asarray(self.u)
        g = np.exp(-np.sum(d * d, axis=-1) / (2.0 * self.temperature))
        g *= self.rho * (2.0 * math.pi * self.temperature) ** -1.5
        return (1.0 + self.amplitude * np.cos(self.wavenumber * x)) * g


@dataclass(frozen=True)
class Window:
    """Compact window ``[x_c - a, x_c + a] x (xi_c + [-b, b]^3)`` sampled on a lattice."""

    x_center: float = 0.0
    x_half: float = 1.0
    xi_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    xi_half: float = 1.5
    nx: int = 8
    nv: int = 9

    def __post_init__(self):
        if self.nx < 1 or self.nv < 1 or not (self.x_half > 0 and self.xi_half > 0):
            raise ConfigError("window needs positive extents and point counts")

    @classmethod
    def refined(cls, space: SpatialGrid, velocity: VelocityGrid, refine: int = 4,
                nx: int = 8, nv: int = 9, x_center: float | None = None,
                xi_center: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> "Window":
        """Window whose spacings are the solver spacings divided by ``refine``."""
        hx = space.dx / refine
        hv = velocity.dv / refine
        xc = 0.5 * space.length if x_center is None else x_center
        return cls(xc, 0.5 * nx * hx, tuple(xi_center), 0.5 * nv * hv, nx, nv)

    @property
    def hx(self) -> float:
        return 2.0 * self.x_half / self.nx

    @property
    def hv(self) -> float:
        return 2.0 * self.xi_half / self.nv

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center nodes: ``x`` of shape ``(nx,)`` and ``xi`` of shape ``(nv^3, 3)``."""
        x = self.x_center - self.x_half + (np.arange(self.nx) + 0.5) * self.hx
        s = -self.xi_half + (np.arange(self.nv) + 0.5) * self.hv
        g = np.stack(np.meshgrid(s, s, s, indexing="ij"), -1).reshape(-1, 3)
        return x, g + np.asarray(self.xi_center)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hv**3


def _field(value: FieldLike) -> Callable[[np.ndarray], np.ndarray]:
    if callable(value):
        return value
    const = np.asarray(value, dtype=float).reshape(3)
    return lambda x: np.broadcast_to(const, np.shape(x) + (3,))


def _diff(f: Density, x: np.ndarray, xi: np.ndarray, axis: int, h: float) -> np.ndarray:
    # axis 0 is x, axes 1..3 are the velocity components
    out = np.zeros(np.broadcast_shapes(x.shape, xi.shape[:-1]))
    for k, c in STENCIL:
        if axis == 0:
            out += c * f(x + k * h, xi)
        else:
            shift = np.zeros(3)
            shift[axis - 1] = k * h
            out += c * f(x, xi + shift)
    return out / h


def _quadrature_pairs(eps: float | None, mu: float, order: int):
    if eps is None or eps == 0:
        sx, wx = np.zeros(1), np.ones(1)
    else:
        n, w = unit_quadrature(order, 1)
        sx, wx = eps * n[:, 0], w
    if mu == 0:
        yv, wv = np.zeros((1, 3)), np.ones(1)
    else:
        yv, wv = Mollifier(mu, 3).quadrature(order)
    return sx, wx, yv, wv


def _check_scales(eps, mu):
    if mu < 0 or (eps is not None and eps < 0):
        raise ConfigError("mollifier scales must be nonnegative")


def commutator_velocity(f: Density, E: FieldLike, B: FieldLike, mu: float,
                        eps: float | None = None, window: Window | None = None,
                        order: int = 6) -> tuple[np.ndarray, float]:
    """``a . grad_xi (f * kappa) - kappa * (a . grad_xi f)`` with ``a = E(x) + xi x B(x)``.

    ``kappa`` is ``kappa_mu`` in xi, tensored with ``kappa_eps`` in x when
    ``eps`` is given.  With ``eps=None`` the continuum commutator vanishes for
    any x-dependent fields: the E part has constant coefficients in xi and
    the rotation generated by ``xi x B`` commutes with a radial mollifier.
    The tensor rule is only cube-symmetric and ``D_h`` is not an exact
    gradient, so the discrete value keeps an ``O(mu^2)`` residue.
    Returns the values on the window lattice, shape ``(nx, nv^3)``, and the
    discrete L1 norm over the window.
    """
    _check_scales(eps, mu)
    window = window or Window()
    Ef, Bf = _field(E), _field(B)
    x, xi = window.points()
    sx, wx, yv, wv = _quadrature_pairs(eps, mu, order)
    X = x[:, None]
    a0 = Ef(x)[:, None, :] + np.cross(xi[None], Bf(x)[:, None, :])
    h = window.hv
    out = np.zeros((x.size, xi.shape[0]))
    for s, ws in zip(sx, wx):
        xs = X - s
        Es, Bs = Ef(x - s)[:, None, :], Bf(x - s)[:, None, :]
        for y, w in zip(yv, wv):
            xis = xi[None] - y
            da = a0 - (Es + np.cross(xis, Bs))
            grad = np.stack([_diff(f, xs, xis, k, h) for k in (1, 2, 3)], axis=-1)
            out += (ws * w) * np.sum(da * grad, axis=-1)
    return out, float(np.abs(out).sum() * window.cell_volume)


def commutator_transport(f: Density, eps: float, mu: float, window: Window | None = None,
                         order: int = 6) -> tuple[float, float]:
    """``(xi . grad_x f) * kappa - xi . grad_x (f * kappa)`` with ``kappa = kappa_eps kappa_mu``.

    Returns the discrete L1 norm over the window and the bound
    ``(mu / eps) ||kappa_1'||_{L1} ||f||_{L1(K+)}``, where ``K+`` is the window
    enlarged by ``eps`` in x and ``mu`` in xi.  The bound follows from moving
    the x derivative onto ``kappa_eps`` and using ``|z_1| <= mu`` on the
    support of ``kappa_mu``.
    """
    _check_scales(eps, mu)
    if not eps > 0:
        raise ConfigError("commutator_transport needs eps > 0")
    window = window or Window()
    x, xi = window.points()
    sx, wx, yv, wv = _quadrature_pairs(eps, mu, order)
    X = x[:, None]
    out = np.zeros((x.size, xi.shape[0]))
    if mu > 0:
        for s, ws in zip(sx, wx):
            for y, w in zip(yv, wv):
                # (xi - y)_1 - xi_1 = -y_1
                out -= (ws * w * y[0]) * _diff(f, X - s, xi[None] - y, 0, window.hx)
    norm = float(np.abs(out).sum() * window.cell_volume)
    bound = (mu / eps) * Mollifier(1.0, 1).derivative_l1() * window_mass(f, window, eps, mu)
    return norm, bound


def window_mass(f: Density, window: Window, dx_pad: float, dv_pad: float, order: int = 12) -> float:
    """``int |f|`` over the window enlarged by ``dx_pad`` in x and ``dv_pad`` in xi."""
    a = window.x_half + dx_pad
    b = window.xi_half + dv_pad
    s, w = np.polynomial.legendre.leggauss(order)
    x = window.x_center + a * s
    v = b * s
    xi = np.stack(np.meshgrid(v, v, v, indexing="ij"), -1).reshape(-1, 3) + np.asarray(window.xi_center)
    wv = np.einsum("i,j,k->ijk", w, w, w).ravel() * b**3
    vals = np.abs(f(x[:, None], xi[None]))
    return float((w * a) @ vals @ wv)


@dataclass(frozen=True)
class ScheduleRow:
    eps: float
    mu: float
    i1: float
    i2: float
    bound: float

    @property
    def total(self) -> float:
        return self.i1 + self.i2


@dataclass(frozen=True)
class ScheduleStudy:
    rows: tuple[ScheduleRow, ...]
    slope_i1: float
    slope_i2: float
    slope_total: float

    def monotone(self, attr: str) -> bool:
        vals = [getattr(r, attr) for r in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))

    def bound_holds(self) -> bool:
        return all(r.i2 <= r.bound for r in self.rows)


def loglog_slope(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``; ``nan`` if any error is zero."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def schedule_study(f: Density, E: FieldLike, B: FieldLike, eps_list: Sequence[float],
                   window: Window | None = None, order: int = 6) -> ScheduleStudy:
    """Defects ``I1`` and ``I2`` along ``eps_list`` with ``mu = eps^2``.

    ``I1`` is the joint (x, xi) velocity commutator at ``(eps, mu)``; slopes
    are fitted against ``eps``.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise StudyError("schedule study needs at least three eps values")
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise StudyError("eps values must be positive and strictly decreasing")
    rows = []
    for eps in eps_list:
        mu = eps * eps
        _, i1 = commutator_velocity(f, E, B, mu, eps=eps, window=window, order=order)
        i2, bound = commutator_transport(f, eps, mu, window=window, order=order)
        rows.append(ScheduleRow(eps, mu, i1, i2, bound))
    return ScheduleStudy(tuple(rows), loglog_slope(eps_list, [r.i1 for r in rows]),
                         loglog_slope(eps_list, [r.i2 for r in rows]),
                         loglog_slope(eps_list, [r.total for r in rows]))
