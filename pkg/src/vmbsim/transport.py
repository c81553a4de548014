"""Vlasov transport by semi-Lagrangian sub-steps.

``advect_space`` shifts every velocity column along the periodic x axis with
4-point cubic Lagrange interpolation.  ``advect_velocity`` traces every
velocity node backwards through the Lorentz flow frozen in each cell and
reads the old slice by trilinear interpolation against a zero ghost layer.
Negative values produced by the cubic stencil are clipped to zero; the mass
added by clipping and the mass that leaves the velocity box are accumulated
in a ``Tally``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .grid import DistributionFunction, Renormalizer, SpatialGrid, VelocityGrid
from .relativistic import xi_hat

MODES = ("classical", "relativistic")


@dataclass
class Tally:
    """Mass bookkeeping of the transport and collision sub-steps.

    ``clipped`` is mass created by zeroing negative values, ``removed`` is
    the net mass lost by velocity advection (outflow through the velocity
    boundary plus interpolation defect).  ``overshoot`` is the largest ratio
    ``max f_after / max f_before`` seen by any sub-step.  ``truncated`` and
    ``skipped`` count collision terms dropped at the hull and entropy terms
    skipped, and ``entropy_budget`` sums the entropy increases produced by
    transport sub-steps.
    """

    clipped: float = 0.0
    removed: float = 0.0
    overshoot: float = 1.0
    truncated: float = 0.0
    skipped: float = 0.0
    entropy_budget: float = 0.0

    @property
    def net_removed(self) -> float:
        """Mass to add back to the current total to recover the initial total."""
        return self.removed - self.clipped

    def note_overshoot(self, before: float, after: float) -> None:
        if before > 0:
            self.overshoot = max(self.overshoot, after / before)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise DomainError(f"unknown transport mode {mode!r}")


def spatial_speed(velocity: VelocityGrid, mode: str = "classical") -> np.ndarray:
    """x-component of the characteristic speed at every node, shape (N, N, N)."""
    _check_mode(mode)
    if mode == "classical":
        return np.broadcast_to(velocity.axis[:, None, None], (velocity.nv,) * 3).copy()
    return xi_hat(velocity.mesh)[..., 0]


def _cubic_weights(phi: np.ndarray) -> tuple[np.ndarray, ...]:
    # Lagrange basis on the points -1, 0, 1, 2 evaluated at phi in [0, 1)
    wm = -phi * (phi - 1.0) * (phi - 2.0) / 6.0
    w0 = (phi + 1.0) * (phi - 1.0) * (phi - 2.0) / 2.0
    w1 = -(phi + 1.0) * phi * (phi - 2.0) / 2.0
    w2 = (phi + 1.0) * phi * (phi - 1.0) / 6.0
    return wm, w0, w1, w2


def shift_periodic(values: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``out[i, m] = values(i - shift[m])`` by periodic cubic interpolation.

    ``values`` has shape ``(N_x, M)`` and ``shift`` (in cells) shape ``(M,)``.
    Shifts within ``1e-12`` relative of an integer are snapped to it, so
    lattice-aligned shifts reproduce a circular shift bitwise.
    """
    nx = values.shape[0]
    pos = -np.asarray(shift, dtype=float)
    near = np.round(pos)
    pos = np.where(np.abs(pos - near) <= 1e-12 * np.maximum(1.0, np.abs(pos)), near, pos)
    base = np.floor(pos)
    phi = pos - base
    base = base.astype(np.int64)
    rows = np.arange(nx)[:, None]
    out = np.zeros_like(values)
    for offset, w in zip((-1, 0, 1, 2), _cubic_weights(phi)):
        idx = np.mod(rows + base[None, :] + offset, nx)
        out += w[None, :] * np.take_along_axis(values, idx, axis=0)
    return out


def advect_space(f: DistributionFunction, dt: float, mode: str = "classical",
                 tally: Tally | None = None) -> DistributionFunction:
    """Free streaming ``f(x, xi) <- f(x - v_1(xi) dt, xi)`` on the periodic grid."""
    if dt == 0:
        return f.copy()
    speed = spatial_speed(f.velocity, mode)
    nx = f.space.nx
    flat = f.values.reshape(nx, -1)
    out = shift_periodic(flat, speed.ravel() * dt / f.space.dx).reshape(f.values.shape)
    return _clip(f, out, tally)


def _clip(f: DistributionFunction, out: np.ndarray, tally: Tally | None) -> DistributionFunction:
    neg = out < 0.0
    if neg.any():
        if tally is not None:
            tally.clipped += float(-out[neg].sum() * f.phase_volume)
        out[neg] = 0.0
    if tally is not None:
        tally.note_overshoot(f.values.max(initial=0.0), out.max(initial=0.0))
    return f.with_values(out)


def _rotate(xi: np.ndarray, axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    # Rodrigues rotation of xi about the unit vector axis by angle
    c = np.cos(angle)[..., None]
    s = np.sin(angle)[..., None]
    dot = np.sum(axis * xi, axis=-1, keepdims=True)
    return xi * c + np.cross(axis, xi) * s + axis * dot * (1.0 - c)


def lorentz_flow(xi, E_local, B_local, dt: float, mode: str = "classical") -> np.ndarray:
    """One step of ``d xi / dt = E + v(xi) x B`` as kick, exact rotation, kick.

    The rotation about ``B`` has angle ``-|B| dt`` (divided by ``gamma`` in
    relativistic mode, where ``gamma`` is constant during the rotation).
    Calling with ``-dt`` inverts the step exactly in exact arithmetic.
    """
    _check_mode(mode)
    xi = np.asarray(xi, dtype=float)
    E = np.asarray(E_local, dtype=float)
    B = np.asarray(B_local, dtype=float)
    half = 0.5 * dt
    v = xi + half * E
    bnorm = np.sqrt(np.sum(B * B, axis=-1))
    if np.any(bnorm > 0):
        axis = np.where(bnorm[..., None] > 0, B / np.where(bnorm > 0, bnorm, 1.0)[..., None], 0.0)
        angle = -bnorm * dt
        if mode == "relativistic":
            angle = angle / np.sqrt(1.0 + np.sum(v * v, axis=-1))
        v = _rotate(v, np.broadcast_to(axis, v.shape), np.broadcast_to(angle, v.shape[:-1]))
    return v + half * E


def advect_velocity(f: DistributionFunction, E: np.ndarray, B: np.ndarray, dt: float,
                    mode: str = "classical", tally: Tally | None = None) -> DistributionFunction:
    """Per-cell backward semi-Lagrangian step of the Lorentz force term.

    ``E`` and ``B`` are cell-centered ``(N_x, 3)`` arrays frozen over the
    step.  ``f`` is extended by zero beyond the lattice, so values traced
    from outside interpolate towards zero over one cell and vanish further out.
    """
    _check_mode(mode)
    E = np.asarray(E, dtype=float).reshape(f.space.nx, 3)
    B = np.asarray(B, dtype=float).reshape(f.space.nx, 3)
    vel = f.velocity
    mesh = vel.mesh.reshape(-1, 3)
    idx = np.stack(np.meshgrid(*(np.arange(vel.nv),) * 3, indexing="ij"), -1).reshape(-1, 3)
    out = np.empty_like(f.values)
    for i in range(f.space.nx):
        if dt == 0 or (not E[i].any() and not B[i].any()):
            out[i] = f.values[i]
            continue
        origin = lorentz_flow(mesh, E[i], B[i], -dt, mode)
        p = idx + (origin - mesh) / vel.dv
        out[i] = _kernels.trilinear_points(
            np.pad(f.values[i], 1), np.ascontiguousarray(p[:, 0]),
            np.ascontiguousarray(p[:, 1]), np.ascontiguousarray(p[:, 2]),
            True).reshape(out.shape[1:])
    if tally is not None:
        tally.removed += float((f.values.sum() - out.sum()) * f.phase_volume)
    return _clip(f, out, tally)


# ------------------------------------------------------------ weak residual

@dataclass(frozen=True)
class TensorBump:
    """Test function ``phi(x, xi) = psi(x; x0, rx) * prod_a psi(xi_a; c_a, r_v)``.

    ``psi(s; c, r) = exp(-1 / (1 - ((s - c) / r)^2))`` inside ``|s - c| < r``
    (periodic distance in x).
    """

    x0: float
    rx: float
    center: tuple[float, float, float]
    rv: float

    def __call__(self, x: np.ndarray, xi: np.ndarray, length: float) -> np.ndarray:
        d = np.mod(x - self.x0 + 0.5 * length, length) - 0.5 * length
        out = _bump(d / self.rx)
        for a in range(3):
            out = out * _bump((xi[..., a] - self.center[a]) / self.rv)
        return out


def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros(s.shape)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def default_battery(space: SpatialGrid, velocity: VelocityGrid) -> list[TensorBump]:
    """Eight bumps: two x positions times four velocity centers inside the box."""
    L = space.length
    r = 0.45 * velocity.vmax
    centers = [(0.0, 0.0, 0.0), (0.5 * r, 0.0, 0.0), (-0.5 * r, 0.25 * r, 0.0), (0.0, -0.5 * r, 0.5 * r)]
    return [TensorBump(x0, 0.3 * L, c, r) for x0 in (0.25 * L, 0.7 * L) for c in centers]


def characteristic_map(space: SpatialGrid, velocity: VelocityGrid, E: np.ndarray, B: np.ndarray,
                       tau: float, mode: str = "classical") -> tuple[np.ndarray, np.ndarray]:
    """Image of every phase-space node under drift(tau/2), kick(tau), drift(tau/2).

    Fields are cell-centered and interpolated linearly (periodically) to the
    drifted position.  Each sub-map preserves phase-space volume.
    """
    x = space.centers[:, None]
    xi = velocity.mesh.reshape(1, -1, 3)
    v = _speed_of(xi, mode)
    x1 = x + 0.5 * tau * v
    Ex = _periodic_linear(space, E, x1)
    Bx = _periodic_linear(space, B, x1)
    xi2 = lorentz_flow(np.broadcast_to(xi, Ex.shape), Ex, Bx, tau, mode)
    x2 = x1 + 0.5 * tau * _speed_of(xi2, mode)
    return x2, xi2


def _speed_of(xi: np.ndarray, mode: str) -> np.ndarray:
    if mode == "classical":
        return xi[..., 0]
    return xi_hat(xi)[..., 0]


def _periodic_linear(space: SpatialGrid, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(space.nx, 3)
    s = np.mod(x, space.length) / space.dx - 0.5
    lo = np.floor(s)
    t = (s - lo)[..., None]
    lo = lo.astype(np.int64)
    return (1.0 - t) * values[np.mod(lo, space.nx)] + t * values[np.mod(lo + 1, space.nx)]


def renormalized_residual(f_before: DistributionFunction, f_after: DistributionFunction,
                          E: np.ndarray, B: np.ndarray, Q_value: np.ndarray | None, dt: float,
                          beta: Renormalizer, mode: str = "classical", f_mid: np.ndarray | None = None,
                          battery: list[TensorBump] | None = None) -> float:
    """Largest weak residual of the renormalized equation over a test battery.

    For each test function ``phi`` the residual is the Lagrangian weak form

        ( <beta(f_after), phi> - <beta(f_before), phi o Phi_dt> ) / dt
          - <beta'(f_mid) Q, phi o Phi_{dt/2}>

    where ``Phi_tau`` is ``characteristic_map``; since ``Phi`` preserves
    volume, this vanishes for exact solutions and is ``O(dt^2)`` for a
    second-order scheme.  ``E`` and ``B`` are time-centered cell values and
    ``f_mid`` is the state the collision term was evaluated on (defaults to
    the average of the end states).
    """
    if dt <= 0:
        raise DomainError("residual needs a positive time step")
    space, vel = f_before.space, f_before.velocity
    battery = battery or default_battery(space, vel)
    vol = f_before.phase_volume
    nx = space.nx
    b0 = beta(f_before.values).reshape(nx, -1)
    b1 = beta(f_after.values).reshape(nx, -1)
    x_full, xi_full = characteristic_map(space, vel, E, B, dt, mode)
    xg = np.broadcast_to(space.centers[:, None], b1.shape)
    xig = np.broadcast_to(vel.mesh.reshape(1, -1, 3), b1.shape + (3,))
    source = None
    if Q_value is not None:
        fm = f_mid if f_mid is not None else 0.5 * (f_before.values + f_after.values)
        source = (beta.derivative(fm) * Q_value).reshape(nx, -1)
        x_half, xi_half = characteristic_map(space, vel, E, B, 0.5 * dt, mode)
    worst = 0.0
    for phi in battery:
        r = np.sum(b1 * phi(xg, xig, space.length)) - np.sum(b0 * phi(x_full, xi_full, space.length))
        r /= dt
        if source is not None:
            r -= np.sum(source * phi(x_half, xi_half, space.length))
        worst = max(worst, abs(r * vol))
    return worst
