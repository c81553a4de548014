"""Maxwell's equations reduced to one periodic space dimension.

Staggering: all components of ``E`` live at cell faces ``x = i dx``; the
transverse magnetic components ``B_2, B_3`` live at cell centers; ``B_1``
is stored per cell and never updated, since ``d_x B_1 = 0`` forces it to be
constant.  With ``d_y = d_z = 0`` the curl equations become

    dE_1/dt = -j_1            dE_2/dt = -dB_3/dx - j_2     dE_3/dt = dB_2/dx - j_3
                              dB_2/dt =  dE_3/dx           dB_3/dt = -dE_2/dx

and a step is the time-synchronized leapfrog: half magnetic update, full
electric update with the time-centered current, half magnetic update.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .grid import SpatialGrid

FIELDS_HEADER = ["x", "E1", "E2", "E3", "B1", "B2", "B3"]


@dataclass
class EMField:
    """Electric field at faces and magnetic field at centers, each ``(N_x, 3)``."""

    E: np.ndarray
    B: np.ndarray
    space: SpatialGrid

    def __post_init__(self):
        shape = (self.space.nx, 3)
        self.E = np.array(self.E, dtype=float).reshape(shape)
        self.B = np.array(self.B, dtype=float).reshape(shape)
        if not (np.all(np.isfinite(self.E)) and np.all(np.isfinite(self.B))):
            raise DataError("fields contain non-finite values")

    @classmethod
    def zeros(cls, space: SpatialGrid) -> "EMField":
        return cls(np.zeros((space.nx, 3)), np.zeros((space.nx, 3)), space)

    def copy(self) -> "EMField":
        return EMField(self.E.copy(), self.B.copy(), self.space)

    def centered(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centered ``E`` (face average) and ``B``."""
        return 0.5 * (self.E + np.roll(self.E, -1, axis=0)), self.B.copy()


def face_current(j: np.ndarray) -> np.ndarray:
    """Average cell-centered current onto the faces: ``(j_{i-1} + j_i) / 2``."""
    j = np.asarray(j, dtype=float)
    return 0.5 * (np.roll(j, 1, axis=0) + j)


def check_cfl(space: SpatialGrid, dt: float) -> None:
    if abs(dt) > space.dx * (1.0 + 1e-12):
        raise ConfigError(f"Maxwell CFL violated: dt={dt} > dx={space.dx}")


def _half_b(E: np.ndarray, B: np.ndarray, h: float, dx: float) -> None:
    dE = (np.roll(E, -1, axis=0) - E) / dx
    B[:, 1] += h * dE[:, 2]
    B[:, 2] -= h * dE[:, 1]


def maxwell_step(fields: EMField, j: np.ndarray, dt: float) -> EMField:
    """Advance the fields by ``dt`` with the cell-centered current ``j`` at mid-step."""
    space = fields.space
    check_cfl(space, dt)
    dx = space.dx
    E = fields.E.copy()
    B = fields.B.copy()
    jf = face_current(np.asarray(j, dtype=float).reshape(space.nx, 3))
    _half_b(E, B, 0.5 * dt, dx)
    dB = (B - np.roll(B, 1, axis=0)) / dx
    E[:, 0] -= dt * jf[:, 0]
    E[:, 1] += dt * (-dB[:, 2] - jf[:, 1])
    E[:, 2] += dt * (dB[:, 1] - jf[:, 2])
    _half_b(E, B, 0.5 * dt, dx)
    return EMField(E, B, space)


def gauss_divergence(fields: EMField) -> np.ndarray:
    """Discrete ``dE_1/dx`` at cell centers."""
    E1 = fields.E[:, 0]
    return (np.roll(E1, -1) - E1) / fields.space.dx


def constraint_residuals(fields: EMField, rho: np.ndarray, background: float = 0.0
                         ) -> tuple[float, float]:
    """``(max |dE_1/dx - (rho - background)|, max B_1 - min B_1)``.

    ``background`` is a uniform neutralizing charge; on a periodic line the
    discrete divergence sums to zero, so Gauss's law can only hold for the
    net charge ``rho - mean(rho)``.
    """
    gauss = float(np.max(np.abs(gauss_divergence(fields) - (np.asarray(rho) - background))))
    b1 = fields.B[:, 0]
    return gauss, float(b1.max() - b1.min())


def gauss_consistent_e1(space: SpatialGrid, rho: np.ndarray, background: float | None = None
                        ) -> np.ndarray:
    """Face values of ``E_1`` with ``dE_1/dx = rho - background`` and zero mean.

    ``background`` defaults to the mean of ``rho``.
    """
    rho = np.asarray(rho, dtype=float)
    if background is None:
        background = float(rho.mean())
    e1 = np.concatenate([[0.0], np.cumsum((rho - background) * space.dx)[:-1]])
    return e1 - e1.mean()


def gauss_correction(fields: EMField, rho: np.ndarray) -> EMField:
    """Boris-style correction: replace ``E_1`` by the Gauss-consistent profile with the same mean.

    Optional and off by default, since it hides the Gauss residual that the
    diagnostics exist to report.  The transverse fields are untouched.
    """
    out = fields.copy()
    out.E[:, 0] = gauss_consistent_e1(fields.space, rho) + fields.E[:, 0].mean()
    return out


def field_invariants(fields: EMField) -> tuple[float, np.ndarray]:
    """Field energy ``sum (|E|^2 + |B|^2) dx`` and momentum ``sum E x B dx``."""
    dx = fields.space.dx
    energy = float((np.sum(fields.E**2) + np.sum(fields.B**2)) * dx)
    Ec, Bc = fields.centered()
    momentum = np.cross(Ec, Bc).sum(axis=0) * dx
    return energy, momentum


def field_norms(fields: EMField, p_e: float = 5.0, p_b: float = 6.0) -> tuple[float, float]:
    """Discrete ``||E||_{L^p_e}`` and ``||B||_{L^p_b}`` of the pointwise magnitudes over the cell.

    Logged per step only: uniform bounds on these norms are hypotheses on
    solution families that a single run can record but not verify.
    """
    dx = fields.space.dx
    e = np.sqrt(np.sum(fields.E**2, axis=1))
    b = np.sqrt(np.sum(fields.B**2, axis=1))
    return float((np.sum(e**p_e) * dx) ** (1.0 / p_e)), float((np.sum(b**p_b) * dx) ** (1.0 / p_b))


def modified_energy(fields: EMField, dt: float) -> float:
    """Energy conserved exactly by the vacuum leapfrog step.

    ``sum |E|^2 + |B|^2 - (dt^2 / 4) |d_h E_perp|^2`` times ``dx``, where
    ``d_h E_perp`` is the centered difference of the transverse electric field.
    """
    dx = fields.space.dx
    E = fields.E
    dE = (np.roll(E, -1, axis=0) - E) / dx
    energy, _ = field_invariants(fields)
    return energy - 0.25 * dt * dt * float(np.sum(dE[:, 1:] ** 2)) * dx


def charge_continuity_residual(rho_prev: np.ndarray, rho_next: np.ndarray, j_mid: np.ndarray,
                               dt: float, dx: float) -> float:
    """``max |(rho_next - rho_prev) / dt + d_h j_1|`` with the face current used by Maxwell."""
    jf = face_current(np.asarray(j_mid, dtype=float).reshape(-1, 3))[:, 0]
    div = (np.roll(jf, -1) - jf) / dx
    return float(np.max(np.abs((np.asarray(rho_next) - np.asarray(rho_prev)) / dt + div)))


def write_fields_csv(path: str | Path, fields: EMField) -> None:
    """Cell-centered field values, one row per cell."""
    Ec, Bc = fields.centered()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS_HEADER)
        for i, x in enumerate(fields.space.centers):
            w.writerow([repr(float(x)), *(repr(float(c)) for c in Ec[i]),
                        *(repr(float(c)) for c in Bc[i])])
