"""Named configurations used by the acceptance suite and the CLI.

Resolution and quadrature choices are set by the runtime budgets of the
acceptance runs on a single core.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from ..grid import MaxwellianParams, VelocityGrid
from ..relativistic import xi_hat
from .config import SimConfig


def relaxation(steps: int = 200) -> SimConfig:
    """Homogeneous two-temperature bimodal start, ``N_x = 1``, ``N_v = 16``."""
    return SimConfig.from_dict({
        "grid": {"length": 1.0, "nx": 1, "vmax": 4.5, "nv": 16},
        "quad": {"polar": 4, "azimuth": 8},
        "initial": {"components": [
            {"density": 0.5, "velocity": [1.2, 0.0, 0.0], "temperature": 0.3},
            {"density": 0.5, "velocity": [-1.2, 0.0, 0.0], "temperature": 0.6},
        ]},
        "dt": "auto",
        "steps": steps,
        "experiment": "relax",
        "output": {"directory": "vmb_relax", "cadence": 1},
    })


def lattice_current(velocity: VelocityGrid, density: float, drift: float, temperature: float,
                    mode: str) -> float:
    """x-current ``sum m v_1 dv^3`` of a Maxwellian drifting along x, sampled on the lattice."""
    m = MaxwellianParams(density, (drift, 0.0, 0.0), temperature).evaluate(velocity.mesh)
    v = velocity.mesh if mode == "classical" else xi_hat(velocity.mesh)
    return float(np.sum(m * v[..., 0]) * velocity.cell_volume)


def balancing_drift(velocity: VelocityGrid, density: float, temperature: float, current: float,
                    mode: str) -> float:
    """Drift along x at which a Maxwellian carries the lattice current ``current``."""
    def residual(u):
        return lattice_current(velocity, density, u, temperature, mode) - current
    span = velocity.vmax / 2.0
    return float(brentq(residual, -span, span, xtol=1e-15, rtol=1e-15))


def weak_beam(steps: int = 200, mode: str = "classical") -> SimConfig:
    """Maxwellian plasma with a weak drifting beam, a density ripple and a transverse wave.

    The background drift is solved on the lattice so the net current
    vanishes; otherwise the mean of ``E_1`` would grow and the static
    neutralizing background would absorb momentum.
    """
    velocity = VelocityGrid(6.0, 12)
    beam = lattice_current(velocity, 0.05, 2.0, 0.5, mode)
    drift = balancing_drift(velocity, 0.95, 1.0, -beam, mode)
    return SimConfig.from_dict({
        "grid": {"length": 2.0 * math.pi, "nx": 32, "vmax": 6.0, "nv": 12},
        "quad": {"polar": 2, "azimuth": 4},
        "collision": {"strength": 0.1, "equilibrium": "none"},
        "transport": {"mode": mode},
        "initial": {
            "components": [
                {"density": 0.95, "velocity": [drift, 0.0, 0.0], "temperature": 1.0,
                 "density_amplitude": 0.002},
                {"density": 0.05, "velocity": [2.0, 0.0, 0.0], "temperature": 0.5},
            ],
            "fields": {"wave_amplitude": 0.002},
        },
        "dt": 0.025,
        "steps": steps,
        "output": {"directory": "vmb_run", "cadence": 10},
    })


def maxwellian_beam(steps: int = 200) -> SimConfig:
    """Drifting Maxwellian with a density ripple; base state of the stability study."""
    cfg = weak_beam(steps)
    return cfg.replace(**{
        "initial.components": [{"density": 1.0, "velocity": [0.5, 0.0, 0.0], "temperature": 1.0,
                                "density_amplitude": 0.002}],
        "experiment": "stability",
        "output.directory": "vmb_stability",
    })


def smooth_state(nx: int = 64) -> SimConfig:
    """Uniform density with a temperature ripple, no fields and no drift.

    The initial current and fields vanish, so every sub-flow is smooth and
    the splitting error is visible above the interpolation error.
    """
    return SimConfig.from_dict({
        "grid": {"length": 2.0 * math.pi, "nx": nx, "vmax": 6.0, "nv": 12},
        "quad": {"polar": 2, "azimuth": 4},
        "collision": {"integrator": "heun", "strength": 0.5},
        "initial": {"components": [{"density": 1.0, "temperature": 1.0,
                                    "temperature_amplitude": 0.2}]},
        "dt": 0.02,
        "steps": 1,
    })


PRESETS = {
    "relaxation": relaxation,
    "weak_beam": weak_beam,
    "maxwellian_beam": maxwellian_beam,
    "smooth_state": smooth_state,
}
