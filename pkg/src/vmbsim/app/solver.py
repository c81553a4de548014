"""Coupled Vlasov-Maxwell-Boltzmann time stepping.

One step is the Strang sequence

    half space advection, half velocity advection (old fields),
    Maxwell step with the current of the intermediate state,
    collision step, half velocity advection (new fields), half space advection.

The collision step works cell by cell: operator, optional equilibrium
correction, conservative projection, then forward Euler (or Heun) with
clip-and-tally positivity.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from ..collision import (CollisionKernel, CollisionOutput, EquilibriumCorrection,
                         SphereQuadrature, collision_operator, conservative_projection,
                         gain_with_dissipation, loss_convolution)
from ..errors import ConfigError, DegenerateCellError, ProjectionError, RunAbort
from ..grid import DistributionFunction, MaxwellianParams, build_phase_space
from ..maxwell import (EMField, check_cfl, charge_continuity_residual, constraint_residuals,
                       field_invariants, gauss_consistent_e1, gauss_correction, maxwell_step)
from ..relativistic import rel_moments, rho_moment_cells, xi_hat
from ..transport import Tally, advect_space, advect_velocity
from .config import SimConfig
from .diagnostics import (DiagnosticsRecord, GapSampler, entropy, field_energy_weight,
                          maxwellian_gap, particle_energy, total_relative_entropy)

MASS_ABORT_FRACTION = 0.1
# auto dt stays this far below the collision limit, which moves as L(f) evolves
COLLISION_MARGIN = 0.8


@dataclass
class SimState:
    """The triple ``(f, E, B)`` at time ``t`` plus bookkeeping.

    ``background`` is the uniform neutralizing charge fixed at ``t = 0``;
    ``j_mid`` and ``continuity`` describe the last step taken.
    """

    t: float
    f: DistributionFunction
    fields: EMField
    tally: Tally = field(default_factory=Tally)
    background: float = 0.0
    step: int = 0
    j_mid: np.ndarray | None = None
    continuity: float = 0.0


def current(f: DistributionFunction, mode: str) -> np.ndarray:
    """Cell-centered ``sum f v dv^3`` with ``v = xi`` or ``xi_hat``."""
    mesh = f.velocity.mesh if mode == "classical" else xi_hat(f.velocity.mesh)
    return np.einsum("iabc,abcd->id", f.values, mesh) * f.velocity.cell_volume


def density(f: DistributionFunction) -> np.ndarray:
    return f.values.sum(axis=(1, 2, 3)) * f.velocity.cell_volume


class Solver:
    """Grids, operators and step logic derived from one ``SimConfig``."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.space, self.velocity = build_phase_space(config.grid)
        self.mode = config.transport.mode
        k = config.kernel
        self.kernel = CollisionKernel(k.model, k.alpha, k.b0)
        self.quad = SphereQuadrature.gauss_legendre(config.quad.polar, config.quad.azimuth)
        coll = config.collision
        self.equilibrium = (EquilibriumCorrection(self.kernel, self.quad, self.velocity, self.mode)
                            if coll.equilibrium == "maxwellian" else None)
        self._sampler: GapSampler | None = None
        # operator outputs computed alongside D, reused by the next collision step
        self._memo: dict[int, tuple[np.ndarray, CollisionOutput]] = {}

    # ------------------------------------------------------------ setup

    def initial_values(self) -> np.ndarray:
        """Sum of the configured Maxwellian components on the phase-space lattice."""
        x = self.space.centers
        L = self.space.length
        values = np.zeros((self.space.nx,) + (self.velocity.nv,) * 3)
        for comp in self.config.initial.components:
            k = 2.0 * math.pi * comp.mode / L
            rho = comp.density * (1.0 + comp.density_amplitude * np.cos(k * x))
            temp = comp.temperature * (1.0 + comp.temperature_amplitude * np.cos(k * x))
            for i in range(self.space.nx):
                values[i] += MaxwellianParams(float(rho[i]), comp.velocity,
                                              float(temp[i])).evaluate(self.velocity.mesh)
        return values

    def initial_state(self, values: np.ndarray | None = None) -> SimState:
        """State from config (or from ``values``) with Gauss-consistent ``E_1``."""
        if values is None:
            values = self.initial_values()
        f = DistributionFunction(values, self.space, self.velocity)
        return SimState(0.0, f, self.initial_fields(density(f)), Tally(),
                        float(density(f).mean()))

    def initial_fields(self, rho: np.ndarray) -> EMField:
        fc = self.config.initial.fields
        E = np.zeros((self.space.nx, 3))
        B = np.tile(np.asarray(fc.B, dtype=float), (self.space.nx, 1))
        E[:, 0] = gauss_consistent_e1(self.space, rho)
        if fc.wave_amplitude:
            k = 2.0 * math.pi * fc.wave_mode / self.space.length
            E[:, 1] = fc.wave_amplitude * np.cos(k * self.space.faces)
            B[:, 2] += fc.wave_amplitude * np.cos(k * self.space.centers)
        return EMField(E, B, self.space)

    def max_loss_factor(self, f: DistributionFunction) -> float:
        worst = 0.0
        for cell in f.values:
            if cell.any():
                worst = max(worst, float(loss_convolution(cell, self.kernel, self.quad,
                                                          self.velocity, self.mode).max()))
        return worst * self.config.collision.strength

    def dt_limits(self, state: SimState) -> dict[str, float]:
        """Upper bounds on ``dt`` from transport, Maxwell and the collision step."""
        v = self.velocity
        speed = v.vmax if self.mode == "classical" else float(np.abs(xi_hat(v.mesh)[..., 0]).max())
        limits = {"transport": self.space.dx / speed, "maxwell": self.space.dx}
        bmax = float(np.sqrt(np.sum(state.fields.B**2, axis=1)).max(initial=0.0))
        if bmax > 0:
            limits["magnetic"] = 0.5 / bmax
        if self.config.collision.enabled:
            lmax = self.max_loss_factor(state.f)
            if lmax > 0:
                limits["collision"] = self.config.collision.max_loss_dt / lmax
        return limits

    def resolve_dt(self, state: SimState) -> float:
        """The configured ``dt``, or the largest admissible one scaled by ``cfl_safety``.

        In auto mode the collision limit is additionally scaled by
        ``COLLISION_MARGIN``.
        """
        limits = self.dt_limits(state)
        if self.config.dt == "auto":
            if "collision" in limits:
                limits["collision"] *= COLLISION_MARGIN
            return self.config.transport.cfl_safety * min(limits.values())
        dt = float(self.config.dt)
        for name, lim in limits.items():
            if dt > lim * (1.0 + 1e-12):
                raise ConfigError(f"dt={dt} exceeds the {name} limit {lim}")
        return dt

    # ------------------------------------------------------------ sub-steps

    def _space(self, f: DistributionFunction, dt: float, tally: Tally) -> DistributionFunction:
        if self.space.nx == 1:
            # a homogeneous state is invariant under free streaming
            return f
        h0 = entropy(f)
        out = advect_space(f, dt, self.mode, tally)
        tally.entropy_budget += max(0.0, entropy(out) - h0)
        return out

    def _velocity(self, f: DistributionFunction, E: np.ndarray, B: np.ndarray, dt: float,
                  tally: Tally) -> DistributionFunction:
        if not (np.any(E) or np.any(B)):
            return f
        h0 = entropy(f)
        out = advect_velocity(f, E, B, dt, self.mode, tally)
        tally.entropy_budget += max(0.0, entropy(out) - h0)
        return out

    def collision_rate(self, cell: np.ndarray, key=None):
        """Projected collision term of one slice, its largest loss factor and truncation count."""
        hit = self._memo.pop(key, None) if key is not None else None
        if hit is not None and np.array_equal(hit[0], cell):
            out = hit[1]
        else:
            out = collision_operator(cell, self.kernel, self.quad, self.velocity, self.mode)
        if self.equilibrium is not None:
            try:
                out = self.equilibrium.apply(out, cell, key)
            except DegenerateCellError:
                pass
        weight = cell if self.config.collision.projection == "density" else None
        try:
            out = conservative_projection(out, self.velocity, self.mode, weight=weight)
        except ProjectionError:
            if weight is None:
                raise
            out = conservative_projection(out, self.velocity, self.mode)
        nu = self.config.collision.strength
        return nu * out.net, nu * float(out.loss_factor.max(initial=0.0)), out.truncated

    def _euler(self, cell, dt, key, tally):
        q, lmax, trunc = self.collision_rate(cell, key)
        limit = self.config.collision.max_loss_dt
        if dt * lmax > limit * (1.0 + 1e-12):
            raise RunAbort(f"collision step dt*max L = {dt * lmax:.4g} exceeds {limit}")
        tally.truncated += trunc
        return cell + dt * q

    def _clip_cell(self, cell: np.ndarray, tally: Tally) -> np.ndarray:
        neg = cell < 0.0
        if neg.any():
            tally.clipped += float(-cell[neg].sum() * self.velocity.cell_volume * self.space.dx)
            cell = np.where(neg, 0.0, cell)
        return cell

    def collide(self, f: DistributionFunction, dt: float, tally: Tally) -> DistributionFunction:
        values = f.values.copy()
        heun = self.config.collision.integrator == "heun"
        for i, cell in enumerate(f.values):
            if not cell.any():
                continue
            stage = self._clip_cell(self._euler(cell, dt, i, tally), tally)
            if heun:
                stage = 0.5 * (cell + self._clip_cell(self._euler(stage, dt, i, tally), tally))
            values[i] = stage
        return f.with_values(values)

    # ------------------------------------------------------------ step

    def step(self, state: SimState, dt: float) -> SimState:
        """Advance one Strang step; raises ``RunAbort`` on tally blowup."""
        check_cfl(self.space, dt)
        tally = copy.copy(state.tally)
        f = state.f
        rho_prev = density(f)
        f = self._space(f, 0.5 * dt, tally)
        Ec, Bc = state.fields.centered()
        f = self._velocity(f, Ec, Bc, 0.5 * dt, tally)
        j = current(f, self.mode)
        fields = maxwell_step(state.fields, j, dt)
        if self.config.collision.enabled:
            f = self.collide(f, dt, tally)
        Ec, Bc = fields.centered()
        f = self._velocity(f, Ec, Bc, 0.5 * dt, tally)
        f = self._space(f, 0.5 * dt, tally)
        cont = charge_continuity_residual(rho_prev, density(f), j, dt, self.space.dx)
        if self.config.transport.gauss_correction:
            fields = gauss_correction(fields, density(f))
        mass = f.total_mass()
        if abs(tally.net_removed) > MASS_ABORT_FRACTION * (mass + tally.net_removed):
            raise RunAbort(f"mass tally {tally.net_removed:.4g} exceeds "
                           f"{MASS_ABORT_FRACTION:.0%} of the total mass")
        return SimState(state.t + dt, f, fields, tally, state.background, state.step + 1, j, cont)

    # ------------------------------------------------------------ diagnostics

    @property
    def sampler(self) -> GapSampler:
        if self._sampler is None:
            self._sampler = GapSampler(self.velocity, self.quad)
        return self._sampler

    def dissipation(self, f: DistributionFunction) -> tuple[float, float, float]:
        """``(sum_i D_i dx, skipped, truncated)`` of the raw operator times ``strength``."""
        total = skipped = truncated = 0.0
        self._memo.clear()
        for i, cell in enumerate(f.values):
            if not cell.any():
                continue
            out, d = gain_with_dissipation(cell, self.kernel, self.quad, self.velocity, self.mode)
            self._memo[i] = (cell.copy(), out)
            total += d.value
            skipped += d.skipped
            truncated += d.truncated
        return total * self.space.dx * self.config.collision.strength, skipped, truncated

    def diagnostics(self, state: SimState, dissipation: bool | None = None) -> DiagnosticsRecord:
        f, fields = state.f, state.fields
        dx = self.space.dx
        vol = f.phase_volume
        rho = density(f)
        field_e, field_p = field_invariants(fields)
        p = np.einsum("iabc,abcd->d", f.values, f.velocity.mesh) * vol + field_p
        energy = particle_energy(f, self.mode) + field_energy_weight(self.mode) * field_e
        gauss, divb = constraint_residuals(fields, rho, state.background)
        if dissipation is None:
            dissipation = self.config.output.dissipation
        d = self.dissipation(f)[0] if dissipation else float("nan")
        gap = max((maxwellian_gap(cell, self.sampler) for cell in f.values), default=0.0)
        extra = {}
        if self.mode == "relativistic":
            m = rel_moments(f)
            rho_c, bound_c = rho_moment_cells(f)
            live = bound_c > 0
            extra = {"rel_energy": float(m.rel_energy.sum() * dx), "weighted_mass": m.weighted_mass,
                     "rho_max": float(rho_c.max(initial=0.0)),
                     "rho_bound": float(bound_c.max(initial=0.0)),
                     "rho_ratio": float(np.max(rho_c[live] / bound_c[live], initial=0.0))}
        return DiagnosticsRecord(
            t=state.t, mass=f.total_mass(), momentum=tuple(float(c) for c in p), energy=energy,
            entropy=float(xlogy(f.values, f.values).sum() * vol), dissipation=d, gauss=gauss,
            divb=divb, continuity=state.continuity, rel_entropy=total_relative_entropy(f),
            maxw_gap=gap, mass_tally=state.tally.net_removed, extra=extra)


def step(state: SimState, dt: float, config: SimConfig) -> SimState:
    """Functional form of ``Solver(config).step``."""
    return Solver(config).step(state, dt)

