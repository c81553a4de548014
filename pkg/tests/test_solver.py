import json
import math

import numpy as np
import pytest

from vmbsim.app.config import SimConfig
from vmbsim.app.diagnostics import DIAGNOSTICS_HEADER, RELATIVISTIC_COLUMNS, read_diagnostics_csv
from vmbsim.app.runner import StepLog, run, simulate
from vmbsim.app.solver import COLLISION_MARGIN, Solver, current, density, step
from vmbsim.collision import invariant_moments
from vmbsim.errors import ConfigError, RunAbort
from vmbsim.grid import MaxwellianParams, read_snapshot
from vmbsim.maxwell import constraint_residuals
from vmbsim.transport import advect_space


def small(**changes) -> SimConfig:
    base = SimConfig.from_dict({
        "grid": {"length": 2 * math.pi, "nx": 4, "vmax": 3.0, "nv": 6},
        "quad": {"polar": 2, "azimuth": 4},
        "collision": {"equilibrium": "none", "strength": 0.2},
        "initial": {"components": [{"density": 1.0, "velocity": [0.3, 0.0, 0.0],
                                    "temperature": 0.8, "density_amplitude": 0.1}],
                    "fields": {"wave_amplitude": 0.01}},
        "dt": 0.05,
        "steps": 4,
        "output": {"plots": False, "cadence": 2},
    })
    return base.replace(**changes) if changes else base


def test_initial_state_gauss_consistent():
    solver = Solver(small())
    state = solver.initial_state()
    gauss, divb = constraint_residuals(state.fields, density(state.f), state.background)
    assert gauss <= 1e-13
    assert divb == 0.0
    assert state.background == pytest.approx(density(state.f).mean())
    assert state.fields.E[:, 1] == pytest.approx(0.01 * np.cos(solver.space.faces))


def test_initial_values_sum_components():
    cfg = small(**{"initial.components": [{"density": 0.5}, {"density": 0.25, "temperature": 2.0}]})
    solver = Solver(cfg)
    mesh = solver.velocity.mesh
    expect = MaxwellianParams(0.5).evaluate(mesh) + MaxwellianParams(0.25, temperature=2.0).evaluate(mesh)
    assert solver.initial_values()[2] == pytest.approx(expect, rel=1e-14)


def test_current_modes():
    solver = Solver(small())
    f = solver.initial_state().f
    j = current(f, "classical")
    expect = np.einsum("iabc,abc->i", f.values, solver.velocity.mesh[..., 0]) * solver.velocity.cell_volume
    assert j[:, 0] == pytest.approx(expect)
    assert np.all(np.abs(current(f, "relativistic")[:, 0]) < np.abs(j[:, 0]))


def test_resolve_dt():
    solver = Solver(small(dt="auto"))
    state = solver.initial_state()
    limits = solver.dt_limits(state)
    assert {"transport", "maxwell", "collision"} <= set(limits)
    assert limits["transport"] == pytest.approx(solver.space.dx / 3.0)
    limits["collision"] *= COLLISION_MARGIN
    expect = solver.config.transport.cfl_safety * min(limits.values())
    assert solver.resolve_dt(state) == pytest.approx(expect)
    with pytest.raises(ConfigError, match="transport"):
        Solver(small(dt=1.0)).resolve_dt(state)


def test_magnetic_limit():
    solver = Solver(small(**{"initial.fields.B": [0.0, 0.0, 4.0], "initial.fields.wave_amplitude": 0.0}))
    assert solver.dt_limits(solver.initial_state())["magnetic"] == pytest.approx(0.125)


def test_collision_only_conserves_moments():
    cfg = small(**{"grid.nx": 1, "initial.fields.wave_amplitude": 0.0})
    solver = Solver(cfg)
    state = solver.initial_state()
    before = invariant_moments(state.f.values[0], solver.velocity)
    f = state.f
    for _ in range(3):
        f = solver.collide(f, 0.05, state.tally)
    after = invariant_moments(f.values[0], solver.velocity)
    assert after == pytest.approx(before, abs=1e-13)
    assert not np.allclose(f.values, state.f.values)


def test_free_streaming_matches_advection():
    cfg = small(**{"collision.enabled": False, "initial.fields.wave_amplitude": 0.0,
                   "initial.components": [{"density": 1.0, "temperature": 0.8}]})
    solver = Solver(cfg)
    state = solver.initial_state()
    # uniform density, so only streaming acts up to the kick from the lattice's small net current
    out = solver.step(state, 0.05)
    ref = advect_space(advect_space(state.f, 0.025), 0.025)
    assert np.abs(out.f.values - ref.values).max() <= 1e-4 * ref.values.max()
    assert np.abs(out.fields.E).max() <= 1e-3


@pytest.mark.parametrize("mode", ["classical", "relativistic"])
def test_step_conserves_mass(mode):
    cfg = small(**{"transport.mode": mode})
    solver = Solver(cfg)
    state = solver.initial_state()
    m0 = state.f.total_mass()
    for _ in range(3):
        state = solver.step(state, 0.05)
    assert state.f.total_mass() + state.tally.net_removed == pytest.approx(m0, rel=1e-13)
    assert state.step == 3 and state.t == pytest.approx(0.15)


def test_gauss_correction_option():
    # measured against the current mean charge: outflow at the velocity box shifts it uniformly
    def residual(cfg):
        solver = Solver(cfg)
        state = solver.initial_state()
        for _ in range(3):
            state = solver.step(state, 0.05)
        rho = density(state.f)
        return constraint_residuals(state.fields, rho, rho.mean())[0]

    assert residual(small(**{"transport.gauss_correction": True})) <= 1e-14
    assert residual(small()) > 1e-8


def test_functional_step_matches_method():
    cfg = small()
    state = Solver(cfg).initial_state()
    a = step(state, 0.05, cfg)
    b = Solver(cfg).step(state, 0.05)
    assert np.array_equal(a.f.values, b.f.values)


def test_step_aborts_on_stiff_collision():
    cfg = small(**{"collision.strength": 50.0})
    solver = Solver(cfg)
    with pytest.raises(RunAbort, match="collision step"):
        solver.step(solver.initial_state(), 0.05)


def test_cfl_enforced_in_step():
    solver = Solver(small())
    with pytest.raises(ConfigError):
        solver.step(solver.initial_state(), 10.0)


def homogeneous_cell():
    cfg = small(**{"grid.nx": 1, "initial.fields.wave_amplitude": 0.0,
                   "initial.components": [{"density": 0.5, "velocity": [0.8, 0, 0], "temperature": 0.4},
                                          {"density": 0.5, "velocity": [-0.8, 0, 0], "temperature": 0.6}],
                   "collision.strength": 0.05})
    return cfg


@pytest.mark.parametrize("integrator, order", [("euler", 1), ("heun", 2)])
def test_collision_integrator_order(integrator, order):
    cfg = homogeneous_cell().replace(**{"collision.integrator": integrator})
    ref_cfg = homogeneous_cell().replace(**{"collision.integrator": "heun"})
    f0 = Solver(cfg).initial_state()
    T = 0.4

    def evolve(c, n):
        s = Solver(c)
        f = f0.f
        for _ in range(n):
            f = s.collide(f, T / n, f0.tally.__class__())
        return f.values

    ref = evolve(ref_cfg, 64)
    errs = [np.abs(evolve(cfg, n) - ref).max() for n in (2, 4, 8)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates == pytest.approx([order, order], abs=0.3)


def test_dissipation_memo_reused_by_collision():
    cfg = homogeneous_cell()
    solver = Solver(cfg)
    state = solver.initial_state()
    fresh = Solver(cfg).collision_rate(state.f.values[0], 0)
    d, _, _ = solver.dissipation(state.f)
    assert d > 0
    assert 0 in solver._memo
    reused = solver.collision_rate(state.f.values[0], 0)
    assert 0 not in solver._memo
    assert np.array_equal(reused[0], fresh[0])
    # a different cell content must not hit the memo
    solver.dissipation(state.f)
    other = solver.collision_rate(state.f.values[0] * 1.01, 0)
    assert np.array_equal(other[0], Solver(cfg).collision_rate(state.f.values[0] * 1.01, 0)[0])


def test_relativistic_diagnostics_columns():
    solver = Solver(small(**{"transport.mode": "relativistic"}))
    rec = solver.diagnostics(solver.initial_state())
    assert list(rec.extra) == RELATIVISTIC_COLUMNS
    assert 0 < rec.extra["rho_ratio"] <= 1.0
    assert rec.finite()


def test_diagnostics_without_dissipation():
    solver = Solver(small())
    rec = solver.diagnostics(solver.initial_state(), dissipation=False)
    assert math.isnan(rec.dissipation)


# ------------------------------------------------------------ runner

def test_simulate_records_and_drifts():
    report, state = simulate(small(steps=4))
    assert report.status == "ok"
    assert [r.t for r in report.records] == pytest.approx([0.0, 0.1, 0.2])
    drifts = report.drifts()
    assert drifts["mass_rel"] <= 1e-13
    assert set(drifts) >= {"mass_abs", "energy_rel", "momentum_abs", "momentum_rel", "entropy_excess"}
    assert len(report.step_log.gauss) == 5
    assert report.step_log.gauss_bound_holds(report.dt)
    json.dumps(report.summary())


def test_simulate_reports_abort():
    # a cold beam rotated by B_3 leaves the velocity box
    cfg = small(**{"initial.fields.B": [0.0, 0.0, 4.0], "initial.fields.wave_amplitude": 0.0,
                   "collision.enabled": False, "steps": 40,
                   "initial.components": [{"density": 1.0, "velocity": [-2.2, 0, 0], "temperature": 0.1}]})
    report, _ = simulate(cfg)
    assert report.status == "aborted"
    assert "mass tally" in report.reason
    assert report.exit_code == 3


def test_step_log_bound():
    log = StepLog([0, 1, 2], [1.0, 1.2, 1.3], [0, 0, 0], [0.0, 2.0, 2.0])
    assert log.gauss_bound_holds(0.1)
    log.gauss[2] = 1.5
    assert not log.gauss_bound_holds(0.1)


def test_run_writes_outputs(tmp_path):
    cfg = small(**{"output.snapshot_cadence": 2, "output.plots": True})
    report = run(cfg, tmp_path)
    names = set(report.outputs)
    for name in ("config.json", "diagnostics.csv", "steps.csv", "snapshot_final.bin", "fields.csv",
                 "moments.csv", "report.json", "snapshot_000002.bin", "conservation.png"):
        assert name in names
        assert (tmp_path / name).exists()
    data = read_diagnostics_csv(tmp_path / "diagnostics.csv")
    assert list(data) == DIAGNOSTICS_HEADER
    f, meta = read_snapshot(tmp_path / "snapshot_final.bin")
    assert meta["t"] == pytest.approx(0.2)
    assert meta["extra"] == {"status": "ok", "step": 4}
    assert f.values.shape == (4, 6, 6, 6)
    summary = json.loads((tmp_path / "report.json").read_text())
    assert summary["status"] == "ok"
    assert summary["max_E_L5"] > 0.0
    assert summary["kernel_growth_exponent"] == pytest.approx(1.0, abs=0.2)
    steps = (tmp_path / "steps.csv").read_text().splitlines()
    assert steps[0] == "t,gauss,divb,continuity,E_L5,B_L6"
    assert len(steps) == 6
