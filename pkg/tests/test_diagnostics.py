import math

import numpy as np
import pytest

from vmbsim.app.diagnostics import (DIAGNOSTICS_HEADER, RELATIVISTIC_COLUMNS, DiagnosticsRecord,
                                    GapSampler, entropy, field_energy_weight, maxwellian_gap,
                                    momentum_scale, particle_energy, read_diagnostics_csv,
                                    total_relative_entropy, write_diagnostics_csv)
from vmbsim.collision import SphereQuadrature
from vmbsim.grid import DistributionFunction, MaxwellianParams, SpatialGrid, VelocityGrid

QUAD = SphereQuadrature.gauss_legendre(2, 4)


def test_sampler_deterministic_and_inside_hull():
    vel = VelocityGrid(3.0, 8)
    a, b = GapSampler(vel, QUAD, pairs=500), GapSampler(vel, QUAD, pairs=500)
    assert np.array_equal(a.a, b.a) and np.array_equal(a.post, b.post)
    assert len(a) > 0
    lo, hi = -vel.vmax, vel.vmax - vel.dv
    assert np.all((a.post >= lo) & (a.post <= hi) & (a.post_star >= lo) & (a.post_star <= hi))
    mesh = vel.mesh.reshape(-1, 3)
    pre = mesh[a.a] + mesh[a.b]
    assert a.post + a.post_star == pytest.approx(pre, abs=1e-13)
    e_pre = np.sum(mesh[a.a] ** 2 + mesh[a.b] ** 2, axis=1)
    e_post = np.sum(a.post**2 + a.post_star**2, axis=1)
    assert e_post == pytest.approx(e_pre, abs=1e-12)
    assert not np.array_equal(GapSampler(vel, QUAD, pairs=500, seed=1).a, a.a)


def test_gap_of_maxwellian_small():
    vel = VelocityGrid(6.0, 24)
    m = MaxwellianParams(1.0, (0.3, 0.0, -0.2), 1.2).evaluate(vel.mesh)
    assert maxwellian_gap(m, GapSampler(vel, QUAD)) <= 1e-4


def test_gap_of_two_bumps_large():
    vel = VelocityGrid(6.0, 24)
    f = (MaxwellianParams(0.5, (1.5, 0, 0), 0.4).evaluate(vel.mesh)
         + MaxwellianParams(0.5, (-1.5, 0, 0), 0.4).evaluate(vel.mesh))
    # most sampled pairs sit in the tails, so the gap is small in absolute terms
    assert maxwellian_gap(f, GapSampler(vel, QUAD)) > 1e-3


def test_gap_zero_cell():
    vel = VelocityGrid(2.0, 4)
    assert maxwellian_gap(np.zeros((4, 4, 4)), GapSampler(vel, QUAD, pairs=50)) == 0.0


def test_entropy_examples():
    space, vel = SpatialGrid(2.0, 2), VelocityGrid(1.0, 2)
    v = np.zeros((2, 2, 2, 2))
    v[0, 0, 0, 0] = math.e
    v[1, 1, 1, 1] = 0.5
    f = DistributionFunction(v, space, vel)
    expect = (math.e * 1.0 + 0.5 * math.log(0.5)) * f.phase_volume
    assert entropy(f) == pytest.approx(expect)
    assert entropy(DistributionFunction.zeros(space, vel)) == 0.0


def test_relative_entropy_total():
    space, vel = SpatialGrid(1.0, 3), VelocityGrid(6.0, 16)
    m = MaxwellianParams(1.0, temperature=1.0).evaluate(vel.mesh)
    bi = (MaxwellianParams(0.5, (1.2, 0, 0), 0.3).evaluate(vel.mesh)
          + MaxwellianParams(0.5, (-1.2, 0, 0), 0.6).evaluate(vel.mesh))
    f = DistributionFunction(np.stack([m, bi, np.zeros_like(m)]), space, vel)
    r = total_relative_entropy(f)
    single = total_relative_entropy(DistributionFunction(np.stack([np.zeros_like(m), bi,
                                                                   np.zeros_like(m)]), space, vel))
    assert r > 0.1 * space.dx
    assert r == pytest.approx(single, rel=1e-4)


def test_particle_energy_and_scale():
    space, vel = SpatialGrid(1.0, 1), VelocityGrid(2.0, 2)
    v = np.zeros((1, 2, 2, 2))
    v[0, 1, 1, 1] = 2.0            # node (0, 0, 0)
    v[0, 0, 1, 1] = 1.0            # node (-2, 0, 0)
    f = DistributionFunction(v, space, vel)
    vol = f.phase_volume
    assert particle_energy(f, "classical") == pytest.approx(4.0 * vol)
    assert particle_energy(f, "relativistic") == pytest.approx((2.0 + math.sqrt(5.0)) * vol)
    assert momentum_scale(f) == pytest.approx(2.0 * vol)
    assert field_energy_weight("classical") == 1.0
    assert field_energy_weight("relativistic") == 0.5


def record(extra=None):
    return DiagnosticsRecord(0.5, 1.0, (0.1, -0.2, 0.0), 3.0, -1.5, 0.01, 1e-14, 0.0, 1e-13,
                             0.2, 0.003, 0.0, extra or {})


def test_record_row_and_dict():
    r = record()
    assert len(r.row()) == len(DIAGNOSTICS_HEADER)
    d = r.to_dict()
    assert list(d) == DIAGNOSTICS_HEADER
    assert d["py"] == -0.2 and d["maxw_gap"] == 0.003
    assert r.finite()
    bad = record()
    bad.dissipation = float("nan")
    assert not bad.finite()


def test_csv_round_trip(tmp_path):
    extra = dict(zip(RELATIVISTIC_COLUMNS, [1.0, 2.0, 0.5, 1.5, 1 / 3]))
    recs = [record(extra), record(extra)]
    recs[1].t = 1.0
    path = tmp_path / "diagnostics.csv"
    write_diagnostics_csv(path, recs)
    header = path.read_text().splitlines()[0].split(",")
    assert header == DIAGNOSTICS_HEADER + RELATIVISTIC_COLUMNS
    data = read_diagnostics_csv(path)
    assert data["t"].tolist() == [0.5, 1.0]
    assert data["rho_ratio"][0] == 1 / 3


def test_csv_empty(tmp_path):
    path = tmp_path / "d.csv"
    write_diagnostics_csv(path, [])
    data = read_diagnostics_csv(path)
    assert list(data) == DIAGNOSTICS_HEADER
    assert data["mass"].size == 0
