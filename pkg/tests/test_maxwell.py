import csv
import math

import numpy as np
import pytest

from vmbsim.errors import ConfigError, DataError
from vmbsim.grid import SpatialGrid
from vmbsim.maxwell import (FIELDS_HEADER, EMField, charge_continuity_residual, check_cfl,
                            constraint_residuals, face_current, field_invariants, field_norms,
                            gauss_consistent_e1, gauss_correction, gauss_divergence, maxwell_step,
                            modified_energy, write_fields_csv)


def wave(space, mode=2, amp=0.3):
    k = 2 * math.pi * mode / space.length
    E = np.zeros((space.nx, 3))
    B = np.zeros((space.nx, 3))
    E[:, 1] = amp * np.cos(k * space.faces)
    B[:, 2] = amp * np.cos(k * space.centers)
    E[:, 2] = -0.5 * amp * np.sin(k * space.faces)
    B[:, 1] = 0.5 * amp * np.sin(k * space.centers)
    return EMField(E, B, space), k


@pytest.mark.parametrize("courant", [0.5, 0.9, 1.0])
def test_single_mode_follows_discrete_dispersion(courant):
    # every component of a single Fourier mode obeys u^{n+1} + u^{n-1} = 2 cos(w dt) u^n
    space = SpatialGrid(2 * math.pi, 32)
    fields, k = wave(space)
    dt = courant * space.dx
    cos_wdt = 1.0 - 2.0 * courant**2 * math.sin(0.5 * k * space.dx) ** 2
    zero = np.zeros((space.nx, 3))
    hist = [fields]
    for _ in range(20):
        hist.append(maxwell_step(hist[-1], zero, dt))
    for n in range(1, 20):
        for name in ("E", "B"):
            a, b, c = (getattr(hist[m], name) for m in (n - 1, n, n + 1))
            assert a + c == pytest.approx(2 * cos_wdt * b, abs=1e-13)


def test_static_fields_unchanged():
    space = SpatialGrid(1.0, 8)
    E = np.tile([0.2, -0.1, 0.4], (8, 1))
    B = np.tile([0.7, 0.3, -0.5], (8, 1))
    out = maxwell_step(EMField(E, B, space), np.zeros((8, 3)), 0.1)
    assert np.array_equal(out.E, E)
    assert np.array_equal(out.B, B)


def test_current_kicks_e():
    space = SpatialGrid(1.0, 8)
    j = np.tile([0.5, -0.2, 0.1], (8, 1))
    out = maxwell_step(EMField.zeros(space), j, 0.1)
    assert out.E == pytest.approx(-0.1 * j, abs=1e-16)
    assert np.all(out.B == 0.0)


def test_b1_never_changes():
    space = SpatialGrid(1.0, 16)
    fields, _ = wave(space)
    rng = np.random.default_rng(0)
    fields.B[:, 0] = 0.37
    out = fields
    for _ in range(10):
        out = maxwell_step(out, rng.normal(size=(16, 3)), 0.5 * space.dx)
    assert np.all(out.B[:, 0] == 0.37)
    assert constraint_residuals(out, np.zeros(16))[1] == 0.0


def test_cfl_violation_raises():
    space = SpatialGrid(1.0, 10)
    check_cfl(space, 0.1)
    with pytest.raises(ConfigError):
        check_cfl(space, 0.1001)
    with pytest.raises(ConfigError):
        maxwell_step(EMField.zeros(space), np.zeros((10, 3)), -0.2)


def test_gauss_consistent_start():
    space = SpatialGrid(3.0, 24)
    rho = 1.0 + 0.3 * np.sin(2 * math.pi * space.centers / 3.0)
    e1 = gauss_consistent_e1(space, rho)
    assert e1.mean() == pytest.approx(0.0, abs=1e-15)
    E = np.zeros((24, 3))
    E[:, 0] = e1
    fields = EMField(E, np.zeros((24, 3)), space)
    assert gauss_divergence(fields) == pytest.approx(rho - rho.mean(), abs=1e-14)
    assert constraint_residuals(fields, rho, rho.mean())[0] <= 1e-14


def test_gauss_preserved_by_continuity():
    # a density update that satisfies the discrete continuity equation keeps Gauss's law
    space = SpatialGrid(2.0, 16)
    rng = np.random.default_rng(1)
    rho = 1.0 + 0.2 * rng.uniform(size=16)
    bg = rho.mean()
    E = np.zeros((16, 3))
    E[:, 0] = gauss_consistent_e1(space, rho)
    fields = EMField(E, np.zeros((16, 3)), space)
    dt = 0.5 * space.dx
    for _ in range(10):
        j = rng.normal(size=(16, 3))
        jf = face_current(j)[:, 0]
        rho_next = rho - dt * (np.roll(jf, -1) - jf) / space.dx
        assert charge_continuity_residual(rho, rho_next, j, dt, space.dx) <= 1e-12
        fields = maxwell_step(fields, j, dt)
        rho = rho_next
        assert constraint_residuals(fields, rho, bg)[0] <= 1e-12


def test_continuity_residual_detects_mismatch():
    rho = np.ones(8)
    j = np.zeros((8, 3))
    j[3, 0] = 1.0
    assert charge_continuity_residual(rho, rho, j, 0.1, 0.25) == pytest.approx(2.0)


def test_field_invariants_uniform():
    space = SpatialGrid(2.0, 5)
    fields = EMField(np.tile([0.0, 1.0, 0.0], (5, 1)), np.tile([0.0, 0.0, 1.0], (5, 1)), space)
    energy, momentum = field_invariants(fields)
    assert energy == pytest.approx(4.0)
    assert momentum == pytest.approx([2.0, 0.0, 0.0])


def test_modified_energy_conserved_in_vacuum():
    space = SpatialGrid(2 * math.pi, 32)
    fields, _ = wave(space, mode=5)
    dt = 0.8 * space.dx
    m0 = modified_energy(fields, dt)
    e0 = field_invariants(fields)[0]
    zero = np.zeros((32, 3))
    worst_plain = 0.0
    for _ in range(200):
        fields = maxwell_step(fields, zero, dt)
        assert modified_energy(fields, dt) == pytest.approx(m0, rel=1e-12)
        worst_plain = max(worst_plain, abs(field_invariants(fields)[0] - e0))
    # the plain energy is only conserved up to an O(dt^2) oscillation
    assert worst_plain > 1e-6


def test_centered_average():
    space = SpatialGrid(1.0, 4)
    E = np.arange(12.0).reshape(4, 3)
    Ec, Bc = EMField(E, np.ones((4, 3)), space).centered()
    assert Ec[0] == pytest.approx(0.5 * (E[0] + E[1]))
    assert Ec[3] == pytest.approx(0.5 * (E[3] + E[0]))
    assert np.all(Bc == 1.0)


def test_nonfinite_fields_rejected():
    space = SpatialGrid(1.0, 2)
    with pytest.raises(DataError):
        EMField(np.full((2, 3), np.nan), np.zeros((2, 3)), space)


def test_fields_csv(tmp_path):
    space = SpatialGrid(1.0, 3)
    fields, _ = wave(space, mode=1)
    path = tmp_path / "fields.csv"
    write_fields_csv(path, fields)
    rows = list(csv.reader(open(path)))
    assert rows[0] == FIELDS_HEADER
    assert len(rows) == 4
    Ec, Bc = fields.centered()
    assert [float(v) for v in rows[2]] == pytest.approx([space.centers[1], *Ec[1], *Bc[1]])


def test_field_norms_constant_fields():
    space = SpatialGrid(2.0, 8)
    fields = EMField(np.tile([3.0, 0.0, 4.0], (8, 1)), np.tile([0.0, 1.0, 0.0], (8, 1)), space)
    e, b = field_norms(fields)
    # |E| = 5 and |B| = 1 on a cell of length 2
    assert e == pytest.approx(5.0 * 2.0 ** 0.2, rel=1e-14)
    assert b == pytest.approx(2.0 ** (1 / 6), rel=1e-14)
    assert field_norms(EMField.zeros(space)) == (0.0, 0.0)


def test_gauss_correction():
    space = SpatialGrid(2 * math.pi, 16)
    rng = np.random.default_rng(3)
    fields = EMField(rng.normal(size=(16, 3)), rng.normal(size=(16, 3)), space)
    rho = 1.0 + 0.1 * np.sin(space.centers)
    out = gauss_correction(fields, rho)
    assert constraint_residuals(out, rho, rho.mean())[0] <= 1e-14
    assert out.E[:, 0].mean() == pytest.approx(fields.E[:, 0].mean(), abs=1e-15)
    assert np.array_equal(out.E[:, 1:], fields.E[:, 1:])
    assert np.array_equal(out.B, fields.B)
    assert constraint_residuals(fields, rho, rho.mean())[0] > 0.1
