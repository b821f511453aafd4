import math

import numpy as np
import pytest

from hetcap import integrand as I
from hetcap.errors import DomainTooSmallError, InputError, ParameterError
from hetcap.grid import Box, build_masked_box
from hetcap.perforated import (
    _two_scale,
    build_perforated_domain,
    capacitary_profile,
    constant_field,
    critical_period,
    gamma_limit_energy,
    linear_field,
    perforation_lattice,
    piecewise_mean_projection,
    recovery_sequence,
    strange_term_experiment,
)

TWO_PI = 2 * math.pi
UNIT = Box.unit(2)
ALPHA = 0.49 / 8  # alpha 2^(M+1) < 1/2 with M = 2
WIDE = Box((-0.1, -0.1), (1.6, 1.1))  # two interior perforations at eps = e^-4


def enumerate_lattice(omega, eps, period, reach=8):
    """Direct enumeration oracle for the interior and boundary index sets."""
    lo, hi = omega.as_arrays()
    interior, boundary = set(), set()
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            x = np.array([i, j]) * period
            gap = np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi)))
            dist = np.min(np.minimum(x - lo, hi - x))
            if dist > period * (1 + 1e-9):
                interior.add((i, j))
            elif gap < eps:
                boundary.add((i, j))
    return interior, boundary


@pytest.fixture(scope="module")
def wide_recovery():
    lattice, grid = build_perforated_domain(WIDE, math.exp(-4), 0.5)
    return lattice, grid, recovery_sequence(constant_field(1.0), lattice, I.constant(), ALPHA, 2, grid=grid)


def test_critical_period_examples():
    assert critical_period(math.exp(-1), 2) == pytest.approx(1.0, rel=1e-15)
    assert critical_period(math.exp(-4), 2) == pytest.approx(0.5, rel=1e-15)
    assert critical_period(math.exp(-8), 3) == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(InputError):
        critical_period(1.0, 2)
    with pytest.raises(InputError):
        critical_period(0.5, 1)


@pytest.mark.parametrize("omega,eps", [
    (UNIT, math.exp(-4)),
    (UNIT, math.exp(-3)),
    (WIDE, math.exp(-4)),
    (Box((0.0, 0.0), (2.0, 1.5)), math.exp(-6)),
])
def test_lattice_matches_enumeration(omega, eps):
    lat = perforation_lattice(omega, eps, 0.5)
    interior, boundary = enumerate_lattice(omega, eps, lat.period)
    assert {tuple(i) for i in lat.interior_index.tolist()} == interior
    assert {tuple(i) for i in lat.boundary_index.tolist()} == boundary
    np.testing.assert_allclose(lat.interior, lat.interior_index * lat.period)


def test_unit_square_at_e4():
    lat = perforation_lattice(UNIT, math.exp(-4), 0.5)
    assert lat.period == pytest.approx(0.5)
    # the centre (1/2, 1/2) sits exactly d_eps from the boundary, so it is not interior
    assert len(lat.interior) == 0 and len(lat.boundary) == 9


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.5, 1.0])
def test_delta_divides_period(lam):
    eps = math.exp(-5)
    lat = perforation_lattice(UNIT, eps, lam)
    assert isinstance(lat.m, int) and lat.m >= 1
    assert lat.m * lat.delta == pytest.approx(lat.period, rel=1e-14)
    assert lat.delta <= lat.delta_requested * (1 + 1e-12)
    assert lat.delta / lat.period < 1 or lat.m == 1


def test_perforation_nodes_masked():
    eps = math.exp(-3)
    lat, g = build_perforated_domain(UNIT, eps, 0.5)
    near = np.zeros(g.n_nodes, dtype=bool)
    for c in lat.centers:
        near |= g.radius(c) <= eps
    np.testing.assert_array_equal(g.fixed, near)
    assert np.all(g.values[g.fixed] == 0.0)


def test_domain_too_small():
    with pytest.raises(DomainTooSmallError):
        perforation_lattice(Box((0.1, 0.1), (0.2, 0.2)), math.exp(-4), 0.5)
    with pytest.raises(InputError):
        perforation_lattice(UNIT, math.exp(-4), 0.5, d=3)


def test_capacitary_profile():
    prof = capacitary_profile((0.3, -0.2), math.exp(-2), math.exp(-1))
    assert abs(prof.energy / TWO_PI - 1) <= 0.02
    assert prof.field.min() >= -1e-12 and prof.field.max() <= 1 + 1e-12
    vals = prof(np.linspace(0, 1, 200))
    assert np.all((vals >= 0) & (vals <= 1))
    assert prof(np.array([0.01]))[0] == 0.0 and prof(np.array([2.0]))[0] == 1.0
    wide = capacitary_profile((0.0, 0.0), math.exp(-3), math.exp(-1))
    assert wide.energy == pytest.approx(prof.energy / 2, rel=0.02)
    three = capacitary_profile((0.0, 0.0, 0.0), 0.1, 0.1 * math.e, d=3)
    assert three.energy == pytest.approx(4 * math.pi, rel=1e-12)
    with pytest.raises(InputError):
        capacitary_profile((0.0, 0.0), 0.2, 0.1)


def test_recovery_of_zero():
    lat, g = build_perforated_domain(UNIT, math.exp(-3), 0.5)
    rec = recovery_sequence(constant_field(0.0), lat, I.laminate(), ALPHA, 2, grid=g)
    assert not rec.field.any() and rec.energy == 0.0


def test_recovery_vanishes_and_is_local(wide_recovery):
    lat, g, rec = wide_recovery
    assert len(lat.interior) == 2
    assert np.all(rec.field[g.fixed] == 0.0)
    touched = np.zeros(g.n_nodes, dtype=bool)
    for x, r in rec.correction_balls:
        touched |= g.radius(x) < r
    for x in lat.boundary:
        touched |= g.radius(x) < rec.correction_balls[0][1]
    assert np.all(rec.field[~touched] == 1.0)
    assert len(rec.trace_values) == 2 and all(0 < t <= 1 for t in rec.trace_values)


def test_recovery_energy_additivity(wide_recovery):
    lat, g, rec = wide_recovery
    from hetcap.grid import Energy
    cell_e = Energy(g, I.constant(), lat.delta).cell_energies(rec.field)
    per = [float(np.sum(cell_e[g.cells_touching(g.radius(x) < r)])) for x, r in rec.correction_balls]
    assert all(e > 0 for e in per)
    assert sum(per) == pytest.approx(rec.interior_energy, rel=1e-12)
    # constant target: all energy sits in the disjoint correction balls
    assert rec.energy == pytest.approx(rec.interior_energy + rec.boundary_energy, rel=1e-12)
    assert 0 < rec.boundary_share < 1


def test_recovery_two_scale_laminate():
    lat, g = build_perforated_domain(WIDE, math.exp(-4), 0.5)
    u = linear_field((1.0, 0.0))
    rec = recovery_sequence(u, lat, I.laminate(), ALPHA, 2, grid=g)
    assert np.all(rec.field[g.fixed] == 0.0)
    base = _two_scale(u, I.laminate(), lat.delta, g.nodes)
    touched = g.fixed.copy()
    for x in lat.centers:
        touched |= g.radius(x) < ALPHA * lat.period * 8
    np.testing.assert_array_equal(rec.field[~touched], base[~touched])
    assert np.isfinite(rec.energy) and rec.energy > 0


def test_recovery_parameter_errors():
    lat, g = build_perforated_domain(WIDE, math.exp(-4), 0.5)
    with pytest.raises(ParameterError):
        recovery_sequence(constant_field(), lat, I.constant(), ALPHA, 1, grid=g)
    with pytest.raises(ParameterError):
        recovery_sequence(constant_field(), lat, I.constant(), 1 / 16, 2, grid=g)
    with pytest.raises(ParameterError):
        recovery_sequence(constant_field(), lat, I.constant(), 0.01, 2, grid=g)  # eps >= alpha d_eps


def test_gamma_limit_examples():
    assert gamma_limit_energy(constant_field(0.0), I.constant(), 5.0, UNIT).total == 0.0
    one = gamma_limit_energy(constant_field(1.0), I.constant(), 7.0, UNIT)
    assert one.bulk == 0.0 and one.strange == pytest.approx(7.0, rel=1e-14)
    lin = gamma_limit_energy(linear_field((1.0, 0.0)), I.constant(), TWO_PI, UNIT)
    assert lin.bulk == pytest.approx(1.0, rel=1e-13)
    assert lin.strange == pytest.approx(TWO_PI / 3, rel=1e-13)
    assert lin.total == pytest.approx(1 + TWO_PI / 3, rel=1e-13)
    with pytest.raises(InputError):
        gamma_limit_energy(constant_field(1.0), I.constant(), -1.0, UNIT)


def test_piecewise_projection():
    omega = Box((0.0, 0.0), (4.0, 4.0))
    g = build_masked_box(omega, 1 / 64)
    lat = perforation_lattice(omega, math.exp(-4), 0.5)
    _, err0 = piecewise_mean_projection(g, np.zeros(g.n_nodes), lat)
    assert err0 == 0.0
    step, err1 = piecewise_mean_projection(g, np.ones(g.n_nodes), lat)
    covered = step == 1.0
    assert err1 == pytest.approx(float(np.sum(g.measures[~covered])), rel=1e-12)
    u = 1.0 + 0.25 * g.nodes[:, 0] + 0.1 * np.sin(g.nodes[:, 1])
    errs = [piecewise_mean_projection(g, u, perforation_lattice(omega, e, 0.5))[1]
            for e in (math.exp(-4), math.exp(-9), math.exp(-16))]
    assert errs[0] > errs[1] > errs[2]


def test_strange_experiment_zero_field():
    rep = strange_term_experiment(constant_field(0.0), I.constant(), 0.5, [math.exp(-2), math.exp(-3)], UNIT)
    assert all(r.recovery_energy == 0.0 and r.gamma_energy == 0.0 for r in rep.rows)
    assert rep.verdict == "PASS"


def test_strange_experiment_rows_and_errors():
    rep = strange_term_experiment(constant_field(1.0), I.constant(), 0.5, [math.exp(-2), math.exp(-3)], UNIT)
    assert rep.c_lambda == pytest.approx(TWO_PI)
    assert rep.vanishes_on_perforations
    for r in rep.rows:
        assert r.gamma_energy == pytest.approx(TWO_PI)
        assert r.gap == pytest.approx(abs(r.recovery_energy - TWO_PI))
    with pytest.raises(InputError):
        strange_term_experiment(constant_field(1.0), I.constant(), 0.5, [math.exp(-3), math.exp(-2)], UNIT)
