import math

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from allelopathy.lattice import ConfigError
from allelopathy.meanfield import (Rates, basin_map, converge, dulac_divergence, dulac_divergence_fd,
                                   fixed_points, integrate, jacobian, p12_coordinates,
                                   p12_in_simplex, regions, rhs)

R = Rates(2.0, 3.0, 4.0)
rates = st.tuples(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.05, 20)).map(lambda t: Rates(*t))


def test_worked_values():
    assert rhs((0.25, 0.25), R).tolist() == [0.0, -0.125]
    r = Rates(2.0, 2.5, 4.0)
    p12 = p12_coordinates(r)
    assert (p12.u1, p12.u2) == (0.0625, 0.4375)
    rep = fixed_points(r)
    assert rep.predicted == "bistable"
    assert rep.det_p12_formula == pytest.approx(-0.21875)
    assert np.linalg.det(jacobian(p12, r)) == pytest.approx(-0.21875)
    assert dulac_divergence((0.25, 0.25), R) == -20.0


def test_exact_p12_is_rational():
    ex = p12_coordinates(Rates(2, 2.5, 4), exact=True)
    assert ex.u1 == mpq(1, 16) and ex.u2 == mpq(7, 16)
    assert rhs(ex, Rates(mpq(2), mpq(5, 2), mpq(4))).tolist() == [0, 0]


def test_no_p12_without_allelopathy():
    assert p12_coordinates(Rates(2.0, 3.0, 0.0)) is None
    assert fixed_points(Rates(2.0, 3.0, 0.0))["p12"].u is None


@given(rates)
def test_fixed_points_exact(r):
    rep = fixed_points(r)
    for fp in rep.points.values():
        if fp.u is not None:
            assert fp.residual == 0.0
            if fp.in_simplex:
                assert fp.residual_float < 1e-12


@given(rates, st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_jacobian_matches_finite_difference(r, a, b):
    u = np.array([a, b * (1 - a)])
    h = 1e-6
    fd = np.column_stack([(rhs(u + h * e, r) - rhs(u - h * e, r)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(jacobian(u, r), fd, rtol=1e-6, atol=1e-6 * (1 + max(r)))


@given(rates, st.floats(0.01, 0.98), st.floats(0.01, 0.98))
def test_dulac_negative_and_matches_fd(r, a, b):
    u = (a, b * (1 - a))
    div = dulac_divergence(u, r)
    assert div < 0
    assert dulac_divergence_fd(u, r) == pytest.approx(div, rel=1e-5)


def test_dulac_rejects_boundary():
    with pytest.raises(ConfigError):
        dulac_divergence((0.0, 0.5), R)


@given(rates)
def test_p12_simplex_condition(r):
    pt = p12_coordinates(r)
    inside = pt.u1 > 0 and pt.u2 > 0
    if abs(r.beta2 - r.beta1) > 1e-9 and abs(r.beta2 - ((1 + r.gamma) * r.beta1 - r.gamma)) > 1e-9:
        assert inside == p12_in_simplex(r)
    if p12_in_simplex(r):
        assert fixed_points(r).det_p12_formula < 0


@pytest.mark.parametrize("r,pred", [
    (Rates(0.5, 0.4, 1.0), "p0"),
    (Rates(3.0, 2.0, 1.0), "p1"),
    (Rates(2.0, 6.0, 1.0), "p2"),
    (Rates(2.0, 3.0, 4.0), "bistable"),
    (Rates(1.0, 0.5, 1.0), "marginal"),
    (Rates(2.0, 3.0, 1.0), "marginal"),
])
def test_predicted_limit(r, pred):
    assert fixed_points(r).predicted == pred


def test_regions_keys():
    assert set(regions(R)) == {"B0", "B1", "B2", "marginal"}


def test_integrate_reaches_predicted_point():
    tr = integrate((0.5, 0.1), Rates(3.0, 2.0, 1.0), 200.0)
    assert tr.converged and tr.nearest == "p1"
    assert tr.terminal.u1 == pytest.approx(2 / 3, abs=1e-6)
    assert tr.max_simplex_excess < 1e-12
    with pytest.raises(ConfigError):
        integrate((0.8, 0.5), R, 1.0)


def test_bistable_limits_depend_on_start():
    assert converge((0.6, 0.1), R)[0] == "p1"
    assert converge((0.01, 0.6), R)[0] == "p2"
    assert converge((0.0, 0.0), R)[0] == "p0"


def test_basin_axes_and_area():
    bm = basin_map(R, n=20, t_max=500.0)
    lab = np.array(bm.labels)
    assert set(lab[(bm.u2 == 0) & (bm.u1 > 0)]) == {"p1"}
    assert set(lab[(bm.u1 == 0) & (bm.u2 > 0)]) == {"p2"}
    s = bm.summary()
    assert math.isclose(sum(s.values()), 1.0)
    assert set(s) <= {"p1", "p2", "p12"}
    assert 0 < bm.area_fraction("p1") < 1
