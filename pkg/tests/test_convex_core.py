import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import grid_sup
from junction_hj import JUNCTION, Lagrangian, Point, ScenarioError, build_junction, conjugate, h_minus, hamiltonian
from junction_hj.convex_core import distance, hamiltonian_at, k_derivative, k_eval, k_inverse

LREF = Lagrangian.quadratic(0.25, -1.0, 0.0)


def cosh_lagrangian():
    # L'' = cosh(q) + 1 >= 2, no closed form for the conjugate
    return Lagrangian(
        eval=lambda q: np.cosh(q) + 0.5 * np.asarray(q) ** 2 - 0.3 * np.asarray(q),
        deriv=lambda q: np.sinh(q) + np.asarray(q) - 0.3,
        gamma=2.0,
        name="cosh",
    )


@pytest.mark.parametrize("p, q_star, H", [(0.0, -1.0, 0.0), (1.0, 1.0, 0.0), (0.5, 0.0, -0.25)])
def test_conjugate_reference_values(p, q_star, H):
    q, h = conjugate(LREF, p)
    assert q == pytest.approx(q_star, abs=1e-12)
    assert h == pytest.approx(H, abs=1e-12)


@pytest.mark.parametrize("p, expected", [(0.0, 0.0), (1.0, -0.25), (-1.0, 2.0)])
def test_h_minus_matches_grid_sup(p, expected):
    assert h_minus(LREF, p) == pytest.approx(expected, abs=1e-12)
    ref = grid_sup(lambda q: p * q - LREF.eval(q), -10.0, 0.0)
    assert h_minus(LREF, p) == pytest.approx(ref, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0.05, 5.0),
    b=st.floats(-3.0, 3.0),
    c=st.floats(-2.0, 2.0),
    p=st.floats(-20.0, 20.0),
)
def test_quadratic_conjugate_closed_form(a, b, c, p):
    L = Lagrangian.quadratic(a, b, c)
    q, h = conjugate(L, p)
    assert h == pytest.approx(p * p / (4 * a) + b * p - c, rel=1e-12, abs=1e-12)
    assert float(L.deriv(q)) == pytest.approx(p, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-6.0, 6.0))
def test_generic_conjugate_against_grid(p):
    L = cosh_lagrangian()
    q, h = conjugate(L, p)
    assert abs(float(L.deriv(q)) - p) < 1e-10
    assert h == pytest.approx(grid_sup(lambda s: p * s - L.eval(s), -6.0, 6.0, 400_001), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(p1=st.floats(-5.0, 5.0), p2=st.floats(-5.0, 5.0))
def test_h_minus_nonincreasing_and_below_h(p1, p2):
    lo, hi = sorted((p1, p2))
    L = cosh_lagrangian()
    assert h_minus(L, hi) <= h_minus(L, lo) + 1e-12
    assert h_minus(L, p1) <= hamiltonian(L, p1) + 1e-12


def test_arrays_broadcast():
    p = np.linspace(-2.0, 2.0, 7).reshape(7, 1)
    q, h = conjugate(LREF, p)
    assert q.shape == h.shape == (7, 1)
    np.testing.assert_allclose(h.ravel(), (p * p - p).ravel(), atol=1e-15)


def test_quadratic_validation():
    with pytest.raises(ScenarioError):
        Lagrangian.quadratic(0.0)
    with pytest.raises(ScenarioError):
        Lagrangian.quadratic(1.0, gamma=3.0)


def test_convexity_probe_rejects_false_gamma():
    L = Lagrangian(eval=lambda q: np.asarray(q) ** 4, deriv=lambda q: 4 * np.asarray(q) ** 3, gamma=1.0)
    with pytest.raises(ScenarioError):
        build_junction([L])


def test_k_reference_values(sym, asym):
    assert k_eval(sym, 1, 2.0) == pytest.approx(-1.0, abs=1e-15)
    assert k_eval(sym, 1, 0.0) == 0.0
    assert k_eval(asym, 2, 1.0) == pytest.approx(-0.25, abs=1e-15)


def test_k_inverse_reference_values(sym, asym):
    assert k_inverse(asym, 2, 0.0, +1) == pytest.approx(2 ** -0.5, abs=1e-15)
    assert k_inverse(asym, 2, 0.0, -1) == pytest.approx(-(2 ** -0.5), abs=1e-15)
    assert k_inverse(sym, 1, 0.0, +1) == 0.0
    with pytest.raises(ValueError):
        k_inverse(asym, 2, 1.0, +1)
    with pytest.raises(ValueError):
        k_inverse(asym, 2, 0.0, 0)


def test_k_inverse_generic_roundtrip():
    J = build_junction([LREF, cosh_lagrangian()])
    v = np.linspace(-3.0, J.kappa[1], 13)
    for sign in (1, -1):
        xi = k_inverse(J, 2, v, sign)
        np.testing.assert_allclose(k_eval(J, 2, xi), v, atol=1e-11)
        assert np.all(sign * xi >= 0)


def test_k_derivative_matches_differences(asym):
    xi = np.linspace(-2.0, 2.0, 9)
    h = 1e-6
    fd = (k_eval(asym, 2, xi + h) - k_eval(asym, 2, xi - h)) / (2 * h)
    np.testing.assert_allclose(k_derivative(asym, 2, xi), fd, atol=1e-8)


def test_junction_constants(sym, asym):
    assert sym.I0 == {1, 2} and sym.L0_zero == 0.25
    assert sym.xi_minus == (0.0, 0.0) and sym.xi_plus == (0.0, 0.0)
    assert asym.I0 == {1} and asym.L0_zero == 0.25
    assert asym.xi_plus[1] == pytest.approx(2 ** -0.5, abs=1e-15)
    assert asym.xi_minus[1] == pytest.approx(-(2 ** -0.5), abs=1e-15)
    # gamma0 = max |L_l'(0)| = 1, gamma = 0.5
    assert asym.C0 == pytest.approx(-0.25 + 1 / 0.5)
    single = build_junction([Lagrangian.quadratic(0.5)])
    assert single.I0 == {1} and single.L0_zero == 0.0 and single.C0 == 0.0


def test_hamiltonian_at(sym):
    assert hamiltonian_at(sym, Point(1, 0.5), 0.0) == 0.0
    assert hamiltonian_at(sym, Point(JUNCTION), [0.0, 0.0]) == 0.0
    # both branches clamp at q = 0 for p = 1, leaving -L(0)
    expected = max(
        grid_sup(lambda q: q - sym.lag(l).eval(q), -10.0, 0.0) for l in (1, 2)
    )
    assert hamiltonian_at(sym, Point(JUNCTION), [1.0, 1.0]) == pytest.approx(expected, abs=1e-8)
    assert hamiltonian_at(sym, Point(JUNCTION), [1.0, 1.0]) == pytest.approx(-0.25, abs=1e-15)
    with pytest.raises(ValueError):
        hamiltonian_at(sym, Point(JUNCTION), [1.0])


def test_points():
    assert Point(2, 0.0) == Point(1, 0.0) == Point(JUNCTION)
    assert Point.parse("2:1.5") == Point(2, 1.5)
    assert Point.parse("J").is_junction
    assert str(Point(1, 0.25)) == "1:0.25"
    with pytest.raises(ValueError):
        Point(1, -0.1)
    with pytest.raises(ValueError):
        Point.parse("1.5")
    assert distance(Point(1, 0.5), Point(1, 2.0)) == 1.5
    assert distance(Point(1, 0.5), Point(2, 2.0)) == 2.5
    assert math.isclose(distance(Point(JUNCTION), Point(2, 2.0)), 2.0)
