import numpy as np
import pytest

from junction_hj._roots import newton_bisect
from junction_hj.errors import ConvergenceError


def cubic(c):
    def f(x, mask):
        return x**3 - c[mask], 3 * x**2

    return f


def test_cube_roots_vectorized():
    c = np.linspace(-8.0, 8.0, 41)
    x = newton_bisect(cubic(c), np.full(c.shape, -3.0), np.full(c.shape, 3.0))
    np.testing.assert_allclose(x, np.cbrt(c), rtol=0, atol=1e-14)


def test_bracket_end_is_root():
    x = newton_bisect(cubic(np.array([8.0, -1.0])), np.array([0.0, -1.0]), np.array([2.0, 1.0]))
    assert x.tolist() == [2.0, -1.0]


def test_flat_slope_falls_back_to_bracket():
    # slope vanishes at the root; Newton alone would stall
    def f(x, mask):
        return np.sign(x - 0.3) * (x - 0.3) ** 2, 2 * np.abs(x - 0.3)

    x = newton_bisect(f, 0.0, 1.0, xtol=1e-12)
    assert abs(x - 0.3) < 1e-6


def test_stale_end_does_not_stall():
    # strongly concave: the lower end keeps a huge residual, which stalls plain regula falsi
    def f(x, mask):
        return 1.0 - 1e-3 / x, 1e-3 / x**2

    x = newton_bisect(f, 1e-6, 1.0, maxiter=40)
    assert abs(x - 1e-3) < 1e-15


def test_maxiter_raises():
    def f(x, mask):
        return np.tanh(x - 0.37), np.zeros_like(x)

    with pytest.raises(ConvergenceError):
        newton_bisect(f, 0.0, 1.0, maxiter=2)
