"""Closed-form minimal action on the junction.

The reduced action ``D0(y, x)`` is the cheapest cost of going from ``y`` at
time 0 to ``x`` at time 1. Optimal trajectories either run straight inside
one branch, or reach the junction, possibly wait there, and leave:

* ``Straight``  -- same branch, constant velocity ``x - y``;
* ``Linear``    -- entry at ``tau1``, dwell on ``[tau1, tau2]``, exit; only
  when both branches are costlier to idle on than the cheapest one and
  ``(y, x)`` lies in the dwelling triangle;
* ``Implicit``  -- touch the junction at a single instant ``tau`` that
  balances ``K_j(-y/tau) = K_i(x/(1-tau))``.

Functions prefixed with an underscore work on numpy arrays for one branch
pairing ``(j, i)``: ``y`` is a coordinate on entry branch ``j`` and ``x``
a coordinate on exit branch ``i``. The public functions take :class:`Point`
arguments and resolve junction endpoints by minimizing over pairings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._roots import newton_bisect
from .convex_core import JUNCTION, Junction, Point, k_derivative, k_eval, k_inverse
from .errors import ConvergenceError

#: tolerance on |D_linear - D_straight| flagging the kink curve
KINK_TOL = 1e-10
#: values closer than this (relative) count as ties between pairings
TIE_TOL = 1e-12

STRAIGHT, LINEAR, IMPLICIT = 0, 1, 2


class Regime(str, enum.Enum):
    STRAIGHT = "straight"
    LINEAR = "linear"
    IMPLICIT = "implicit"
    STAY = "stay"


_REGIMES = {STRAIGHT: Regime.STRAIGHT, LINEAR: Regime.LINEAR, IMPLICIT: Regime.IMPLICIT}


@dataclass(frozen=True)
class ActionResult:
    """Action value with the shape of the optimal trajectory.

    ``tau1``/``tau2`` are the junction entry and exit times (``nan`` for a
    straight trajectory); ``entry_branch``/``exit_branch`` the pairing used.
    """

    value: float
    regime: Regime
    tau1: float
    tau2: float
    entry_branch: int
    exit_branch: int

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "regime": self.regime.value,
            "tau1": None if math.isnan(self.tau1) else self.tau1,
            "tau2": None if math.isnan(self.tau2) else self.tau2,
            "entry_branch": self.entry_branch,
            "exit_branch": self.exit_branch,
        }


@dataclass(frozen=True)
class GradientResult:
    """``(d_y, d_x)`` of ``D0``; at kinks ``alternates`` holds the other one-sided pair."""

    d_y: float
    d_x: float
    smooth: bool = True
    alternates: Optional[tuple] = None


# ---------------------------------------------------------------------------
# vectorized kernels for a fixed pairing (j, i)


# coordinates this small are snapped to the junction; junction times scale
# with them and would underflow, while D0 moves by O(TINY) at most
TINY = 1e-150


def _arr(*xs):
    out = []
    for a in np.broadcast_arrays(*xs):
        a = np.asarray(a, dtype=float)
        out.append(np.where(np.abs(a) < TINY, 0.0, a))
    return out


def _in_delta(J: Junction, j: int, y, i: int, x):
    """Membership in the open dwelling triangle; empty if ``i`` or ``j`` idles cheapest."""
    y, x = _arr(y, x)
    if J.in_I0(i) or J.in_I0(j):
        return np.zeros(y.shape, dtype=bool)
    return x / J.xi_plus[i - 1] - y / J.xi_minus[j - 1] < 1.0


def _linear(J: Junction, j: int, y, i: int, x):
    Lj, Li = J.lag(j), J.lag(i)
    xm, xp = J.xi_minus[j - 1], J.xi_plus[i - 1]
    return -float(Lj.deriv(np.array(xm))) * y + float(Li.deriv(np.array(xp))) * x + J.L0_zero


def _tau_root(J: Junction, j: int, y: np.ndarray, i: int, x: np.ndarray):
    """Root of ``F(tau) = K_j(-y/tau) - K_i(x/(1-tau))`` for ``y, x > 0``.

    Returns ``(tau, 1 - tau)``. Roots near 1 are solved for ``1 - tau``
    directly so that ``x / (1 - tau)`` keeps its precision when ``x << y``.
    """
    def F(tau, sig, m):
        return np.asarray(k_eval(J, j, -y[m] / tau)) - np.asarray(k_eval(J, i, x[m] / sig))

    every = np.ones(y.shape, dtype=bool)
    half = np.full(y.shape, 0.5)
    # F increases in tau; its sign at 1/2 tells which half holds the root, and
    # the unknown u is whichever of tau, 1 - tau is the smaller one
    flip = F(half, half, every) < 0
    sgn = np.where(flip, -1.0, 1.0)

    def split(u, m):
        fl = flip[m]
        return np.where(fl, 1 - u, u), np.where(fl, u, 1 - u)

    def g(u, m):
        tau, sig = split(u, m)
        return sgn[m] * F(tau, sig, m)

    # exact when both idling gaps vanish and the Lagrangians are quadratic
    sj = math.sqrt(float(J.lag(j).second_derivative(np.array(0.0))))
    si = math.sqrt(float(J.lag(i).second_derivative(np.array(0.0))))
    wy, wx = sj * y, si * x
    u0 = np.where(flip, wx, wy) / (wy + wx)
    lo = np.where(u0 < 0.5, u0, 0.25)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(300):
            bad = ~(g(lo, every) < 0)
            if not bad.any():
                break
            lo = np.where(bad, lo / 16, lo)
        else:
            raise ConvergenceError("could not bracket the junction-time equation")

    def f(u, m):
        yy, xx = y[m], x[m]
        tau, sig = split(u, m)
        xi_y = -yy / tau
        xi_x = xx / sig
        val = np.asarray(k_eval(J, j, xi_y)) - np.asarray(k_eval(J, i, xi_x))
        slope = k_derivative(J, j, xi_y) * yy / tau ** 2 - k_derivative(J, i, xi_x) * xx / sig ** 2
        return sgn[m] * val, slope

    u = newton_bisect(f, lo, half, xtol=0.0, rtol=1e-15, x0=u0)
    return split(u, every)


def _implicit(J: Junction, j: int, y, i: int, x, speeds: bool = True):
    """Single-touch action with its junction time and exit/entry speeds.

    Returns ``(value, tau, xi_y, xi_x)`` arrays. With ``speeds=False`` the
    speed of the phase that never happens at a junction endpoint is left
    as ``nan``; it costs a root find and only gradients use it.
    """
    y, x = _arr(y, x)
    value = np.empty(y.shape)
    tau = np.empty(y.shape)
    xi_y = np.empty(y.shape)
    xi_x = np.empty(y.shape)
    Lj, Li = J.lag(j), J.lag(i)
    L0 = J.L0_zero
    xm, xp = J.xi_minus[j - 1], J.xi_plus[i - 1]

    origin = (y == 0) & (x == 0)
    if origin.any() and not (J.in_I0(i) or J.in_I0(j)):
        raise ValueError(
            f"junction time is undefined at (0, 0) when neither branch {j} nor {i} idles cheapest"
        )

    both = (y > 0) & (x > 0)
    if both.any():
        yb, xb = y[both], x[both]
        t, sig = _tau_root(J, j, yb, i, xb)
        a, b = -yb / t, xb / sig
        tau[both], xi_y[both], xi_x[both] = t, a, b
        value[both] = t * Lj.eval(a) + sig * Li.eval(b)

    # start at the junction: wait, then leave at speed max(x, xi_i^+)
    y0 = (y == 0) & ((x > 0) | J.in_I0(i))
    if y0.any():
        xb = x[y0]
        b = np.maximum(xb, xp)
        if J.in_I0(i):
            t = np.zeros(xb.shape)
        else:
            t = np.maximum(0.0, 1 - xb / xp)
        tau[y0], xi_x[y0] = t, b
        xi_y[y0] = k_inverse(J, j, np.atleast_1d(k_eval(J, i, b)), -1) if speeds else np.nan
        value[y0] = (1 - t) * Li.eval(b) + t * L0

    # end at the junction: arrive at speed max(y, -xi_j^-), then wait
    x0 = (x == 0) & ~y0
    if x0.any():
        yb = y[x0]
        a = -np.maximum(yb, -xm)
        if J.in_I0(j):
            t = np.ones(yb.shape)
        else:
            t = np.minimum(1.0, yb / -xm)
        tau[x0], xi_y[x0] = t, a
        xi_x[x0] = k_inverse(J, i, np.atleast_1d(k_eval(J, j, a)), +1) if speeds else np.nan
        value[x0] = t * Lj.eval(a) + (1 - t) * L0
    return value, tau, xi_y, xi_x


def _junction(J: Junction, j: int, y, i: int, x, speeds: bool = True):
    """Cheapest trajectory through the junction: ``(value, regime, tau1, tau2, xi_y, xi_x)``."""
    y, x = _arr(y, x)
    inside = _in_delta(J, j, y, i, x)
    value = np.empty(y.shape)
    regime = np.full(y.shape, IMPLICIT, dtype=np.int8)
    tau1 = np.empty(y.shape)
    tau2 = np.empty(y.shape)
    xi_y = np.empty(y.shape)
    xi_x = np.empty(y.shape)
    if inside.any():
        xm, xp = J.xi_minus[j - 1], J.xi_plus[i - 1]
        yi, xi = y[inside], x[inside]
        value[inside] = _linear(J, j, yi, i, xi)
        regime[inside] = LINEAR
        tau1[inside] = -yi / xm
        tau2[inside] = 1 - xi / xp
        xi_y[inside] = xm
        xi_x[inside] = xp
    out = ~inside
    if out.any():
        v, t, a, b = _implicit(J, j, y[out], i, x[out], speeds)
        value[out], tau1[out], tau2[out], xi_y[out], xi_x[out] = v, t, t, a, b
    return value, regime, tau1, tau2, xi_y, xi_x


def _pair(J: Junction, j: int, y, i: int, x, speeds: bool = True):
    """``D0`` restricted to ``J_j x J_i`` with trajectory data.

    Returns ``(value, regime, tau1, tau2, xi_y, xi_x)``; for straight
    trajectories both speeds equal ``x - y`` and the times are ``nan``.
    """
    y, x = _arr(y, x)
    if i == j and J.in_I0(i):
        q = x - y
        nan = np.full(y.shape, np.nan)
        return J.lag(i).eval(q), np.full(y.shape, STRAIGHT, dtype=np.int8), nan, nan.copy(), q, q.copy()
    value, regime, tau1, tau2, xi_y, xi_x = _junction(J, j, y, i, x, speeds)
    if i == j:
        q = x - y
        straight = J.lag(i).eval(q)
        take = straight <= value
        value = np.where(take, straight, value)
        regime = np.where(take, STRAIGHT, regime).astype(np.int8)
        tau1 = np.where(take, np.nan, tau1)
        tau2 = np.where(take, np.nan, tau2)
        xi_y = np.where(take, q, xi_y)
        xi_x = np.where(take, q, xi_x)
    return value, regime, tau1, tau2, xi_y, xi_x


def pair_values(J: Junction, j: int, y, i: int, x) -> np.ndarray:
    """Vectorized ``D0`` for entry branch ``j`` and exit branch ``i``."""
    return _pair(J, j, y, i, x, speeds=False)[0]


def pair_gradients(J: Junction, j: int, y, i: int, x):
    """Vectorized ``(d_y, d_x)`` of ``D0`` on ``J_j x J_i`` (regime-wise, no kink flags)."""
    _, _, _, _, xi_y, xi_x = _pair(J, j, y, i, x)
    return -J.lag(j).deriv(xi_y), J.lag(i).deriv(xi_x)


def junction_arm(J: Junction, j: int, y, i: int, x):
    """Vectorized junction-forced action: ``(value, is_linear, d_y, d_x)``."""
    value, regime, _, _, xi_y, xi_x = _junction(J, j, y, i, x)
    return value, regime == LINEAR, -J.lag(j).deriv(xi_y), J.lag(i).deriv(xi_x)


def values_to(J: Junction, j: int, y, x: Point) -> np.ndarray:
    """Vectorized ``D0(y e_j, x)``; a junction target is reached from any exit pairing."""
    if not x.is_junction:
        return pair_values(J, j, y, x.branch, x.coord)
    return np.min([pair_values(J, j, y, i, 0.0) for i in range(1, J.n + 1)], axis=0)


# ---------------------------------------------------------------------------
# public scalar API


def _pairings(J: Junction, y: Point, x: Point):
    js = range(1, J.n + 1) if y.is_junction else (y.branch,)
    is_ = range(1, J.n + 1) if x.is_junction else (x.branch,)
    for j in js:
        for i in is_:
            yield j, i


def _check(J: Junction, *points: Point) -> None:
    for p in points:
        if p.branch > J.n:
            raise ValueError(f"{p} lies on a branch outside 1..{J.n}")


def d_straight(J: Junction, y: Point, x: Point) -> float:
    """Cost of the constant-velocity path, ``+inf`` across branches."""
    _check(J, y, x)
    if y.is_junction and x.is_junction:
        return J.L0_zero
    if y.is_junction or x.is_junction or y.branch == x.branch:
        b = x.branch if not x.is_junction else y.branch
        return float(J.lag(b).eval(np.array(x.coord - y.coord)))
    return math.inf


def phase_cost(J: Junction, kind: str, tau: float, p: Point, branch: int | None = None) -> float:
    """Cost of reaching the junction from ``p`` by time ``tau`` (``kind="entry"``),
    or of waiting until ``tau`` and then reaching ``p`` by time 1 (``kind="exit"``).

    Both include the idling cost ``L0(0)`` of the waiting part so that
    entry + exit is the full cost of a one-touch trajectory.
    """
    _check(J, p)
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    L0 = J.L0_zero
    if kind == "entry":
        if p.is_junction:
            return 0.0
        if tau == 0:
            return math.inf
        return tau * float(J.lag(p.branch).eval(np.array(-p.coord / tau))) - tau * L0
    if kind == "exit":
        if p.is_junction:
            return L0
        if tau == 1:
            return math.inf
        return (1 - tau) * float(J.lag(p.branch).eval(np.array(p.coord / (1 - tau)))) + tau * L0
    raise ValueError(f"kind must be 'entry' or 'exit', got {kind!r}")


def solve_tau(J: Junction, j: int, y: float, i: int, x: float) -> float:
    """Junction time of the single-touch trajectory from ``y e_j`` to ``x e_i``.

    Raises
    ------
    ValueError
        At ``(0, 0)`` when neither branch idles cheapest (the time is undefined there).
    """
    J.lag(j), J.lag(i)
    return float(_implicit(J, j, np.array([y]), i, np.array([x]))[1][0])


def tau_residual(J: Junction, j: int, y: float, i: int, x: float, tau: float) -> float:
    """``F(tau) = K_j(-y/tau) - K_i(x/(1-tau))``."""
    return float(k_eval(J, j, -y / tau)) - float(k_eval(J, i, x / (1 - tau)))


def d_implicit(J: Junction, y: Point, x: Point) -> float:
    """Best single-touch junction trajectory, minimized over pairings at junction endpoints."""
    _check(J, y, x)
    return min(
        float(_implicit(J, j, np.array([y.coord]), i, np.array([x.coord]))[0][0])
        for j, i in _pairings(J, y, x)
    )


def d_linear(J: Junction, j: int, y: float, i: int, x: float) -> Optional[float]:
    """Dwelling-trajectory action, ``None`` outside the dwelling triangle."""
    J.lag(j), J.lag(i)
    if not bool(_in_delta(J, j, y, i, x)):
        return None
    return float(_linear(J, j, y, i, x))


def _result(J, j, i, value, regime, tau1, tau2) -> ActionResult:
    return ActionResult(float(value), _REGIMES[int(regime)], float(tau1), float(tau2), j, i)


def _best(J: Junction, y: Point, x: Point, kernel):
    best = None
    for j, i in _pairings(J, y, x):
        out = [np.asarray(a)[0] for a in kernel(J, j, np.array([y.coord]), i, np.array([x.coord]))]
        if best is None or out[0] < best[2][0] - TIE_TOL * max(1.0, abs(best[2][0])):
            best = (j, i, out)
    return best


def d_junction(J: Junction, y: Point, x: Point) -> ActionResult:
    """Cheapest trajectory forced through the junction point."""
    _check(J, y, x)
    if y.is_junction and x.is_junction:
        k = J.k0
        return ActionResult(J.L0_zero, Regime.LINEAR, 0.0, 1.0, k, k)
    j, i, (value, regime, tau1, tau2, _, _) = _best(J, y, x, _junction)
    return _result(J, j, i, value, regime, tau1, tau2)


def d0(J: Junction, y: Point, x: Point) -> ActionResult:
    """Reduced minimal action from ``y`` at time 0 to ``x`` at time 1."""
    _check(J, y, x)
    if y.is_junction and x.is_junction:
        k = J.k0
        return ActionResult(J.L0_zero, Regime.STAY, 0.0, 1.0, k, k)
    j, i, (value, regime, tau1, tau2, _, _) = _best(J, y, x, _pair)
    return _result(J, j, i, value, regime, tau1, tau2)


def _near(a, b, tol):
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= tol


def pair_gradient(J: Junction, j: int, y: float, i: int, x: float) -> GradientResult:
    """Gradient of ``D0`` on ``J_j x J_i`` at one point, with kink detection."""
    value, regime, _, _, xi_y, xi_x = (np.asarray(a)[0] for a in _pair(J, j, np.array([y]), i, np.array([x])))
    Lj, Li = J.lag(j), J.lag(i)
    g = (float(-Lj.deriv(xi_y)), float(Li.deriv(xi_x)))
    if i != j or J.in_I0(i):
        return GradientResult(*g)

    q = x - y
    straight = float(Li.eval(np.array(q)))
    g_straight = (float(-Li.deriv(np.array(q))), float(Li.deriv(np.array(q))))
    xm, xp = J.xi_minus[j - 1], J.xi_plus[i - 1]
    g_linear = (float(-Lj.deriv(np.array(xm))), float(Li.deriv(np.array(xp))))
    corner = _near((y, x), (-xm, 0.0), KINK_TOL) or _near((y, x), (0.0, xp), KINK_TOL)
    on_curve = x / xp - y / xm <= 1.0 + KINK_TOL and abs(float(_linear(J, j, y, i, x)) - straight) <= KINK_TOL
    if corner or on_curve:
        other = g_linear if int(regime) == STRAIGHT else g_straight
        return GradientResult(*g, smooth=False, alternates=other)
    return GradientResult(*g)


def d0_gradient(J: Junction, y: Point, x: Point) -> GradientResult:
    """Gradient ``(d/dy, d/dx)`` of ``D0`` along the branches of the minimizing pairing."""
    _check(J, y, x)
    if y.is_junction and x.is_junction:
        k = J.k0
        return pair_gradient(J, k, 0.0, k, 0.0)
    j, i, _ = _best(J, y, x, _pair)
    return pair_gradient(J, j, y.coord, i, x.coord)


def action(J: Junction, s: float, y: Point, t: float, x: Point) -> ActionResult:
    """Minimal action ``D(s, y; t, x)`` by rescaling the unit-horizon problem.

    At ``s == t`` the action is 0 for ``y == x`` and ``+inf`` otherwise.
    """
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    _check(J, y, x)
    if s == t:
        value = 0.0 if y == x else math.inf
        return ActionResult(value, Regime.STRAIGHT, math.nan, math.nan, y.branch, x.branch)
    h = t - s
    r = d0(J, Point(y.branch, y.coord / h), Point(x.branch, x.coord / h))
    return ActionResult(h * r.value, r.regime, s + r.tau1 * h, s + r.tau2 * h, r.entry_branch, r.exit_branch)
