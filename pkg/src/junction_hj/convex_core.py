"""Strongly convex branch Lagrangians, their conjugates and the junction bundle.

Branch ids run from 1 to N; ``JUNCTION`` (0) labels the junction point.
All numerical routines accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._roots import newton_bisect
from .errors import ConvergenceError, ScenarioError

JUNCTION = 0

#: absolute tolerance deciding whether L_i(0) attains min_j L_j(0)
I0_TOL = 1e-12

_FD_STEP = 1e-4


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class Lagrangian:
    """Running cost of one branch, ``L(q)`` for velocity ``q``.

    ``eval``, ``deriv`` and the optional ``deriv2`` must accept numpy arrays.
    ``gamma`` is the declared lower bound on ``L''``. Quadratic Lagrangians
    ``a (q - b)^2 + c`` carry their coefficients in ``quad`` so conjugates
    and roots are evaluated in closed form.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    gamma: float
    deriv2: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quad: Optional[tuple] = None
    name: str = field(default="generic", compare=False)

    @classmethod
    def quadratic(cls, a: float, b: float = 0.0, c: float = 0.0, gamma: float | None = None):
        """``L(q) = a (q - b)^2 + c``; ``gamma`` defaults to ``2a``."""
        a, b, c = float(a), float(b), float(c)
        if a <= 0:
            raise ScenarioError(f"quadratic Lagrangian needs a > 0, got a={a}")
        gamma = 2 * a if gamma is None else float(gamma)
        if gamma <= 0 or gamma > 2 * a * (1 + 1e-12):
            raise ScenarioError(f"declared gamma={gamma} must lie in (0, 2a={2 * a}]")
        return cls(
            eval=lambda q: a * (np.asarray(q, dtype=float) - b) ** 2 + c,
            deriv=lambda q: 2 * a * (np.asarray(q, dtype=float) - b),
            deriv2=lambda q: np.full(np.shape(q), 2 * a),
            gamma=gamma,
            quad=(a, b, c),
            name=f"quadratic(a={a:g}, b={b:g}, c={c:g})",
        )

    def second_derivative(self, q):
        if self.deriv2 is not None:
            return np.asarray(self.deriv2(q), dtype=float)
        q = np.asarray(q, dtype=float)
        h = _FD_STEP * np.maximum(1.0, np.abs(q))
        return (self.deriv(q + h) - self.deriv(q - h)) / (2 * h)

    def check_convexity(self, probe: Sequence[float] | None = None, slack: float = 1e-6) -> None:
        """Probe ``L'' >= gamma`` and strict monotonicity of ``L'``.

        Raises
        ------
        ScenarioError
            If any probe point violates the declared convexity.
        """
        if not self.gamma > 0:
            raise ScenarioError(f"{self.name}: gamma must be positive, got {self.gamma}")
        q = np.linspace(-10.0, 10.0, 201) if probe is None else np.asarray(probe, dtype=float)
        d2 = self.second_derivative(q)
        if np.any(d2 < self.gamma * (1 - slack) - slack):
            worst = q[np.argmin(d2 - self.gamma)]
            raise ScenarioError(f"{self.name}: L'' < gamma near q={worst:g}")
        dq = np.diff(q)
        dd = np.diff(self.deriv(q))
        if np.any(dd < self.gamma * dq * (1 - slack) - slack):
            raise ScenarioError(f"{self.name}: L' grows slower than gamma on the probe grid")


def conjugate(L: Lagrangian, p):
    """Legendre-Fenchel conjugate ``H(p) = sup_q (p q - L(q))``.

    Returns ``(q_star, value)`` where ``L'(q_star) = p``.

    Raises
    ------
    ConvergenceError
        If the bracket search or the Newton iteration fails, which signals
        a Lagrangian that is not as convex as declared.
    """
    p_arr = np.asarray(p, dtype=float)
    if L.quad is not None:
        a, b, _ = L.quad
        q = b + p_arr / (2 * a)
    else:
        q = _solve_deriv(L, p_arr)
    value = p_arr * q - L.eval(q)
    return _scalar_or_array(q), _scalar_or_array(value)


def _solve_deriv(L: Lagrangian, p: np.ndarray) -> np.ndarray:
    """Solve ``L'(q) = p`` elementwise; the bracket grows from 0 by coercivity."""
    flat = np.atleast_1d(p).astype(float).ravel()
    lo = np.full(flat.shape, -1.0)
    hi = np.full(flat.shape, 1.0)
    for _ in range(200):
        low_bad = L.deriv(lo) > flat
        high_bad = L.deriv(hi) < flat
        if not (low_bad.any() or high_bad.any()):
            break
        lo = np.where(low_bad, 2 * lo, lo)
        hi = np.where(high_bad, 2 * hi, hi)
    else:
        raise ConvergenceError(f"{L.name}: could not bracket L'(q) = p")

    def f(q, mask):
        return L.deriv(q) - flat[mask], L.second_derivative(q)

    q = newton_bisect(f, lo, hi, xtol=1e-15)
    resid = np.abs(L.deriv(q) - flat)
    if np.any(resid > 1e-12 * np.maximum(1.0, np.abs(flat))):
        raise ConvergenceError(f"{L.name}: |L'(q) - p| = {resid.max():.3g} after Newton")
    return q.reshape(np.shape(p))


def hamiltonian(L: Lagrangian, p):
    """``H(p)``, the value half of :func:`conjugate`."""
    return conjugate(L, p)[1]


def h_minus(L: Lagrangian, p):
    """Nonincreasing envelope ``sup_{q <= 0} (p q - L(q))``.

    Equals ``H(p)`` for ``p <= L'(0)`` and ``-L(0)`` beyond, where the
    constrained maximizer sticks at ``q = 0``.
    """
    p_arr = np.asarray(p, dtype=float)
    slope0 = float(L.deriv(np.array(0.0)))
    below = p_arr <= slope0
    # evaluate the conjugate only where it is needed
    h = np.full(p_arr.shape, -float(L.eval(np.array(0.0))))
    if np.any(below):
        h[below] = np.asarray(conjugate(L, p_arr[below])[1])
    return _scalar_or_array(h)


@dataclass(frozen=True)
class Point:
    """A point of the junction: a branch id and the distance to the junction.

    A zero coordinate always canonicalizes to the junction point, so two
    points at coordinate 0 compare equal whatever branch they were built with.
    """

    branch: int
    coord: float = 0.0

    def __post_init__(self):
        coord = float(self.coord)
        if not coord >= 0:
            raise ValueError(f"coordinate must be nonnegative, got {self.coord}")
        object.__setattr__(self, "coord", coord)
        object.__setattr__(self, "branch", JUNCTION if coord == 0 else int(self.branch))
        if self.branch < 0:
            raise ValueError(f"branch id must be positive, got {self.branch}")

    @property
    def is_junction(self) -> bool:
        return self.branch == JUNCTION

    @classmethod
    def parse(cls, text: str) -> "Point":
        """Parse ``"B:COORD"``; ``"0"``, ``"J"`` or ``"junction"`` give the junction point."""
        text = text.strip()
        if text.lower() in ("0", "j", "junction"):
            return cls(JUNCTION, 0.0)
        branch, sep, coord = text.partition(":")
        if not sep:
            raise ValueError(f"expected BRANCH:COORD, got {text!r}")
        return cls(int(branch), float(coord))

    def __str__(self) -> str:
        return "junction" if self.is_junction else f"{self.branch}:{self.coord:g}"


def distance(y: Point, x: Point) -> float:
    """Geodesic distance on the junction."""
    if y.branch == x.branch:
        return abs(x.coord - y.coord)
    return x.coord + y.coord


@dataclass(frozen=True)
class Junction:
    """N branch Lagrangians with the constants derived from them.

    Per-branch tuples are indexed by ``branch id - 1``. ``kappa[l-1]`` is
    ``K_l(0) = L_l(0) - L0(0) >= 0``.
    """

    branches: tuple
    L0_zero: float
    I0: frozenset
    xi_minus: tuple
    xi_plus: tuple
    kappa: tuple
    gamma: float
    gamma0: float
    C0: float

    @property
    def n(self) -> int:
        return len(self.branches)

    def lag(self, l: int) -> Lagrangian:
        if not 1 <= l <= self.n:
            raise ValueError(f"branch id {l} outside 1..{self.n}")
        return self.branches[l - 1]

    def in_I0(self, l: int) -> bool:
        return l in self.I0

    @property
    def k0(self) -> int:
        """Smallest branch id attaining the minimal idling cost."""
        return min(self.I0)

    @property
    def M(self) -> float:
        """``max_i L_i(0)``."""
        return max(float(L.eval(np.array(0.0))) for L in self.branches)


def build_junction(lagrangians: Sequence[Lagrangian], check: bool = True) -> Junction:
    """Validate the Lagrangians and precompute ``L0(0)``, ``I0``, the roots of ``K_l`` and ``C0``.

    Raises
    ------
    ScenarioError
        On an empty list or a Lagrangian failing the convexity probe.
    """
    lags = tuple(lagrangians)
    if not lags:
        raise ScenarioError("a junction needs at least one branch")
    if check:
        for L in lags:
            L.check_convexity()
    zero = np.array(0.0)
    at0 = [float(L.eval(zero)) for L in lags]
    L0 = min(at0)
    I0 = frozenset(l for l, v in enumerate(at0, start=1) if v - L0 <= I0_TOL)
    kappa = tuple(0.0 if l in I0 else v - L0 for l, v in enumerate(at0, start=1))
    gamma = min(L.gamma for L in lags)
    gamma0 = max(abs(float(L.deriv(zero))) for L in lags)
    C0 = max(0.0, -L0 + gamma0 ** 2 / gamma)

    partial = Junction(lags, L0, I0, (0.0,) * len(lags), (0.0,) * len(lags), kappa, gamma, gamma0, C0)
    xi_m, xi_p = [], []
    for l in range(1, len(lags) + 1):
        if l in I0:
            xi_m.append(0.0)
            xi_p.append(0.0)
        else:
            xi_m.append(float(k_inverse(partial, l, 0.0, -1)))
            xi_p.append(float(k_inverse(partial, l, 0.0, +1)))
    return Junction(lags, L0, I0, tuple(xi_m), tuple(xi_p), kappa, gamma, gamma0, C0)


def k_eval(J: Junction, l: int, xi):
    """``K_l(xi) = L_l(xi) - xi L_l'(xi) - L0(0)``."""
    L = J.lag(l)
    xi = np.asarray(xi, dtype=float)
    if L.quad is not None:
        a = L.quad[0]
        return _scalar_or_array(J.kappa[l - 1] - a * xi * xi)
    return _scalar_or_array(L.eval(xi) - xi * L.deriv(xi) - J.L0_zero)


def k_derivative(J: Junction, l: int, xi):
    """``K_l'(xi) = -xi L_l''(xi)``."""
    xi = np.asarray(xi, dtype=float)
    return -xi * J.lag(l).second_derivative(xi)


def k_inverse(J: Junction, l: int, v, sign: int):
    """Inverse of ``K_l`` restricted to ``[0, inf)`` (``sign=+1``) or ``(-inf, 0]`` (``sign=-1``).

    Raises
    ------
    ValueError
        If some ``v`` exceeds ``K_l(0)``, the maximum of ``K_l``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    L = J.lag(l)
    k0 = J.kappa[l - 1]
    v_arr = np.asarray(v, dtype=float)
    excess = v_arr - k0
    if np.any(excess > 1e-12 * max(1.0, abs(k0))):
        raise ValueError(f"K_{l} is bounded by K_{l}(0)={k0:g}; cannot invert {np.max(v_arr):g}")
    gap = np.maximum(-excess, 0.0)
    if L.quad is not None:
        return _scalar_or_array(sign * np.sqrt(gap / L.quad[0]))

    flat = np.atleast_1d(gap).ravel()
    # |xi| -> g(|xi|) = K_l(0) - K_l(sign |xi|) is increasing from 0
    hi = np.ones(flat.shape)
    for _ in range(200):
        short = k0 - np.asarray(k_eval(J, l, sign * hi)) < flat
        if not short.any():
            break
        hi = np.where(short, 2 * hi, hi)
    else:
        raise ConvergenceError(f"could not bracket K_{l} inverse")

    def f(s, mask):
        return k0 - np.asarray(k_eval(J, l, sign * s)) - flat[mask], -sign * k_derivative(J, l, sign * s)

    s = newton_bisect(f, np.zeros(flat.shape), hi, xtol=1e-15)
    s = np.where(flat == 0, 0.0, s)
    return _scalar_or_array((sign * s).reshape(np.shape(gap)))


def hamiltonian_at(J: Junction, x: Point, grad) -> float:
    """Hamiltonian of the junction problem at ``x``.

    Interior points take one gradient and return ``H_{i(x)}(p)``; the junction
    point takes one gradient per branch and returns ``max_i H_i^-(p_i)``.
    """
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    if x.is_junction:
        if g.shape != (J.n,):
            raise ValueError(f"junction point needs {J.n} branch gradients, got {g.size}")
        return max(float(h_minus(J.lag(l), g[l - 1])) for l in range(1, J.n + 1))
    if g.size != 1:
        raise ValueError(f"interior point needs one gradient, got {g.size}")
    return float(hamiltonian(J.lag(x.branch), g[0]))
