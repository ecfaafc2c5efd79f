"""Brute-force references for the closed-form action and the Hopf-Lax solver.

Nothing here calls into :mod:`minimal_action`; the oracles only evaluate
branch Lagrangians along explicit trajectories. Any trajectory cost is an
upper bound of the true minimal action, so the oracles approach the exact
values from above as their grids are refined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convex_core import Junction, Point

_CHUNK = 4096


@dataclass(frozen=True)
class OracleConfig:
    """Grid sizes for the brute-force searches.

    ``n_tau`` points per time axis, ``n_y`` points per branch for the
    space search within ``radius``, ``refine`` zoom rounds around the
    incumbent time pair.
    """

    n_tau: int = 2000
    n_y: int = 2001
    radius: float = 5.0
    refine: int = 3

    def __post_init__(self):
        if self.n_tau < 2 or self.n_y < 2 or self.refine < 0:
            raise ValueError("oracle grid counts must be >= 2 and refine >= 0")
        if not self.radius > 0:
            raise ValueError("oracle radius must be positive")


def _entry(L, L0: float, y: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Reach the junction from ``y`` at time ``tau``; rows follow ``y``."""
    y = y[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cost = tau * L.eval(-y / tau) - tau * L0
    cost = np.where(tau == 0, np.inf, cost)
    return np.where(y == 0, 0.0, cost)


def _exit(L, L0: float, x: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Wait at the junction until ``tau``, then reach ``x`` at time 1."""
    x = x[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cost = (1 - tau) * L.eval(x / (1 - tau)) + tau * L0
    cost = np.where(tau == 1, np.inf, cost)
    return np.where(x == 0, L0, cost)


def _two_phase(J: Junction, j: int, y: np.ndarray, i: int, x: np.ndarray, cfg: OracleConfig) -> np.ndarray:
    """Min over ``0 <= tau1 <= tau2 <= 1`` of entry + exit costs, row by row."""
    Lj, Li, L0 = J.lag(j), J.lag(i), J.L0_zero
    m = y.size
    n = cfg.n_tau
    s = np.linspace(0.0, 1.0, n)
    lo1 = np.zeros(m)
    hi1 = np.ones(m)
    lo2 = np.zeros(m)
    hi2 = np.ones(m)
    best = np.full(m, np.inf)
    rows = np.arange(m)
    for _ in range(cfg.refine + 1):
        t1 = lo1[:, None] + (hi1 - lo1)[:, None] * s
        t2 = lo2[:, None] + (hi2 - lo2)[:, None] * s
        e1 = _entry(Lj, L0, y, t1)
        e2 = _exit(Li, L0, x, t2)
        # for each tau2, the admissible tau1 form a prefix of the sorted tau1 grid
        run = np.minimum.accumulate(e1, axis=1)
        arg = _running_argmin(e1)
        h1 = (hi1 - lo1)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((t2 - lo1[:, None]) / np.where(h1 > 0, h1, 1.0) * (n - 1)).astype(int)
        k = np.where(h1 > 0, k, np.where(t2 >= lo1[:, None], n - 1, -1))
        k = np.clip(k, -1, n - 1)
        over = (k >= 0) & (np.take_along_axis(t1, np.maximum(k, 0), axis=1) > t2)
        k = k - over
        over = (k >= 0) & (np.take_along_axis(t1, np.maximum(k, 0), axis=1) > t2)
        k = k - over
        ok = k >= 0
        kk = np.maximum(k, 0)
        total = np.where(ok, np.take_along_axis(run, kk, axis=1) + e2, np.inf)
        b = np.argmin(total, axis=1)
        val = total[rows, b]
        a = arg[rows, kk[rows, b]]
        improved = val < best
        best = np.where(improved, val, best)
        c1 = t1[rows, a]
        c2 = t2[rows, b]
        w1 = 2 * (hi1 - lo1) / (n - 1)
        w2 = 2 * (hi2 - lo2) / (n - 1)
        lo1, hi1 = np.maximum(c1 - w1, 0.0), np.minimum(c1 + w1, 1.0)
        lo2, hi2 = np.maximum(c2 - w2, 0.0), np.minimum(c2 + w2, 1.0)
    return best


def _running_argmin(e: np.ndarray) -> np.ndarray:
    """Index of the prefix minimum along axis 1."""
    n = e.shape[1]
    idx = np.broadcast_to(np.arange(n), e.shape)
    run = np.minimum.accumulate(e, axis=1)
    hit = np.where(e <= run, idx, 0)
    return np.maximum.accumulate(hit, axis=1)


def _straight(J: Junction, j: int, y: np.ndarray, i: int, x: np.ndarray) -> np.ndarray:
    if i != j:
        # a crossing path has to touch the junction; only degenerate endpoints stay "straight"
        out = np.full(y.shape, np.inf)
        cross_y = y == 0
        out[cross_y] = J.lag(i).eval(x[cross_y])
        cross_x = (x == 0) & ~cross_y
        out[cross_x] = J.lag(j).eval(-y[cross_x])
        both = cross_y & (x == 0)
        out[both] = J.L0_zero
        return out
    out = J.lag(i).eval(x - y)
    return np.where((y == 0) & (x == 0), J.L0_zero, out)


def pair_brute_force(
    J: Junction, j: int, y, i: int, x, cfg: OracleConfig = OracleConfig(), straight: bool = True
) -> np.ndarray:
    """Vectorized trajectory-grid action for entry branch ``j`` and exit branch ``i``."""
    y, x = (np.asarray(a, dtype=float).ravel() for a in np.broadcast_arrays(np.asarray(y, float), np.asarray(x, float)))
    shape = np.broadcast(np.asarray(y), np.asarray(x)).shape
    out = np.empty(y.size)
    step = max(1, _CHUNK * 500 // cfg.n_tau)
    for start in range(0, y.size, step):
        sl = slice(start, start + step)
        val = _two_phase(J, j, y[sl], i, x[sl], cfg)
        if straight:
            val = np.minimum(val, _straight(J, j, y[sl], i, x[sl]))
        out[sl] = val
    return out.reshape(shape)


def brute_force_d0(J: Junction, y: Point, x: Point, cfg: OracleConfig = OracleConfig(), straight: bool = True) -> float:
    """Minimal action over straight and two-phase trajectories on explicit time grids.

    With ``straight=False`` only trajectories through the junction count.
    """
    js = range(1, J.n + 1) if y.is_junction else (y.branch,)
    is_ = range(1, J.n + 1) if x.is_junction else (x.branch,)
    return min(
        float(pair_brute_force(J, j, [y.coord], i, [x.coord], cfg, straight)[0]) for j in js for i in is_
    )


def brute_force_solve(J: Junction, u0, t: float, x: Point, cfg: OracleConfig = OracleConfig()) -> float:
    """Hopf-Lax value by scanning ``n_y`` starting points per branch within ``cfg.radius``."""
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    ys = np.linspace(0.0, cfg.radius, cfg.n_y)
    is_ = range(1, J.n + 1) if x.is_junction else (x.branch,)
    best = np.inf
    for j in range(1, J.n + 1):
        d = np.min([pair_brute_force(J, j, ys / t, i, np.full(ys.shape, x.coord / t), cfg) for i in is_], axis=0)
        best = min(best, float(np.min(u0.values(j, ys) + t * d)))
    return best


def line_lax_oleinik(
    lagrangian: Callable[[np.ndarray], np.ndarray],
    u0_line: Callable[[np.ndarray], np.ndarray],
    t: float,
    X,
    cfg: OracleConfig = OracleConfig(),
):
    """Classical Hopf-Lax formula on the real line, ``min_Y u0(Y) + t Lambda((X - Y)/t)``.

    The search grid is ``X + linspace(-radius, radius, n_y)``.
    """
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    X_arr = np.atleast_1d(np.asarray(X, dtype=float))
    offsets = np.linspace(-cfg.radius, cfg.radius, cfg.n_y)
    out = np.empty(X_arr.shape)
    step = max(1, 2_000_000 // cfg.n_y)
    for start in range(0, X_arr.size, step):
        Xs = X_arr[start:start + step, None]
        Y = Xs + offsets
        out[start:start + step] = np.min(u0_line(Y) + t * lagrangian((Xs - Y) / t), axis=1)
    return float(out[0]) if np.ndim(X) == 0 else out
