"""Value function of the junction control problem through the Hopf-Lax formula.

``u(t, x) = min_y u0(y) + D(0, y; t, x)`` is evaluated by a coarse scan of
each branch within a coercivity radius, followed by golden-section
refinement of the best local brackets. Everything is vectorized over the
target nodes of one branch, so a whole grid row costs a handful of numpy
passes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .convex_core import JUNCTION, Junction, Point, h_minus, hamiltonian
from .minimal_action import pair_values

#: coarse scan nodes per branch
N_SCAN = 512
#: local brackets refined per branch and target
N_BRACKETS = 3
GOLDEN_ITERS = 60
#: targets per vectorized batch in grid solves
CHUNK = 1024
#: safety factor applied to the coercivity radius
RADIUS_FACTOR = 1.5

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class InitialDatum:
    """Lipschitz initial condition given branch by branch.

    ``func(branch, coords)`` evaluates the datum on an array of coordinates
    of one branch and must agree across branches at coordinate 0.
    ``breakpoints`` lists, per branch, the coordinates where the datum may
    have kinks. ``offset`` is a constant added after minimization, which
    keeps constant shifts exact.
    """

    func: Callable[[int, np.ndarray], np.ndarray]
    lipschitz: float
    breakpoints: Mapping[int, tuple] = field(default_factory=dict)
    offset: float = 0.0
    name: str = field(default="datum", compare=False)

    def __post_init__(self):
        if not self.lipschitz >= 0:
            raise ValueError(f"Lipschitz constant must be nonnegative, got {self.lipschitz}")

    def base_values(self, branch: int, coords) -> np.ndarray:
        """Datum without the constant offset."""
        return np.asarray(self.func(branch, np.asarray(coords, dtype=float)), dtype=float)

    def values(self, branch: int, coords) -> np.ndarray:
        return self.base_values(branch, coords) + self.offset

    def eval(self, p: Point) -> float:
        return float(self.values(p.branch if not p.is_junction else 1, np.array([p.coord]))[0])

    def shifted(self, c: float) -> "InitialDatum":
        return InitialDatum(self.func, self.lipschitz, self.breakpoints, self.offset + float(c), self.name)

    @classmethod
    def zero(cls) -> "InitialDatum":
        return cls(lambda b, x: np.zeros(np.shape(x)), 0.0, name="zero")

    @classmethod
    def constant(cls, c: float) -> "InitialDatum":
        return cls.zero().shifted(c)

    @classmethod
    def linear_per_branch(cls, slopes: Sequence[float]) -> "InitialDatum":
        """``u0 = slopes[i-1] * x`` on branch ``i``."""
        s = tuple(float(v) for v in slopes)

        def func(b, x):
            return s[b - 1] * x

        return cls(func, max((abs(v) for v in s), default=0.0), name="linear")

    @classmethod
    def piecewise_linear(cls, nodes: Mapping[int, tuple]) -> "InitialDatum":
        """Interpolate ``{branch: (coords, values)}``; the end segments extend linearly.

        Raises
        ------
        ValueError
            If coordinates do not start at 0, are not increasing, or the
            branches disagree at the junction.
        """
        tables = {}
        slopes = []
        at0 = []
        for b, (xs, vs) in nodes.items():
            xs = np.asarray(xs, dtype=float)
            vs = np.asarray(vs, dtype=float)
            if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
                raise ValueError(f"branch {b}: need matching 1-D coordinate and value lists of length >= 2")
            if xs[0] != 0 or np.any(np.diff(xs) <= 0):
                raise ValueError(f"branch {b}: coordinates must increase from 0")
            tables[int(b)] = (xs, vs)
            slopes.append(np.max(np.abs(np.diff(vs) / np.diff(xs))))
            at0.append(vs[0])
        if at0 and max(at0) - min(at0) > 1e-12 * max(1.0, max(abs(v) for v in at0)):
            raise ValueError(f"branch values disagree at the junction: {at0}")

        def func(b, x):
            xs, vs = tables[b]
            out = np.interp(x, xs, vs)
            hi = x > xs[-1]
            if np.any(hi):
                slope = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])
                out = np.where(hi, vs[-1] + slope * (x - xs[-1]), out)
            return out

        bps = {b: tuple(xs) for b, (xs, _) in tables.items()}
        return cls(func, float(max(slopes, default=0.0)), bps, name="piecewise-linear")

    def check_lipschitz(self, n_branches: int, xmax: float = 5.0, n: int = 201, seed: int = 0) -> float:
        """Largest observed ``|u0(p) - u0(q)| / d(p, q)`` on random pairs; should not exceed ``lipschitz``."""
        rng = np.random.default_rng(seed)
        bj = rng.integers(1, n_branches + 1, n)
        bi = rng.integers(1, n_branches + 1, n)
        yj = rng.uniform(0, xmax, n)
        xi = rng.uniform(0, xmax, n)
        uy = np.array([self.base_values(int(b), np.array([c]))[0] for b, c in zip(bj, yj)])
        ux = np.array([self.base_values(int(b), np.array([c]))[0] for b, c in zip(bi, xi)])
        d = np.where(bj == bi, np.abs(xi - yj), xi + yj)
        ok = d > 0
        return float(np.max(np.abs(ux - uy)[ok] / d[ok], initial=0.0))


@dataclass(frozen=True)
class GridSolution:
    """Values on a time-by-branch grid.

    ``values[b-1]`` has shape ``(len(times), len(coords[b-1]))``; column 0 of
    every branch is the junction trace.
    """

    junction: Junction
    datum: InitialDatum
    times: np.ndarray
    coords: tuple
    values: tuple

    @property
    def junction_trace(self) -> np.ndarray:
        return self.values[0][:, 0]

    def branch_values(self, branch: int) -> np.ndarray:
        return self.values[branch - 1]


def time_bound_constant(J: Junction, u0: InitialDatum) -> float:
    """``C`` with ``|u(t, x) - u0(x)| <= C t``: ``max(C0 + L_u0^2 / gamma, max_i L_i(0))``."""
    c2 = J.C0 + u0.lipschitz ** 2 / J.gamma
    return max(c2, J.M)


def _threads() -> int:
    raw = os.environ.get("JUNCTION_HJ_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# vectorized minimization for targets on one branch


def _scaled_values(J: Junction, t, j: int, y: np.ndarray, i: int, xc: np.ndarray) -> np.ndarray:
    """``D(0, y e_j; t, x e_i)``; ``i == JUNCTION`` targets the junction point.

    ``t`` and ``xc`` broadcast against ``y`` (one row per target).
    """
    if i == JUNCTION:
        d = np.min([pair_values(J, j, y / t, e, np.zeros_like(y)) for e in range(1, J.n + 1)], axis=0)
    else:
        d = pair_values(J, j, y / t, i, np.broadcast_to(xc, y.shape) / t)
    return t * d


def _objective(J, u0, t, j, y, i, xc):
    return u0.base_values(j, y) + _scaled_values(J, t, j, y, i, xc)


def search_radius(J: Junction, u0: InitialDatum, t, i: int, xc) -> np.ndarray:
    """Distance beyond which ``u0(y) + D(0, y; t, x)`` exceeds its value at ``y = x``, padded."""
    xc = np.atleast_1d(np.asarray(xc, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), xc.shape)
    if i == JUNCTION:
        stay = t * J.L0_zero
    else:
        stay = t * pair_values(J, i, xc / t, i, xc / t)
    qa = J.gamma / (4 * t)
    c = np.maximum(J.C0 * t + stay, 0.0)
    Lu = u0.lipschitz
    return RADIUS_FACTOR * (Lu + np.sqrt(Lu * Lu + 4 * qa * c)) / (2 * qa)


def _branch_range(J, i, xc, R, j):
    if i != JUNCTION and j == i:
        return np.maximum(xc - R, 0.0), xc + R
    return np.zeros_like(xc), np.maximum(R - xc, 0.0)


def _golden(obj, a, b):
    """Elementwise golden-section search; one objective call per iteration."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(GOLDEN_ITERS):
        left = fc <= fd
        # keep [a, d] on the left move, [c, b] otherwise
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        z = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fz = obj(z)
        c = np.where(left, z, keep)
        fc = np.where(left, fz, fkeep)
        d = np.where(left, keep, z)
        fd = np.where(left, fkeep, fz)
    take_c = fc <= fd
    return np.where(take_c, c, d), np.where(take_c, fc, fd)


def _pick(values, coords):
    """Row-wise min value; ties go to the smallest coordinate."""
    vmin = np.min(values, axis=1)
    tied = values <= vmin[:, None]
    cmin = np.min(np.where(tied, coords, np.inf), axis=1)
    return vmin, cmin


def _minimize(J: Junction, u0: InitialDatum, t, i: int, xc: np.ndarray, n_scan: int = N_SCAN):
    """Minimize over sources for targets ``(t, xc)`` on branch ``i``; ``t`` may vary per target.

    Returns ``(value without offset, argmin branch, argmin coordinate)``.
    """
    t = np.broadcast_to(np.asarray(t, dtype=float), xc.shape)
    R = search_radius(J, u0, t, i, xc)
    m = xc.size
    best = np.full(m, np.inf)
    best_b = np.zeros(m, dtype=int)
    best_y = np.zeros(m)
    s = np.linspace(0.0, 1.0, n_scan)
    rows = np.arange(m)
    for j in range(1, J.n + 1):
        lo, hi = _branch_range(J, i, xc, R, j)
        live = hi > lo
        if not live.any():
            continue
        xl = xc[live][:, None]
        tl = t[live][:, None]
        lo_l, hi_l = lo[live], hi[live]
        grid = lo_l[:, None] + (hi_l - lo_l)[:, None] * s
        f = _objective(J, u0, tl, j, grid, i, xl)

        # local minima of the scan, best few per row
        pad = np.pad(f, ((0, 0), (1, 1)), constant_values=np.inf)
        is_min = (f <= pad[:, :-2]) & (f <= pad[:, 2:])
        score = np.where(is_min, f, np.inf)
        nb = min(N_BRACKETS, n_scan)
        k = np.argsort(score, axis=1, kind="stable")[:, :nb]
        km = np.clip(k - 1, 0, n_scan - 1)
        kp = np.clip(k + 1, 0, n_scan - 1)
        r = np.arange(k.shape[0])[:, None]
        a, b = grid[r, km], grid[r, kp]
        y_ref, f_ref = _golden(lambda y: _objective(J, u0, tl, j, y, i, xl), a, b)

        extra = [grid[:, :1]]
        if i == j:
            extra.append(np.clip(xl, lo_l[:, None], hi_l[:, None]))
        bps = np.asarray(u0.breakpoints.get(j, ()), dtype=float)
        if bps.size:
            bp = np.broadcast_to(bps, (xl.shape[0], bps.size))
            extra.append(np.clip(bp, lo_l[:, None], hi_l[:, None]))
        y_ex = np.concatenate(extra, axis=1)
        f_ex = _objective(J, u0, tl, j, y_ex, i, xl)

        vals = np.concatenate([f, f_ref, f_ex], axis=1)
        ys = np.concatenate([grid, y_ref, y_ex], axis=1)
        v, y = _pick(vals, ys)
        idx = rows[live]
        better = v < best[idx]
        best[idx[better]] = v[better]
        best_b[idx[better]] = j
        best_y[idx[better]] = y[better]
    return best, best_b, best_y


def solve_point(J: Junction, u0: InitialDatum, t: float, x: Point, n_scan: int = N_SCAN):
    """``u(t, x)`` and a minimizing starting point.

    Raises
    ------
    ValueError
        If ``t <= 0``.
    """
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    i = JUNCTION if x.is_junction else x.branch
    if i > J.n:
        raise ValueError(f"{x} lies on a branch outside 1..{J.n}")
    v, b, y = _minimize(J, u0, float(t), i, np.array([x.coord]), n_scan)
    return float(v[0]) + u0.offset, Point(int(b[0]), float(y[0]))


def solve_nodes(J: Junction, u0: InitialDatum, t: float, branch: int, coords, n_scan: int = N_SCAN) -> np.ndarray:
    """``u(t, .)`` at many coordinates of one branch (``branch=JUNCTION`` for the junction point)."""
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    coords = np.atleast_1d(np.asarray(coords, dtype=float))
    if branch != JUNCTION and np.any(coords == 0):
        out = np.empty(coords.shape)
        zero = coords == 0
        out[zero] = solve_nodes(J, u0, t, JUNCTION, [0.0], n_scan)[0]
        if (~zero).any():
            out[~zero] = solve_nodes(J, u0, t, branch, coords[~zero], n_scan)
        return out
    return _minimize(J, u0, float(t), branch, coords, n_scan)[0] + u0.offset


def uniform_coords(n_branches: int, xmax: float, nx: int) -> tuple:
    """Same ``linspace(0, xmax, nx)`` on every branch."""
    if nx < 2 or not xmax > 0:
        raise ValueError("need nx >= 2 and xmax > 0")
    return tuple(np.linspace(0.0, xmax, nx) for _ in range(n_branches))


def _validate_grid(J, times, coords):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a nonempty increasing list of nonnegative values")
    if len(coords) != J.n:
        raise ValueError(f"need coordinates for {J.n} branches, got {len(coords)}")
    out = []
    for b, c in enumerate(coords, start=1):
        c = np.asarray(c, dtype=float)
        if c.ndim != 1 or c.size < 1 or c[0] != 0 or np.any(np.diff(c) <= 0):
            raise ValueError(f"branch {b}: coordinates must increase from 0")
        out.append(c)
    return times, tuple(out)


def solve_grid(
    J: Junction,
    u0: InitialDatum,
    times,
    coords,
    n_scan: int = N_SCAN,
    threads: Optional[int] = None,
) -> GridSolution:
    """Evaluate ``u`` on every node; a ``t = 0`` row is copied from ``u0``.

    Targets of one branch are batched across rows into chunks of
    ``CHUNK`` nodes; chunks run on a thread pool capped by ``threads``
    (default: ``JUNCTION_HJ_THREADS``, 0 meaning all cores).
    """
    times, coords = _validate_grid(J, times, coords)
    values = [np.empty((times.size, c.size)) for c in coords]
    rows = np.flatnonzero(times > 0)
    for k in np.flatnonzero(times == 0):
        for b, c in enumerate(coords, start=1):
            values[b - 1][k] = u0.values(b, c)

    trace = np.empty(times.size)
    tasks = []
    if rows.size:
        tasks.append((JUNCTION, times[rows], np.zeros(rows.size), (None, rows)))
    for b, c in enumerate(coords, start=1):
        if c.size > 1 and rows.size:
            kk, cc = np.meshgrid(rows, np.arange(1, c.size), indexing="ij")
            tasks.append((b, times[kk.ravel()], c[cc.ravel()], (kk.ravel(), cc.ravel())))
    chunks = []
    for i, t, x, dest in tasks:
        for lo in range(0, t.size, CHUNK):
            sl = slice(lo, lo + CHUNK)
            chunks.append((i, t[sl], x[sl], dest, sl))

    def run(chunk):
        i, t, x, (kk, cc), sl = chunk
        v = _minimize(J, u0, t, i, x, n_scan)[0] + u0.offset
        if i == JUNCTION:
            trace[cc[sl]] = v
        else:
            values[i - 1][kk[sl], cc[sl]] = v

    workers = threads if threads is not None else _threads()
    if workers <= 1 or len(chunks) <= 1:
        for ch in chunks:
            run(ch)
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            list(pool.map(run, chunks))
    for b in range(J.n):
        values[b][rows, 0] = trace[rows]
    return GridSolution(J, u0, times, coords, tuple(values))


# ---------------------------------------------------------------------------
# verification


def dpp_check(
    J: Junction, sol: GridSolution, s_index: int, t_index: int, n_scan: int = N_SCAN, nodes_only: bool = False
) -> float:
    """Largest ``|u(t, x) - min_y u(s, y) + D(s, y; t, x)|`` over eligible nodes of row ``t``.

    ``u(s, .)`` is interpolated linearly between the nodes of row ``s``;
    with ``nodes_only`` the minimum runs over the nodes of row ``s`` alone,
    which is the grid version of the principle and carries an ``O(dx^2)``
    defect. Only target nodes whose search radius stays inside the gridded
    domain are checked.

    Raises
    ------
    ValueError
        On out-of-range indices, ``s_index > t_index`` or a grid too short
        to hold any search range.
    """
    nt = sol.times.size
    if not (0 <= s_index < nt and 0 <= t_index < nt) or s_index > t_index:
        raise ValueError(f"need 0 <= s_index <= t_index < {nt}, got {s_index}, {t_index}")
    if s_index == t_index:
        return 0.0
    s, t = sol.times[s_index], sol.times[t_index]
    datum = InitialDatum.piecewise_linear(
        {b: (c, sol.values[b - 1][s_index]) for b, c in enumerate(sol.coords, start=1)}
    )
    h = t - s
    xmax = np.array([c[-1] for c in sol.coords])
    worst = 0.0
    checked = 0
    targets = [(JUNCTION, np.array([0.0]), np.array([sol.junction_trace[t_index]]))]
    for b, c in enumerate(sol.coords, start=1):
        targets.append((b, c[1:], sol.values[b - 1][t_index, 1:]))
    for i, xc, u_t in targets:
        if xc.size == 0:
            continue
        R = search_radius(J, datum, h, i, xc)
        fits = np.ones(xc.shape, dtype=bool)
        for j in range(1, J.n + 1):
            lo, hi = _branch_range(J, i, xc, R, j)
            fits &= hi <= xmax[j - 1]
        if not fits.any():
            continue
        checked += int(fits.sum())
        if nodes_only:
            col = xc[fits][:, None]
            v = np.full(col.shape[0], np.inf)
            for j, c in enumerate(sol.coords, start=1):
                y = np.broadcast_to(c, (col.shape[0], c.size))
                w = sol.values[j - 1][s_index] + _scaled_values(J, h, j, y, i, col)
                v = np.minimum(v, w.min(axis=1))
        else:
            v = _minimize(J, datum, h, i, xc[fits], n_scan)[0] + datum.offset
        worst = max(worst, float(np.max(np.abs(u_t[fits] - v))))
    if not checked:
        raise ValueError("no target node has its search range inside the grid; enlarge xmax")
    return worst


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of :func:`residual_check`; residuals are maxima over the counted nodes."""

    smooth_nodes: int
    kink_nodes: int
    junction_nodes: int
    max_interior: float
    max_junction: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_interior <= self.tol and self.max_junction <= self.tol


def residual_check(J: Junction, sol: GridSolution, tol: float = 5e-2, theta_factor: float = 10.0) -> ResidualReport:
    """Finite-difference residuals of ``u_t + H_i(u_x) = 0`` and the junction condition.

    A node counts as smooth when forward and backward differences agree
    within ``theta_factor`` times the step, in space and in time; other
    interior nodes are counted as kinks and skipped. The junction node uses
    one-sided differences into each branch and the ``max_i H_i^-`` condition.

    Raises
    ------
    ValueError
        If a direction has fewer than 3 nodes.
    """
    times = sol.times
    if times.size < 3 or any(c.size < 3 for c in sol.coords):
        raise ValueError("residual check needs at least 3 nodes per direction")
    dt_f = np.diff(times)
    smooth = kinks = 0
    max_int = 0.0
    for b, c in enumerate(sol.coords, start=1):
        u = sol.values[b - 1]
        dx = np.diff(c)
        fwd = (u[1:-1, 2:] - u[1:-1, 1:-1]) / dx[1:]
        bwd = (u[1:-1, 1:-1] - u[1:-1, :-2]) / dx[:-1]
        tf = (u[2:, 1:-1] - u[1:-1, 1:-1]) / dt_f[1:, None]
        tb = (u[1:-1, 1:-1] - u[:-2, 1:-1]) / dt_f[:-1, None]
        hx = np.maximum(dx[1:], dx[:-1])
        ht = np.maximum(dt_f[1:], dt_f[:-1])[:, None]
        ok = (np.abs(fwd - bwd) <= theta_factor * hx) & (np.abs(tf - tb) <= theta_factor * ht)
        ux = (u[1:-1, 2:] - u[1:-1, :-2]) / (c[2:] - c[:-2])
        ut = (u[2:, 1:-1] - u[:-2, 1:-1]) / (times[2:] - times[:-2])[:, None]
        res = np.abs(ut + np.asarray(hamiltonian(J.lag(b), ux)))
        smooth += int(ok.sum())
        kinks += int((~ok).sum())
        if ok.any():
            max_int = max(max_int, float(res[ok].max()))

    trace = sol.junction_trace
    ut = (trace[2:] - trace[:-2]) / (times[2:] - times[:-2])
    tf = (trace[2:] - trace[1:-1]) / dt_f[1:]
    tb = (trace[1:-1] - trace[:-2]) / dt_f[:-1]
    ok = np.abs(tf - tb) <= theta_factor * np.maximum(dt_f[1:], dt_f[:-1])
    hm = np.max(
        [
            np.asarray(h_minus(J.lag(b), (sol.values[b - 1][1:-1, 1] - trace[1:-1]) / c[1]))
            for b, c in enumerate(sol.coords, start=1)
        ],
        axis=0,
    )
    res = np.abs(ut + hm)
    max_j = float(res[ok].max()) if ok.any() else 0.0
    kinks += int((~ok).sum())
    return ResidualReport(smooth, kinks, int(ok.sum()), max_int, max_j, tol)
