"""Vectorized safeguarded Newton iteration for monotone scalar equations."""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

from .errors import ConvergenceError

# func(x, mask) -> (value, slope); ``mask`` selects which of the original
# elements ``x`` belongs to, so per-element parameters can be sliced.
ValueAndSlope = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def newton_bisect(
    func: ValueAndSlope,
    lo,
    hi,
    *,
    xtol: float = 1e-14,
    rtol: float = 0.0,
    ftol: float = 0.0,
    maxiter: int = 200,
    x0=None,
) -> np.ndarray:
    """Solve ``func(x) = 0`` elementwise for a function increasing on ``[lo, hi]``.

    Requires ``func(lo) <= 0 <= func(hi)``. Newton steps are accepted only
    when they land strictly inside the current bracket; otherwise a secant
    step through the bracket ends is tried, then bisection. ``x0`` is an
    optional starting point inside the bracket. Iteration stops once the
    bracket or the Newton step drops below ``xtol max(1, |x|) + rtol |x|``.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    shape = lo.shape
    lo = lo.ravel().copy()
    hi = hi.ravel().copy()
    x = 0.5 * (lo + hi)
    if x0 is not None:
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), shape).ravel()
        x = np.where((x0 > lo) & (x0 < hi), x0, x)
    everywhere = np.ones(x.shape, dtype=bool)
    flo = np.asarray(func(lo, everywhere)[0], dtype=float).copy()
    fhi = np.asarray(func(hi, everywhere)[0], dtype=float).copy()
    # an end that is already a root wins; the rest iterate
    x = np.where(flo == 0, lo, np.where(fhi == 0, hi, x))
    active = (flo != 0) & (fhi != 0)
    # which end the previous iterate replaced: 1 lower, -1 upper, 0 none yet
    side = np.zeros(x.shape, dtype=np.int8)

    for _ in range(maxiter):
        if not active.any():
            return x.reshape(shape)
        xa = x[active]
        f, df = func(xa, active)
        hit = np.abs(f) <= ftol
        neg = f < 0
        lo_a = np.where(neg, xa, lo[active])
        hi_a = np.where(neg, hi[active], xa)
        # Illinois rule: an end that survives twice has its value halved,
        # otherwise the secant creeps toward the other end
        new_side = np.where(neg, 1, -1).astype(np.int8)
        stale = new_side == side[active]
        flo_a = np.where(neg, f, np.where(stale, 0.5 * flo[active], flo[active]))
        fhi_a = np.where(neg, np.where(stale, 0.5 * fhi[active], fhi[active]), f)
        side[active] = new_side
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / df
            xs = lo_a - flo_a * (hi_a - lo_a) / (fhi_a - flo_a)
        xn = xa - step
        tol = xtol * np.maximum(1.0, np.abs(xa)) + rtol * np.abs(xa)
        # converged before the step is rounded away against a bracket end
        done = hit | (hi_a - lo_a <= tol) | (np.abs(step) <= tol)
        bad = ~np.isfinite(xn) | (xn <= lo_a) | (xn >= hi_a)
        # a convex or concave function makes Newton overshoot a nearby bracket end
        secant_ok = np.isfinite(xs) & (xs > lo_a) & (xs < hi_a)
        # a secant that rounds onto an end means that end is the root to the last ulp
        on_end = bad & np.isfinite(xs) & ~secant_ok
        end = np.where(xs <= lo_a, lo_a, hi_a)
        xn = np.where(bad, np.where(secant_ok, xs, 0.5 * (lo_a + hi_a)), xn)
        xn = np.where(done & bad, xa, xn)
        xn = np.where(on_end & ~done, end, xn)
        done = done | on_end
        lo[active] = lo_a
        hi[active] = hi_a
        flo[active] = flo_a
        fhi[active] = fhi_a
        x[active] = np.where(hit, xa, xn)
        idx = np.flatnonzero(active)
        active[idx[done]] = False

    if active.any():
        raise ConvergenceError(
            f"safeguarded Newton failed to converge for {int(active.sum())} element(s)"
        )
    return x.reshape(shape)
