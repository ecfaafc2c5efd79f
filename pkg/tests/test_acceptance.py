"""Acceptance criteria, one test each.

Every test records a ``[PASS]``/``[FAIL]`` line through the ``report``
fixture; the lines are repeated in a summary section at the end of the run.
"""

import time

import numpy as np
import pytest

from junction_hj import InitialDatum, Lagrangian, build_junction, solve_grid
from junction_hj.checks import (
    Context,
    boundary_residuals,
    c1_mismatch,
    check_k_identities,
    comparison_violations,
    coercivity_violations,
    dpp_refinement,
    involution_error,
    pde_residuals,
    time_bound_violations,
    _smooth_mask,
)
from junction_hj.convex_core import hamiltonian
from junction_hj.hopf_lax import uniform_coords
from junction_hj.minimal_action import junction_arm
from junction_hj.oracle import OracleConfig, line_lax_oleinik, pair_brute_force
from junction_hj.traffic import INCOMING, OUTGOING, Road, hj_junction_flux, junction_flux, lwr_scenario, riemann_u0, road_lagrangian

# every grid solved below, for the time-bound criterion
SOLVED = []


def _solve(*args):
    sol = solve_grid(*args)
    SOLVED.append(sol)
    return sol


def test_01_conjugation(report):
    start = time.perf_counter()
    p = np.linspace(-2.0, 2.0, 100)
    q = np.linspace(-3.0, 3.0, 101)
    h_err = inv_err = 0.0
    for direction, exact in ((INCOMING, p**2 - p), (OUTGOING, p**2 + p)):
        L = road_lagrangian(Road(direction, 1.0, 1.0, 1.0))
        h_err = max(h_err, float(np.max(np.abs(np.asarray(hamiltonian(L, p)) - exact))))
        inv_err = max(inv_err, involution_error(L, q))
    elapsed = time.perf_counter() - start
    ok = h_err <= 1e-12 and inv_err <= 1e-9 and elapsed < 1.0
    report(1, "conjugation", ok, f"H error {h_err:.1e}, involution error {inv_err:.1e}, {elapsed:.2f} s")


def test_02_k_identities(report, sym, asym):
    start = time.perf_counter()
    results = [check_k_identities(Context(J, InitialDatum.zero())) for J in (sym, asym)]
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in results) and elapsed < 1.0
    report(2, "K identities", ok, "; ".join(r.message for r in results) + f"; {elapsed:.2f} s")


def test_03_oracle_equivalence(report, asym):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    cfg = OracleConfig(n_tau=2000, refine=3)
    worst, above = 0.0, 0
    for j in (1, 2):
        for i in (1, 2):
            y, x = rng.uniform(0.0, 2.0, (2, 100))
            closed = junction_arm(asym, j, y, i, x)[0]
            ref = pair_brute_force(asym, j, y, i, x, cfg, straight=False)
            worst = max(worst, float(np.max(np.abs(closed - ref))))
            above += int(np.sum(closed > ref + 1e-9))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and above == 0 and elapsed < 30.0
    report(3, "oracle equivalence", ok, f"max gap {worst:.1e} over 4 x 100 pairs, {above} above oracle, {elapsed:.1f} s")


def test_04_coercivity(report, sym, asym, three):
    counts = []
    margin = np.inf
    for seed, J in enumerate((sym, asym, three)):
        bad, m = coercivity_violations(J, 10_000, seed=seed)
        counts.append(bad)
        margin = min(margin, m)
    report(4, "coercivity", sum(counts) == 0, f"violations {counts} at 1e4 samples each, smallest margin {margin:.2e}")


def test_05_c1_matching(report, asym):
    jump = c1_mismatch(asym, 2, 2, n=50)
    report(5, "C1 matching", jump <= 1e-6, f"max gradient jump {jump:.1e} at 50 edge points")


def test_06_pde_identities(report, sym, asym):
    rng = np.random.default_rng(6)
    interior = boundary = 0.0
    n_interior = 0
    for J in (sym, asym):
        for j in (1, 2):
            for i in (1, 2):
                y, x = rng.uniform(0.01, 2.0, (2, 100))
                keep = _smooth_mask(J, j, y, i, x)
                n_interior += int(keep.sum())
                for r in pde_residuals(J, j, y[keep], i, x[keep]):
                    interior = max(interior, float(np.max(np.abs(r))))
                for side in ("y0", "x0"):
                    c = rng.uniform(0.01, 2.0, 50)
                    if i == j and not J.in_I0(i):
                        edge = J.xi_plus[i - 1] if side == "y0" else -J.xi_minus[j - 1]
                        c = c[np.abs(c - edge) > 1e-6]
                    for r in boundary_residuals(J, j, i, c, side):
                        boundary = max(boundary, float(np.max(np.abs(r))))
    ok = interior <= 1e-8 and boundary <= 1e-8
    report(6, "PDE identities", ok, f"interior {interior:.1e} at {n_interior} points, boundary {boundary:.1e}")


def test_07_hopf_lax_sanity(report, sym):
    times = np.linspace(0.0, 1.0, 5)
    coords = uniform_coords(2, 2.0, 50)
    zero = _solve(sym, InitialDatum.zero(), times, coords)
    sup = max(float(np.abs(v).max()) for v in zero.values)

    u0 = InitialDatum.linear_per_branch([0.4, -0.7])
    base = _solve(sym, u0, times, coords)
    shifted = _solve(sym, u0.shifted(1.25), times, coords)
    shift_exact = all(np.array_equal(a + 1.25, b) for a, b in zip(base.values, shifted.values))

    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(10):
        s = rng.uniform(-1.0, 1.0, 2)
        amp, k1, k2 = rng.uniform(0.01, 0.3), rng.uniform(1, 6), rng.uniform(1, 6)
        lo = InitialDatum.linear_per_branch(s)
        # a nonnegative bump that vanishes nowhere and agrees at the junction
        hi = InitialDatum(
            lambda b, x, s=s, amp=amp, k=(k1, k2): s[b - 1] * x + amp * (1 + np.sin(k[b - 1] * x)),
            float(np.max(np.abs(s))) + amp * max(k1, k2),
        )
        violations += comparison_violations(sym, lo, hi, times, coords)
    ok = sup <= 1e-8 and shift_exact and violations == 0
    report(7, "Hopf-Lax sanity", ok, f"zero datum sup {sup:.1e}, shift exact {shift_exact}, comparison violations {violations}")


def _line_error(nx):
    """Max error of the two-road solution against the whole-line formula on ``[-2, 2]``."""
    sc = lwr_scenario([1.0], [1.0])
    sol = _solve(sc.junction, riemann_u0(sc, [0.3, 0.9]), [0.0, 0.5, 1.0], uniform_coords(2, 2.0, nx))

    def lam(v):
        return (v - 1) ** 2 / 4

    def u0_line(X):
        return np.where(X < 0, -0.3 * X, -0.9 * X)

    cfg = OracleConfig(n_y=nx, radius=2.0)
    err = 0.0
    for k, t in enumerate(sol.times[1:], start=1):
        # incoming road 1 is X = -x, outgoing road 2 is X = x
        for b, sign in ((1, -1.0), (2, 1.0)):
            X = sign * sol.coords[b - 1]
            err = max(err, float(np.max(np.abs(sol.values[b - 1][k] - line_lax_oleinik(lam, u0_line, t, X, cfg)))))
    return err


def test_08_line_equivalence(report):
    start = time.perf_counter()
    coarse = _line_error(200)
    fine = _line_error(400)
    elapsed = time.perf_counter() - start
    ratio = coarse / fine
    ok = coarse <= 2e-3 and ratio >= 1.5 and elapsed < 60.0
    report(8, "line equivalence", ok, f"error {coarse:.2e} -> {fine:.2e} (ratio {ratio:.2f}), {elapsed:.1f} s")


def test_09_junction_flux(report):
    start = time.perf_counter()
    sc = lwr_scenario([1.0], [1.0])
    times = np.linspace(0.2, 1.0, 5)
    parts = []
    worst = 0.0
    for rin, rout, expected in ((0.3, 0.9, 0.09), (0.8, 0.2, 0.25), (0.5, 0.5, 0.25)):
        assert junction_flux(sc, [rin], [rout]) == pytest.approx(expected, abs=1e-15)
        got = hj_junction_flux(sc, riemann_u0(sc, [rin, rout]), times)
        err = float(np.max(np.abs(got - expected)))
        worst = max(worst, err)
        parts.append(f"({rin}, {rout}) -> {expected} err {err:.1e}")
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-2 and elapsed < 60.0
    report(9, "junction flux", ok, "; ".join(parts) + f"; {elapsed:.1f} s")


def test_11_dpp(report, riemann):
    sc, u0 = riemann
    interp, coarse, fine = dpp_refinement(sc.junction, u0, 8.0, 200)
    ratio = coarse / fine
    ok = max(interp, coarse) <= 2e-3 and ratio >= 1.5
    report(11, "dynamic programming", ok, f"defect {interp:.1e}, grid defect {coarse:.2e} -> {fine:.2e} (ratio {ratio:.2f})")


def test_10_time_bound(report, asym, three, riemann):
    sc, u0 = riemann
    times = np.linspace(0.0, 1.0, 6)
    _solve(asym, InitialDatum.linear_per_branch([0.3, -0.5]), times, uniform_coords(2, 3.0, 40))
    _solve(three, InitialDatum.linear_per_branch([1.0, -0.2, 0.5]), times, uniform_coords(3, 3.0, 40))
    _solve(sc.junction, u0, times, uniform_coords(2, 3.0, 60))
    _solve(build_junction([Lagrangian.quadratic(0.5)]), InitialDatum.linear_per_branch([-1.0]), times, (np.linspace(0, 2, 21),))
    bad = sum(time_bound_violations(sol) for sol in SOLVED)
    nodes = sum(sum(v.size for v in sol.values) for sol in SOLVED)
    report(10, "time bound", bad == 0, f"{bad} violations over {len(SOLVED)} grids, {nodes} nodes")
