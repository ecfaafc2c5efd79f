"""Invariant suites behind ``junction-hj verify``.

Each suite takes a :class:`Context` and returns a :class:`CheckResult`.
Sample counts and tolerances live in :class:`CheckOptions` so refinement
studies can tighten them from the command line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex_core import Junction, Lagrangian, Point, conjugate, distance, h_minus, hamiltonian, k_eval
from .hopf_lax import (
    InitialDatum,
    dpp_check,
    residual_check,
    solve_grid,
    time_bound_constant,
    uniform_coords,
)
from .minimal_action import d0, junction_arm, pair_gradients, pair_values
from .oracle import OracleConfig, pair_brute_force
from .traffic import TrafficScenario, junction_flux, road_hamiltonian


# defects below this count as exact when judging refinement ratios
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class CheckOptions:
    samples: int = 100
    seed: int = 0
    conj_tol: float = 1e-9
    flux_h_tol: float = 1e-12
    k_tol: float = 1e-10
    oracle_tol: float = 1e-5
    oracle_samples: int = 20
    oracle_n_tau: int = 600
    oracle_refine: int = 3
    coercivity_tol: float = 1e-12
    c1_tol: float = 1e-6
    pde_tol: float = 1e-8
    dpp_tol: float = 2e-3
    residual_tol: float = 5e-2
    flux_tol: float = 1e-2
    grid_nx: int = 200
    grid_xmax: float = 8.0


@dataclass(frozen=True)
class Context:
    junction: Junction
    datum: InitialDatum
    traffic: Optional[TrafficScenario] = None
    densities: Optional[tuple] = None
    options: CheckOptions = field(default_factory=CheckOptions)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    message: str
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: {self.message}"


def _rng(ctx: Context) -> np.random.Generator:
    return np.random.default_rng(ctx.options.seed)


def _pairs(J: Junction):
    return [(j, i) for j in range(1, J.n + 1) for i in range(1, J.n + 1)]


def involution_error(L: Lagrangian, q) -> float:
    """``max |H*(q) - L(q)|`` with ``H = L*`` conjugated back numerically."""
    H = Lagrangian(
        eval=lambda p: np.asarray(conjugate(L, p)[1]),
        deriv=lambda p: np.asarray(conjugate(L, p)[0]),
        gamma=1.0,
        name="conjugate",
    )
    q = np.asarray(q, dtype=float)
    back = np.asarray(conjugate(H, q)[1])
    return float(np.max(np.abs(back - L.eval(q))))


def check_conjugation(ctx: Context) -> CheckResult:
    J, o = ctx.junction, ctx.options
    q = np.linspace(-3.0, 3.0, 101)
    worst = max(involution_error(L, q) for L in J.branches)
    ok = worst <= o.conj_tol
    msg = f"involution error {worst:.2e} (tol {o.conj_tol:g})"
    if ctx.traffic is not None:
        p = np.linspace(-2.0, 2.0, 100)
        flux_err = max(
            float(np.max(np.abs(np.asarray(hamiltonian(J.lag(b), p)) - road_hamiltonian(r, p))))
            for b, r in enumerate(ctx.traffic.roads, start=1)
        )
        ok &= flux_err <= o.flux_h_tol
        msg += f"; flux Hamiltonian error {flux_err:.2e} (tol {o.flux_h_tol:g})"
    return CheckResult("conjugation", ok, msg)


def check_k_identities(ctx: Context) -> CheckResult:
    J, o = ctx.junction, ctx.options
    rng = _rng(ctx)
    worst = 0.0
    sign_bad = 0
    for l in range(1, J.n + 1):
        L = J.lag(l)
        xi = rng.uniform(-3.0, 3.0, o.samples)
        direct = L.eval(xi) - xi * L.deriv(xi) - J.L0_zero
        worst = max(worst, float(np.max(np.abs(np.asarray(k_eval(J, l, xi)) - direct))))
        # K_l increases on xi < 0 and decreases on xi > 0
        h = 1e-4
        fd = (np.asarray(k_eval(J, l, xi + h)) - np.asarray(k_eval(J, l, xi - h))) / (2 * h)
        sign_bad += int(np.sum((xi < -h) & (fd < -1e-3)) + np.sum((xi > h) & (fd > 1e-3)))
        if not J.in_I0(l):
            roots = [J.xi_minus[l - 1], J.xi_plus[l - 1]]
            worst = max(worst, max(abs(float(k_eval(J, l, r))) for r in roots))
    ok = worst <= o.k_tol and sign_bad == 0
    return CheckResult("k_identities", ok, f"max residual {worst:.2e} (tol {o.k_tol:g}), sign violations {sign_bad}")


def check_oracle(ctx: Context) -> CheckResult:
    J, o = ctx.junction, ctx.options
    rng = _rng(ctx)
    cfg = OracleConfig(n_tau=o.oracle_n_tau, refine=o.oracle_refine)
    worst = 0.0
    above = 0
    for j, i in _pairs(J):
        y = rng.uniform(0.0, 2.0, o.oracle_samples)
        x = rng.uniform(0.0, 2.0, o.oracle_samples)
        closed = junction_arm(J, j, y, i, x)[0]
        ref = pair_brute_force(J, j, y, i, x, cfg, straight=False)
        worst = max(worst, float(np.max(np.abs(closed - ref))))
        above += int(np.sum(closed > ref + 1e-9))
    ok = worst <= o.oracle_tol and above == 0
    return CheckResult("oracle", ok, f"max |closed - brute force| {worst:.2e} (tol {o.oracle_tol:g}), {above} above oracle")


def coercivity_violations(J: Junction, n: int, seed: int = 0, rmax: float = 5.0, tol: float = 1e-12):
    """Count samples with ``d0 < gamma/4 d^2 - C0 - tol``; returns ``(count, worst margin)``."""
    rng = np.random.default_rng(seed)
    bad = 0
    margin = math.inf
    for _ in range(n):
        y = Point(int(rng.integers(1, J.n + 1)), float(rng.uniform(0, rmax)))
        x = Point(int(rng.integers(1, J.n + 1)), float(rng.uniform(0, rmax)))
        gap = d0(J, y, x).value - (J.gamma / 4 * distance(y, x) ** 2 - J.C0)
        margin = min(margin, gap)
        bad += gap < -tol
    return bad, margin


def check_coercivity(ctx: Context) -> CheckResult:
    o = ctx.options
    bad, margin = coercivity_violations(ctx.junction, o.samples, o.seed, tol=o.coercivity_tol)
    return CheckResult("coercivity", bad == 0, f"{bad} violations, smallest margin {margin:.3e}")


def c1_mismatch(J: Junction, j: int, i: int, n: int = 50, eps: float = 1e-9) -> float:
    """Largest gradient jump of the junction arm across the dwelling-triangle edge."""
    s = np.linspace(0.02, 0.98, n)
    y = -J.xi_minus[j - 1] * s
    x = J.xi_plus[i - 1] * (1 - s)
    _, lin_in, gy_in, gx_in = junction_arm(J, j, y * (1 - eps), i, x * (1 - eps))
    _, lin_out, gy_out, gx_out = junction_arm(J, j, y * (1 + eps), i, x * (1 + eps))
    if not lin_in.all() or lin_out.any():
        raise AssertionError("probe points did not straddle the dwelling triangle edge")
    return float(np.max(np.hypot(gy_in - gy_out, gx_in - gx_out)))


def check_c1(ctx: Context) -> CheckResult:
    J, o = ctx.junction, ctx.options
    pairs = [(j, i) for j, i in _pairs(J) if not (J.in_I0(i) or J.in_I0(j))]
    if not pairs:
        return CheckResult("c1", True, "every pairing touches a cheapest-idling branch; no dwelling triangle", True)
    worst = max(c1_mismatch(J, j, i) for j, i in pairs)
    return CheckResult("c1", worst <= o.c1_tol, f"max gradient jump {worst:.2e} over {len(pairs)} pairings (tol {o.c1_tol:g})")


def _smooth_mask(J: Junction, j, y, i, x, margin=1e-6):
    """Drop points near the kink set and the lines where the boundary formulas switch."""
    ok = np.ones(np.shape(y), dtype=bool)
    if i == j and not J.in_I0(i):
        xm, xp = J.xi_minus[j - 1], J.xi_plus[i - 1]
        lin = -J.lag(j).deriv(np.array(xm)) * y + J.lag(i).deriv(np.array(xp)) * x + J.L0_zero
        straight = J.lag(i).eval(x - y)
        near_delta = x / xp - y / xm <= 1 + margin
        ok &= ~(near_delta & (np.abs(lin - straight) <= margin))
        ok &= np.hypot(y + xm, x) > margin
        ok &= np.hypot(y, x - xp) > margin
        ok &= np.abs(x - xp) > margin
        ok &= np.abs(y + xm) > margin
    return ok


def pde_residuals(J: Junction, j: int, y, i: int, x):
    """Residuals of ``D - x D_x - y D_y + H_i(D_x)`` and ``... + H_j(-D_y)``."""
    v = pair_values(J, j, y, i, x)
    gy, gx = pair_gradients(J, j, y, i, x)
    e = v - x * gx - y * gy
    return e + np.asarray(hamiltonian(J.lag(i), gx)), e + np.asarray(hamiltonian(J.lag(j), -gy))


def boundary_residuals(J: Junction, j: int, i: int, coords, side: str):
    """Residuals of the value and junction-condition identities on one side of ``J_j x J_i``.

    ``side="y0"`` samples ``(0, x)`` with ``x`` on branch ``i``; ``side="x0"``
    samples ``(y, 0)`` with ``y`` on branch ``j``.
    """
    c = np.asarray(coords, dtype=float)
    z = np.zeros_like(c)
    if side == "y0":
        y, x = z, c
        v = pair_values(J, j, y, i, x)
        gy, gx = pair_gradients(J, j, y, i, x)
        e = v - x * gx
        value = e - (J.L0_zero + np.asarray(k_eval(J, i, np.maximum(x, J.xi_plus[i - 1]))))
        if J.n == 1:
            cond = np.asarray(hamiltonian(J.lag(1), -gy))
        else:
            cond = np.max(
                [np.asarray(h_minus(J.lag(k), -pair_gradients(J, k, y, i, x)[0])) for k in range(1, J.n + 1)], axis=0
            )
        return value, e + cond
    if side == "x0":
        y, x = c, z
        v = pair_values(J, j, y, i, x)
        gy, gx = pair_gradients(J, j, y, i, x)
        e = v - y * gy
        value = e - (J.L0_zero + np.asarray(k_eval(J, j, -np.maximum(y, -J.xi_minus[j - 1]))))
        cond = np.max(
            [np.asarray(h_minus(J.lag(k), pair_gradients(J, j, y, k, x)[1])) for k in range(1, J.n + 1)], axis=0
        )
        return value, e + cond
    raise ValueError("side must be 'y0' or 'x0'")


def check_pde(ctx: Context) -> CheckResult:
    J, o = ctx.junction, ctx.options
    rng = _rng(ctx)
    interior = 0.0
    boundary = 0.0
    for j, i in _pairs(J):
        y = rng.uniform(0.01, 2.0, o.samples)
        x = rng.uniform(0.01, 2.0, o.samples)
        keep = _smooth_mask(J, j, y, i, x)
        r1, r2 = pde_residuals(J, j, y[keep], i, x[keep])
        interior = max(interior, float(np.max(np.abs(r1), initial=0)), float(np.max(np.abs(r2), initial=0)))
        for side in ("y0", "x0"):
            c = rng.uniform(0.01, 2.0, o.samples)
            if i == j and not J.in_I0(i):
                edge = J.xi_plus[i - 1] if side == "y0" else -J.xi_minus[j - 1]
                c = c[np.abs(c - edge) > 1e-6]
            rv, rc = boundary_residuals(J, j, i, c, side)
            boundary = max(boundary, float(np.max(np.abs(rv), initial=0)), float(np.max(np.abs(rc), initial=0)))
    ok = interior <= o.pde_tol and boundary <= o.pde_tol
    return CheckResult("pde", ok, f"interior {interior:.2e}, boundary {boundary:.2e} (tol {o.pde_tol:g})")


def comparison_violations(J: Junction, u0: InitialDatum, v0: InitialDatum, times, coords) -> int:
    """Nodes where ``u > v`` for data with ``u0 <= v0``."""
    u = solve_grid(J, u0, times, coords)
    v = solve_grid(J, v0, times, coords)
    return int(sum(np.count_nonzero(a > b) for a, b in zip(u.values, v.values)))


def time_bound_violations(sol, slack: float = 1e-12) -> int:
    """Nodes breaking ``|u(t, x) - u0(x)| <= C t`` (``slack`` absorbs one rounding of ``u0``)."""
    C = time_bound_constant(sol.junction, sol.datum)
    bad = 0
    for b, c in enumerate(sol.coords, start=1):
        u0 = sol.datum.values(b, c)
        lhs = np.abs(sol.values[b - 1] - u0[None, :])
        bad += int(np.count_nonzero(lhs > C * sol.times[:, None] + slack * (1 + np.abs(u0))[None, :]))
    return bad


def check_hopf_lax(ctx: Context) -> CheckResult:
    J, u0, o = ctx.junction, ctx.datum, ctx.options
    times = np.linspace(0.0, 1.0, 5)
    coords = uniform_coords(J.n, 2.0, 25)
    base = solve_grid(J, u0, times, coords)
    shifted = solve_grid(J, u0.shifted(0.75), times, coords)
    shift_ok = all(np.array_equal(a + 0.75, b) for a, b in zip(base.values, shifted.values))
    bumps = InitialDatum(
        lambda b, x: u0.base_values(b, x) + 0.05 * (1 + np.sin((2 + b) * x)),
        u0.lipschitz + 0.05 * (2 + J.n),
        u0.breakpoints,
        u0.offset,
    )
    cmp_bad = comparison_violations(J, u0, bumps, times, coords)
    tb_bad = time_bound_violations(base)
    ok = shift_ok and cmp_bad == 0 and tb_bad == 0
    return CheckResult(
        "hopf_lax", ok, f"shift exact: {shift_ok}, comparison violations {cmp_bad}, time-bound violations {tb_bad}"
    )


def dpp_refinement(J: Junction, u0: InitialDatum, xmax: float, nx: int):
    """Interpolated DPP defect at ``nx`` and grid defects at ``nx`` and ``2 nx`` for (s, t) = (0.5, 1)."""
    out = []
    for n in (nx, 2 * nx):
        sol = solve_grid(J, u0, [0.0, 0.5, 1.0], uniform_coords(J.n, xmax, n))
        if n == nx:
            out.append(dpp_check(J, sol, 1, 2))
        out.append(dpp_check(J, sol, 1, 2, nodes_only=True))
    return tuple(out)


def check_dpp(ctx: Context) -> CheckResult:
    J, u0, o = ctx.junction, ctx.datum, ctx.options
    interp, coarse, fine = dpp_refinement(J, u0, o.grid_xmax, o.grid_nx)
    # an exactly representable solution leaves nothing to refine
    ratio_ok = fine <= ROUNDOFF or coarse >= 1.5 * fine
    ok = max(interp, coarse) <= o.dpp_tol and ratio_ok
    ratio = coarse / fine if fine > 0 else math.inf
    return CheckResult(
        "dpp",
        ok,
        f"defect {interp:.2e}, grid defect {coarse:.2e} -> {fine:.2e} under doubling (ratio {ratio:.2f}) "
        f"at (s, t) = (0.5, 1.0) (tol {o.dpp_tol:g})",
    )


def check_residual(ctx: Context) -> CheckResult:
    J, u0, o = ctx.junction, ctx.datum, ctx.options
    sol = solve_grid(J, u0, np.linspace(0.0, 1.0, 11), uniform_coords(J.n, 2.0, o.grid_nx // 2))
    rep = residual_check(J, sol, tol=o.residual_tol)
    return CheckResult(
        "residual",
        rep.passed,
        f"interior {rep.max_interior:.2e} at {rep.smooth_nodes} smooth nodes ({rep.kink_nodes} kinks), "
        f"junction {rep.max_junction:.2e} (tol {o.residual_tol:g})",
    )


def check_flux(ctx: Context) -> CheckResult:
    if ctx.traffic is None or ctx.densities is None:
        return CheckResult("flux", True, "needs a traffic scenario with Riemann densities", True)
    from .traffic import hj_junction_flux

    sc, o = ctx.traffic, ctx.options
    m = sc.m
    expected = junction_flux(sc, ctx.densities[:m], ctx.densities[m:])
    got = hj_junction_flux(sc, ctx.datum, np.linspace(0.2, 1.0, 5))
    err = float(np.max(np.abs(got - expected)))
    return CheckResult("flux", err <= o.flux_tol, f"|u_t(t, 0) - junction flux {expected:.4g}| <= {err:.2e} (tol {o.flux_tol:g})")


SUITES: dict[str, Callable[[Context], CheckResult]] = {
    "conjugation": check_conjugation,
    "k_identities": check_k_identities,
    "oracle": check_oracle,
    "coercivity": check_coercivity,
    "c1": check_c1,
    "pde": check_pde,
    "hopf_lax": check_hopf_lax,
    "dpp": check_dpp,
    "residual": check_residual,
    "flux": check_flux,
}


def run_suites(ctx: Context, names=None) -> list:
    """Run the named suites (all by default) in a fixed order."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    return [SUITES[n](ctx) for n in names]
