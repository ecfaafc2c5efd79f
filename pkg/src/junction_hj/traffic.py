"""Traffic flow on a junction of roads, recast as a Hamilton-Jacobi problem.

Incoming roads ``1..m`` and outgoing roads ``m+1..m+n`` become branches.
The branch function is a rescaled car count, so that on incoming roads
``rho = gamma u_x`` and on outgoing roads ``rho = -gamma u_x`` (coordinates
measured from the junction). The junction trace grows at the rate of the
flux through the junction, ``u_t(t, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._roots import newton_bisect
from .convex_core import JUNCTION, Junction, Lagrangian, build_junction
from .errors import ConvergenceError, ScenarioError
from .hopf_lax import GridSolution, InitialDatum, solve_nodes

INCOMING = "incoming"
OUTGOING = "outgoing"
GAMMA_SUM_TOL = 1e-12
_PROBE = 201


@dataclass(frozen=True)
class Road:
    """One road with its flux and turning fraction.

    Give ``vmax`` and ``rhomax`` for the LWR flux ``rho vmax (1 - rho/rhomax)``,
    or a concave ``flux`` with its derivative ``dflux``, the maximizer
    ``rho_c`` and ``rhomax``. ``d2flux`` is optional.
    """

    direction: str
    gamma: float = 1.0
    vmax: Optional[float] = None
    rhomax: Optional[float] = None
    flux: Optional[Callable] = field(default=None, compare=False)
    dflux: Optional[Callable] = field(default=None, compare=False)
    d2flux: Optional[Callable] = field(default=None, compare=False)
    rho_c: Optional[float] = None

    def __post_init__(self):
        if self.direction not in (INCOMING, OUTGOING):
            raise ScenarioError(f"road direction must be {INCOMING!r} or {OUTGOING!r}, got {self.direction!r}")
        if not 0 < self.gamma <= 1:
            raise ScenarioError(f"turning fraction gamma must lie in (0, 1], got {self.gamma}")
        if self.flux is None:
            if self.vmax is None or self.rhomax is None or not (self.vmax > 0 and self.rhomax > 0):
                raise ScenarioError("an LWR road needs vmax > 0 and rhomax > 0")
            object.__setattr__(self, "rho_c", self.rhomax / 2)
        else:
            if self.dflux is None or self.rho_c is None or self.rhomax is None:
                raise ScenarioError("a custom flux needs dflux, rho_c and rhomax")
            if not 0 < self.rho_c < self.rhomax:
                raise ScenarioError(f"rho_c={self.rho_c} must lie inside (0, rhomax={self.rhomax})")

    @property
    def is_lwr(self) -> bool:
        return self.flux is None

    def f(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.is_lwr:
            return rho * self.vmax * (1 - rho / self.rhomax)
        return np.asarray(self.flux(rho), dtype=float)

    def df(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.is_lwr:
            return self.vmax * (1 - 2 * rho / self.rhomax)
        return np.asarray(self.dflux(rho), dtype=float)

    def d2f(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.is_lwr:
            return np.full(rho.shape, -2 * self.vmax / self.rhomax)
        if self.d2flux is not None:
            return np.asarray(self.d2flux(rho), dtype=float)
        h = 1e-5 * max(1.0, self.rhomax)
        return (self.df(rho + h) - self.df(rho - h)) / (2 * h)

    @property
    def fmax(self) -> float:
        return float(self.f(self.rho_c))

    def check_concave(self, slack: float = 1e-9) -> None:
        """Probe that ``f`` rises up to ``rho_c`` and falls after it.

        Raises
        ------
        ScenarioError
            On a probe violation.
        """
        up = np.linspace(0.0, self.rho_c, _PROBE)
        down = np.linspace(self.rho_c, self.rhomax, _PROBE)
        scale = slack * max(1.0, self.fmax)
        if np.any(np.diff(self.f(up)) < -scale) or np.any(np.diff(self.f(down)) > scale):
            raise ScenarioError(f"flux is not increasing then decreasing around rho_c={self.rho_c}")
        grid = np.linspace(0.0, self.rhomax, 2 * _PROBE)
        if np.any(self.d2f(grid) > slack):
            raise ScenarioError("flux fails the concavity probe")

    def check_density(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0) or np.any(rho > self.rhomax):
            raise ScenarioError(f"density {rho} outside [0, rhomax={self.rhomax}]")
        return rho


def road_hamiltonian(road: Road, p):
    """``-f(gamma p)/gamma`` on incoming roads, ``-f(-gamma p)/gamma`` on outgoing ones."""
    p = np.asarray(p, dtype=float)
    sgn = 1.0 if road.direction == INCOMING else -1.0
    return -road.f(sgn * road.gamma * p) / road.gamma


def _conjugate_flux(road: Road) -> Lagrangian:
    """Numerical Lagrangian ``L(q) = sup_r (s r q + f(r)) / gamma`` with ``s = +1`` incoming, ``-1`` outgoing."""
    sgn = 1.0 if road.direction == INCOMING else -1.0
    g = road.gamma

    def argmax(q):
        # f'(r) = -s q, solved as the increasing equation -f'(r) - s q = 0
        target = np.atleast_1d(sgn * np.asarray(q, dtype=float)).ravel()
        width = max(1.0, road.rhomax)
        lo = np.full(target.shape, road.rho_c - width)
        hi = np.full(target.shape, road.rho_c + width)
        for _ in range(200):
            lo_bad = -road.df(lo) - target > 0
            hi_bad = -road.df(hi) - target < 0
            if not (lo_bad.any() or hi_bad.any()):
                break
            lo = np.where(lo_bad, road.rho_c - 2 * (road.rho_c - lo), lo)
            hi = np.where(hi_bad, road.rho_c + 2 * (hi - road.rho_c), hi)
        else:
            raise ConvergenceError("could not bracket the flux conjugate")

        def func(r, mask):
            return -road.df(r) - target[mask], -road.d2f(r)

        return newton_bisect(func, lo, hi, xtol=1e-15).reshape(np.shape(q))

    def ev(q):
        q = np.asarray(q, dtype=float)
        r = argmax(q)
        return (sgn * r * q + road.f(r)) / g

    def d1(q):
        return sgn * argmax(q) / g

    def d2(q):
        return -1.0 / (g * road.d2f(argmax(q)))

    probe = np.linspace(-10.0, 10.0, 201)
    gamma = float(np.min(d2(probe))) * (1 - 1e-6)
    return Lagrangian(ev, d1, gamma, deriv2=d2, name=f"conjugate flux ({road.direction})")


def road_lagrangian(road: Road) -> Lagrangian:
    """Branch Lagrangian; LWR roads get ``rhomax (q -+ vmax)^2 / (4 vmax gamma)`` in closed form."""
    if road.is_lwr:
        a = road.rhomax / (4 * road.vmax * road.gamma)
        b = -road.vmax if road.direction == INCOMING else road.vmax
        return Lagrangian.quadratic(a, b, 0.0)
    return _conjugate_flux(road)


@dataclass(frozen=True)
class TrafficScenario:
    """Roads (incoming first) with the derived junction."""

    roads: tuple
    junction: Junction

    @property
    def m(self) -> int:
        return sum(r.direction == INCOMING for r in self.roads)

    @property
    def n(self) -> int:
        return len(self.roads) - self.m

    def road(self, branch: int) -> Road:
        return self.roads[branch - 1]


def traffic_junction(roads: Sequence[Road]) -> TrafficScenario:
    """Validate the roads and build the junction of their Lagrangians.

    Raises
    ------
    ScenarioError
        If incoming roads do not come first, a direction is missing, the
        turning fractions of a direction do not sum to 1, or a flux fails
        its concavity probe.
    """
    roads = tuple(roads)
    dirs = [r.direction for r in roads]
    m = dirs.count(INCOMING)
    if m == 0 or m == len(roads):
        raise ScenarioError("need at least one incoming and one outgoing road")
    if dirs != [INCOMING] * m + [OUTGOING] * (len(roads) - m):
        raise ScenarioError("incoming roads must be listed before outgoing roads")
    for d in (INCOMING, OUTGOING):
        total = sum(r.gamma for r in roads if r.direction == d)
        if abs(total - 1.0) > GAMMA_SUM_TOL:
            raise ScenarioError(f"{d} turning fractions sum to {total!r}, expected 1")
    for r in roads:
        r.check_concave()
    J = build_junction([road_lagrangian(r) for r in roads])
    return TrafficScenario(roads, J)


def lwr_scenario(incoming: Sequence[float], outgoing: Sequence[float], vmax: float = 1.0, rhomax: float = 1.0):
    """LWR roads with the given turning fractions."""
    roads = [Road(INCOMING, g, vmax, rhomax) for g in incoming]
    roads += [Road(OUTGOING, g, vmax, rhomax) for g in outgoing]
    return traffic_junction(roads)


def demand_supply(road: Road, rho):
    """Demand (nondecreasing part of ``f``) and supply (nonincreasing part) at ``rho``."""
    rho = road.check_density(rho)
    f = road.f(rho)
    fc = road.fmax
    below = rho <= road.rho_c
    demand = np.where(below, f, fc)
    supply = np.where(below, fc, f)
    if demand.ndim == 0:
        return float(demand), float(supply)
    return demand, supply


def junction_flux(scenario: TrafficScenario, rho_in: Sequence[float], rho_out: Sequence[float]) -> float:
    """Flux through the junction, ``min(min_i D_i / gamma_i, min_j S_j / gamma_j)``.

    Raises
    ------
    ScenarioError
        If the density lists do not match the road counts.
    """
    if len(rho_in) != scenario.m or len(rho_out) != scenario.n:
        raise ScenarioError(f"need {scenario.m} incoming and {scenario.n} outgoing densities")
    vals = []
    for road, rho in zip(scenario.roads[: scenario.m], rho_in):
        vals.append(demand_supply(road, rho)[0] / road.gamma)
    for road, rho in zip(scenario.roads[scenario.m:], rho_out):
        vals.append(demand_supply(road, rho)[1] / road.gamma)
    return float(min(vals))


def riemann_u0(scenario: TrafficScenario, densities: Sequence[float]) -> InitialDatum:
    """Piecewise-linear datum of constant densities, one per road.

    Incoming branches get ``(rho / gamma) x``, outgoing ones ``-(rho / gamma) x``.
    """
    if len(densities) != len(scenario.roads):
        raise ScenarioError(f"need {len(scenario.roads)} densities, got {len(densities)}")
    slopes = []
    for road, rho in zip(scenario.roads, densities):
        road.check_density(rho)
        sgn = 1.0 if road.direction == INCOMING else -1.0
        slopes.append(sgn * float(rho) / road.gamma)
    return InitialDatum.linear_per_branch(slopes)


@dataclass(frozen=True)
class DensityField:
    """Densities per road in road coordinates.

    ``X[k]`` is increasing; incoming roads live on ``X <= 0`` and outgoing
    ones on ``X >= 0``. ``rho[k]`` has one row per time. ``clamped`` counts
    values pulled back into ``[0, rhomax]`` and ``max_excess`` is the largest
    distance they had to move.
    """

    times: np.ndarray
    X: tuple
    rho: tuple
    clamped: int
    max_excess: float


def density_field(scenario: TrafficScenario, sol: GridSolution) -> DensityField:
    """Densities recovered from ``u_x`` with centered differences (one-sided at the ends).

    Raises
    ------
    ScenarioError
        If the solution does not live on the scenario's junction.
    """
    if sol.junction is not scenario.junction and sol.junction != scenario.junction:
        raise ScenarioError("solution was computed on a different junction")
    Xs, rhos = [], []
    clamped = 0
    excess = 0.0
    for b, (road, c) in enumerate(zip(scenario.roads, sol.coords), start=1):
        u = sol.values[b - 1]
        if c.size < 2:
            raise ScenarioError(f"road {b}: need at least 2 nodes to differentiate")
        ux = np.gradient(u, c, axis=1)
        raw = road.gamma * ux if road.direction == INCOMING else -road.gamma * ux
        rho = np.clip(raw, 0.0, road.rhomax)
        moved = np.abs(rho - raw)
        clamped += int(np.count_nonzero(moved > 0))
        excess = max(excess, float(moved.max(initial=0.0)))
        if road.direction == INCOMING:
            Xs.append(-c[::-1])
            rhos.append(rho[:, ::-1])
        else:
            Xs.append(c.copy())
            rhos.append(rho)
    return DensityField(sol.times.copy(), tuple(Xs), tuple(rhos), clamped, excess)


def flux_series(sol: GridSolution):
    """Centered time differences of the junction trace: ``(interior times, u_t(t, 0))``."""
    t = sol.times
    if t.size < 3:
        raise ValueError("need at least 3 time rows")
    tr = sol.junction_trace
    return t[1:-1], (tr[2:] - tr[:-2]) / (t[2:] - t[:-2])


def hj_junction_flux(scenario: TrafficScenario, u0: InitialDatum, times, h: float = 1e-3) -> np.ndarray:
    """``(u(t+h, 0) - u(t-h, 0)) / 2h`` at each requested time."""
    times = np.asarray(times, dtype=float)
    if np.any(times - h <= 0):
        raise ValueError("need t - h > 0")
    J = scenario.junction
    plus = np.array([solve_nodes(J, u0, t + h, JUNCTION, [0.0])[0] for t in times])
    minus = np.array([solve_nodes(J, u0, t - h, JUNCTION, [0.0])[0] for t in times])
    return (plus - minus) / (2 * h)
