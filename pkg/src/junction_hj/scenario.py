"""JSON scenario files: a junction, an initial datum and a solve grid."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .convex_core import Junction, Lagrangian, build_junction
from .errors import ScenarioError
from .hopf_lax import InitialDatum, uniform_coords
from .traffic import INCOMING, OUTGOING, Road, TrafficScenario, riemann_u0, traffic_junction

DEFAULT_GRID = {"t": [0.0, 1.0, 11], "x_per_branch": [4.0, 81]}


@dataclass(frozen=True)
class Scenario:
    junction: Junction
    datum: InitialDatum
    times: np.ndarray
    coords: tuple
    traffic: Optional[TrafficScenario] = None
    densities: Optional[tuple] = None
    name: str = "scenario"

    @property
    def xmax(self) -> float:
        return float(self.coords[0][-1])


def _number(obj: Mapping, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise ScenarioError(f"{where}: missing '{key}'")
        return float(default)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ScenarioError(f"{where}: '{key}' must be a finite number, got {val!r}")
    return float(val)


def _list(obj: Any, where: str) -> list:
    if not isinstance(obj, list) or not obj:
        raise ScenarioError(f"{where}: expected a non-empty list")
    return obj


def _params(node: Mapping) -> Mapping:
    # parameters may sit next to "type" or inside a "params" object
    inner = node.get("params")
    if inner is None:
        return node
    if not isinstance(inner, Mapping):
        raise ScenarioError("initial.params must be an object")
    return inner


def _branches(items) -> Junction:
    lags = []
    for k, item in enumerate(_list(items, "branches"), start=1):
        where = f"branches[{k}]"
        if not isinstance(item, Mapping) or not isinstance(item.get("lagrangian"), Mapping):
            raise ScenarioError(f"{where}: expected an object with a 'lagrangian' entry")
        lag = item["lagrangian"]
        kind = lag.get("type", "quadratic")
        if kind != "quadratic":
            raise ScenarioError(f"{where}: unsupported lagrangian type {kind!r}")
        gamma = lag.get("gamma")
        lags.append(
            Lagrangian.quadratic(
                _number(lag, "a", where),
                _number(lag, "b", where, 0.0),
                _number(lag, "c", where, 0.0),
                None if gamma is None else _number(lag, "gamma", where),
            )
        )
    return build_junction(lags)


def _traffic(node) -> TrafficScenario:
    if not isinstance(node, Mapping):
        raise ScenarioError("traffic: expected an object with 'incoming' and 'outgoing'")
    roads = []
    for direction in (INCOMING, OUTGOING):
        for k, item in enumerate(_list(node.get(direction), f"traffic.{direction}"), start=1):
            where = f"traffic.{direction}[{k}]"
            if not isinstance(item, Mapping):
                raise ScenarioError(f"{where}: expected an object")
            vmax = _number(item, "vmax", where, 1.0)
            rhomax = _number(item, "rhomax", where, 1.0)
            if vmax <= 0 or rhomax <= 0:
                raise ScenarioError(f"{where}: vmax and rhomax must be positive")
            gamma = _number(item, "gamma", where)
            if not 0 < gamma <= 1:
                raise ScenarioError(f"{where}: gamma must lie in (0, 1], got {gamma}")
            roads.append(Road(direction, gamma, vmax, rhomax))
    return traffic_junction(roads)


def _initial(node, J: Junction, traffic: Optional[TrafficScenario]):
    if node is None:
        return InitialDatum.zero(), None
    if not isinstance(node, Mapping):
        raise ScenarioError("initial: expected an object")
    kind = node.get("type", "zero")
    p = _params(node)
    if kind == "zero":
        return InitialDatum.zero(), None
    if kind == "linear_per_branch":
        slopes = _list(p.get("slopes"), "initial.slopes")
        if len(slopes) != J.n:
            raise ScenarioError(f"initial.slopes: need {J.n} slopes, got {len(slopes)}")
        return InitialDatum.linear_per_branch([float(s) for s in slopes]), None
    if kind == "riemann":
        if traffic is None:
            raise ScenarioError("initial: riemann data needs a traffic scenario")
        dens = tuple(float(d) for d in _list(p.get("densities"), "initial.densities"))
        return riemann_u0(traffic, dens), dens
    raise ScenarioError(f"initial: unknown type {kind!r}")


def _grid(node, n: int):
    node = DEFAULT_GRID if node is None else node
    if not isinstance(node, Mapping):
        raise ScenarioError("grid: expected an object")
    t = node.get("t", DEFAULT_GRID["t"])
    x = node.get("x_per_branch", DEFAULT_GRID["x_per_branch"])
    if not (isinstance(t, list) and len(t) == 3 and isinstance(x, list) and len(x) == 2):
        raise ScenarioError("grid: need t = [t0, t1, nt] and x_per_branch = [xmax, nx]")
    t0, t1, nt = float(t[0]), float(t[1]), t[2]
    xmax, nx = float(x[0]), x[1]
    if not (isinstance(nt, int) and isinstance(nx, int)) or nt < 2 or nx < 2:
        raise ScenarioError(f"grid: counts must be integers >= 2, got nt={nt!r}, nx={nx!r}")
    if not 0 <= t0 < t1:
        raise ScenarioError(f"grid: need 0 <= t0 < t1, got [{t0}, {t1}]")
    if not xmax > 0:
        raise ScenarioError(f"grid: xmax must be positive, got {xmax}")
    return np.linspace(t0, t1, nt), uniform_coords(n, xmax, nx)


def scenario_from_dict(doc: Mapping, name: str = "scenario") -> Scenario:
    """Build a :class:`Scenario` from a parsed JSON document.

    Raises
    ------
    ScenarioError
        On any schema or invariant violation.
    """
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario: top level must be a JSON object")
    has_b, has_t = "branches" in doc, "traffic" in doc
    if has_b == has_t:
        raise ScenarioError("scenario: exactly one of 'branches' or 'traffic' is required")
    traffic = _traffic(doc["traffic"]) if has_t else None
    J = traffic.junction if traffic else _branches(doc["branches"])
    datum, dens = _initial(doc.get("initial"), J, traffic)
    times, coords = _grid(doc.get("grid"), J.n)
    return Scenario(J, datum, times, coords, traffic, dens, name)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc, path.stem)
