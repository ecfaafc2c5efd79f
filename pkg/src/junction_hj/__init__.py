"""Hamilton-Jacobi equations on a junction of half-lines.

Closed-form minimal action, the Hopf-Lax value function, a traffic-flow
front-end and brute-force reference solvers.
"""

from .convex_core import JUNCTION, Junction, Lagrangian, Point, build_junction, conjugate, hamiltonian, h_minus
from .errors import ConvergenceError, ScenarioError
from .hopf_lax import GridSolution, InitialDatum, solve_grid, solve_point
from .minimal_action import ActionResult, Regime, action, d0, d_junction

__all__ = [
    "JUNCTION",
    "ActionResult",
    "ConvergenceError",
    "GridSolution",
    "InitialDatum",
    "Junction",
    "Lagrangian",
    "Point",
    "Regime",
    "ScenarioError",
    "action",
    "build_junction",
    "conjugate",
    "d0",
    "d_junction",
    "h_minus",
    "hamiltonian",
    "solve_grid",
    "solve_point",
]
