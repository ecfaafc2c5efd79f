"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """A root find or bracket search did not converge.

    Usually means a Lagrangian violates its declared convexity constant.
    """


class ScenarioError(ValueError):
    """A scenario, road set or Lagrangian failed validation."""
