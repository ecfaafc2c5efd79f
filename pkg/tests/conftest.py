import numpy as np
import pytest

from junction_hj import Lagrangian, build_junction
from junction_hj.traffic import lwr_scenario, riemann_u0


def two_branch(a2):
    return build_junction([Lagrangian.quadratic(0.25, -1.0, 0.0), Lagrangian.quadratic(a2, 1.0, 0.0)])


@pytest.fixture(scope="session")
def sym():
    """L1 = (1+q)^2/4, L2 = (1-q)^2/4; both branches idle at the same cost."""
    return two_branch(0.25)


@pytest.fixture(scope="session")
def asym():
    """L1 = (1+q)^2/4, L2 = (1-q)^2/2; only branch 1 idles at the cheapest cost."""
    return two_branch(0.5)


@pytest.fixture(scope="session")
def three():
    return build_junction(
        [
            Lagrangian.quadratic(2.0, -0.3, 0.1),
            Lagrangian.quadratic(0.1, 0.7, -0.2),
            Lagrangian.quadratic(1.0, 0.0, 0.4),
        ]
    )


@pytest.fixture(scope="session")
def riemann():
    sc = lwr_scenario([1.0], [1.0])
    return sc, riemann_u0(sc, [0.3, 0.9])


def grid_sup(f, lo, hi, n=200_001):
    q = np.linspace(lo, hi, n)
    return float(np.max(f(q)))


@pytest.fixture
def report(request):
    """Record one ``[PASS]``/``[FAIL]`` line per acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def _report(number, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return _report


_REPORT = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
