import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from conslab.core.piecewise import PiecewiseConstantFn

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def step_functions(draw, max_cells=8, lo=-3.0, hi=3.0, nonneg=False):
    n = draw(st.integers(1, max_cells))
    pts = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=n + 1, max_size=n + 1, unique=True))
    pts = sorted(pts)
    if min(np.diff(pts)) < 1e-3:
        pts = [lo + (hi - lo) * k / (n + 1) for k in range(n + 1)]
    vlo = 0.0 if nonneg else -2.0
    vals = draw(st.lists(st.floats(vlo, 2.0, allow_nan=False), min_size=n, max_size=n))
    return PiecewiseConstantFn(pts, vals)


def midpoint_integral(fn, a, b, n=200_000):
    """Independent oracle: composite midpoint rule."""
    x = a + (np.arange(n) + 0.5) * (b - a) / n
    return float(np.sum(fn(x)) * (b - a) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


LADDER = (50, 100, 200, 400, 800, 1600)
LADDER_TIMES = (0.25, 0.5, 1.0)


class RunCache:
    """Particle trajectories on the lwr-gauss model keyed by (datum name, N), shared by the session."""

    def __init__(self):
        self.store: dict[str, dict] = {}

    def get(self, datum: str, Ns, T: float = 1.0, times=LADDER_TIMES):
        from conslab.core import preset_model
        from conslab.harness import preset_datum, run_particles

        cache = self.store.setdefault(datum, {})
        return run_particles(preset_model("lwr-gauss"), preset_datum(datum), list(Ns), T, list(times), cache=cache)

    def cache_for(self, datum: str) -> dict:
        return self.store.setdefault(datum, {})


@pytest.fixture(scope="session")
def particle_runs():
    return RunCache()


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str, seconds: float) -> str:
    line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'} ({seconds:.1f} s): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
