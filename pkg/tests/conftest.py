import numpy as np
import pytest

from holee.drift import stationary_drift
from holee.factors import binary_ho_lee, simplex_factor
from holee.model import ForwardCurve, TermStructureModel
from holee.volstruct import CoarseVolMatrix, interpolate

ACCEPTANCE_LINES: dict[str, str] = {}


def make_factor(n, dt):
    return binary_ho_lee(dt) if n == 1 else simplex_factor(n, dt)


def random_piecewise_vol(rng, n, dt, H, buckets=4, bound=0.05):
    """Piecewise-constant loadings with ``|sigma| <= bound`` on ``buckets`` equal buckets."""
    edges = np.linspace(0, H, buckets + 1).round().astype(int)
    raw = rng.uniform(-1, 1, (buckets, n))
    raw *= bound * rng.uniform(0.2, 1.0, (buckets, 1)) / np.linalg.norm(raw, axis=1, keepdims=True)
    c = CoarseVolMatrix(edges * dt, raw, np.zeros(buckets))
    return interpolate(c, dt, H)


def stationary_model(f, v, F0):
    v = v.with_drift(stationary_drift(v, f))
    return TermStructureModel(f, v, ForwardCurve(0, f.dt, F0))


def sample_curve(H, dt, level=0.03, slope=0.002):
    return level + slope * np.arange(H) * dt + 0.002 * np.sin(np.arange(H))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_factor_model(rng):
    dt, H = 0.25, 40
    f = simplex_factor(2, dt)
    v = random_piecewise_vol(rng, 2, dt, H, bound=0.03)
    return stationary_model(f, v, sample_curve(H, dt))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
