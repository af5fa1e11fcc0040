import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cointlasso import Dataset

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(T=40, n1=2, n2=2, seed=0, noise=1.0, beta=None, gamma=None) -> Dataset:
    rng = np.random.default_rng(seed)
    x = np.cumsum(rng.standard_normal((T, n1)), axis=0)
    z = rng.standard_normal((T, n2))
    beta = np.ones(n1) if beta is None else np.asarray(beta, float)
    gamma = np.ones(n2) if gamma is None else np.asarray(gamma, float)
    y = x @ beta + z @ gamma + noise * rng.standard_normal(T)
    return Dataset(y, x, z)


@pytest.fixture
def small_data():
    return make_dataset()


def grid_minimizer(d, lam, weights, step=1e-3, lo=-4.0, hi=4.0):
    """Brute-force minimizer of ||y - Z g||^2 + lam * sum w |g| over a square grid."""
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    g = d.z.T @ d.z
    b = d.z.T @ d.y
    best, arg = np.inf, None
    pen2 = lam * weights[1] * np.abs(grid)
    for start in range(0, len(grid), 1000):
        g1 = grid[start:start + 1000, None]
        vals = (g[0, 0] * g1**2 + 2 * g[0, 1] * g1 * grid[None, :] + g[1, 1] * grid[None, :] ** 2
                - 2 * (b[0] * g1 + b[1] * grid[None, :]) + lam * weights[0] * np.abs(g1) + pen2[None, :])
        k = np.argmin(vals)
        if vals.flat[k] < best:
            i, j = np.unravel_index(k, vals.shape)
            best, arg = vals.flat[k], np.array([grid[start + i], grid[j]])
    return arg
