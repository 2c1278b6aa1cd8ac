import numpy as np
import pytest

from quasi2d.profiles import ProfileSpec, default_data, stretched_grid
from quasi2d.solvers import SolverConfig
from quasi2d.spectral import Grid

# a box small enough for unit tests that still resolves the profiles and keeps u0 periodic to 1e-6
SMALL_SPEC = ProfileSpec(sigma_h=1.5, u0_sigma_h=1.5)
SMALL_BASE = Grid(24, 16, 2 * np.pi * 2, 2 * np.pi)


def small_setup(eps: float, n_h: int = 24, tall_factor: int = 4, horizon: float = 0.5):
    base = Grid(n_h, 16, 2 * np.pi * 2, 2 * np.pi)
    tall = stretched_grid(base, eps, n_v=min(16 * tall_factor, int(16 / eps)) if eps < 1 else 16)
    cfg = SolverConfig(dt=0.025, horizon=horizon, sample_every=0.05)
    return base, tall, default_data(base, tall, eps, SMALL_SPEC), cfg


@pytest.fixture
def small_cfg():
    return SolverConfig(dt=0.025, horizon=0.5, sample_every=0.05)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.CRITERIA):
        terminalreporter.write_line(mod.CRITERIA[n])
