import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irregspec import FrequencyGrid, SpatialSample, dft_grid  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sample(rng, n, lam, dim):
    loc = rng.uniform(-lam / 2, lam / 2, size=(n, dim))
    return SpatialSample(lam, loc, rng.standard_normal(n))


@pytest.fixture
def small_field(rng):
    smp = random_sample(rng, 40, 10.0, 1)
    return smp, dft_grid(smp, FrequencyGrid(1, 12, 10.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
