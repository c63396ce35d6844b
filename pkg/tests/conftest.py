import sys

import numpy as np
import pytest

from narxfloat.data import make_dataset
from narxfloat.errors import InstabilityError


def finite_seeds(system, count, start=0, limit=200):
    """First ``count`` seeds whose realization of ``system`` stays bounded."""
    seeds, seed = [], start
    while len(seeds) < count and seed < start + limit:
        try:
            make_dataset(system, seed)
        except InstabilityError:
            pass
        else:
            seeds.append(seed)
        seed += 1
    return seeds


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
