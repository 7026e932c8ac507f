import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ratiocv.numerics import CovarianceStructure, MomentSet, is_positive_definite
from ratiocv.simulation import DEFAULT_MU, builtin_structure

ACCEPTANCE_LINES = []


def random_pd_structure(rng, low=-0.9, high=0.9, mu=DEFAULT_MU):
    """Unit-diagonal structure with off-diagonals uniform in (low, high), rejection-sampled to PD."""
    while True:
        structure = CovarianceStructure.from_lower(mu, rng.uniform(low, high, 6))
        if is_positive_definite(structure.sigma):
            return structure


def random_pd_moments(rng, count, **kw):
    return [MomentSet.from_structure(random_pd_structure(rng, **kw)) for _ in range(count)]


@pytest.fixture
def best_case_optimal():
    return builtin_structure("best-case-optimal")


@pytest.fixture
def worst_case_gordon():
    return builtin_structure("worst-case-gordon")


@pytest.fixture
def best_case_gordon():
    return builtin_structure("best-case-gordon")


@pytest.fixture
def moments_41(best_case_optimal):
    return MomentSet.from_structure(best_case_optimal)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
