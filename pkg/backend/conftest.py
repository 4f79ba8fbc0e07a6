"""
Shared pytest fixtures: the four-point example, the Klein four-group and S_3
embedded in S_4
"""
import os
import sys

# no log file from test runs
os.environ['LOG_FILE'] = ''

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pytest

from services.permutation_service import Perm, full_group
from services.statistics_service import sum_first_k


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long Monte Carlo or enumeration runs')


def perm(*image) -> Perm:
    return Perm(tuple(image))


@pytest.fixture
def ex1_values():
    return (1.0, 2.0, -0.5, 0.3)


@pytest.fixture
def ex1_set():
    """Id, the double transposition (3 4 1 2) and the reversal (4 3 2 1); not a group"""
    return [perm(1, 2, 3, 4), perm(3, 4, 1, 2), perm(4, 3, 2, 1)]


@pytest.fixture
def sum2():
    return sum_first_k(2)


@pytest.fixture
def klein():
    return [perm(1, 2, 3, 4), perm(2, 1, 4, 3), perm(3, 4, 1, 2), perm(4, 3, 2, 1)]


@pytest.fixture
def s3_in_4():
    return [Perm(p.image + (4,)) for p in full_group(3)]
