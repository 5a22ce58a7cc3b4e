"""Shared pytest fixtures."""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core import Box, Oracle, ProblemConstants, ProblemInstance, RngStream  # noqa: E402
from data import GroupRule, split_dataset, synthetic_classifier_data  # noqa: E402
from problems import l1_ball_problem, l1_oracle, synthetic_two_ball  # noqa: E402


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture(scope="session")
def classifier_data():
    raw = synthetic_classifier_data(n=300, d=6, seed=7)
    return split_dataset(raw, 0, GroupRule("==", (1.0,)), seed=7).classifier_data()


@pytest.fixture
def l1_problem():
    """f = ||x - (2, 0)||_1, g = ||x||^2 - 1 over ball(3)."""
    return l1_ball_problem([2.0, 0.0], radius=3.0)


@pytest.fixture(scope="session")
def two_ball():
    return synthetic_two_ball([-2.0, 0.0], [2.0, 0.0], 1.0, objective=[-1.0, 0.5])


@pytest.fixture
def interval_problem():
    """f = |y|, g = y - 1 over [-2, 2]."""
    constraint = Oracle(lambda y: (float(y[0]) - 1.0, np.ones(1)), name="upper_bound", M=1.0)
    constants = ProblemConstants(M=1.0, rho=0.0, D=4.0, g_feas_value=-1.0, x_feas=np.zeros(1))
    return ProblemInstance(1, l1_oracle(np.zeros(1)), constraint, Box(-2.0, 2.0), constants, name="interval")
