import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from linearcredit.model import LhccParams, State, one_factor_from_roots  # noqa: E402

# parameter sets of the fitted cascade models (Bombardier, Disney)
FITTED = {
    "B2": (0.205, [0.546, 0.421], [0.624, 0.512]),
    "B3": (0.201, [1.263, 0.668, 0.385], [0.841, 0.699, 0.478]),
    "B3*": (0.400, [1.316, 0.884, 0.668], [0.696, 0.548, 0.401]),
    "D2": (0.056, [0.167, 0.165], [0.666, 0.662]),
    "D3": (0.064, [0.258, 0.229, 0.091], [0.753, 0.721, 0.298]),
    "D3*": (0.130, [0.294, 0.280, 0.212], [0.558, 0.536, 0.387]),
}
RATE = 0.0252
RECOVERY = 0.4


def fitted_cascade(name, sigma=0.5):
    g1, kappa, theta = FITTED[name]
    return LhccParams(g1, np.array(kappa), np.array(theta), np.full(len(kappa), sigma))


@pytest.fixture
def one_factor():
    """One factor, gamma 0.25, drift roots 0.05 and 1, sigma 0.75."""
    return one_factor_from_roots(0.25, 0.05, 1.0, 0.75)


@pytest.fixture
def s0():
    return State(1.0, np.array([0.2]))


@pytest.fixture
def bombardier2():
    return fitted_cascade("B2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable(rng, k, radius=0.9):
    A = rng.normal(size=(k, k))
    return A / np.max(np.abs(np.linalg.eigvals(A))) * radius - np.eye(k)
