import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hidden_reach import ObserverDesign, SystemModel, case1_budget, case2_budget, min_volume_bound, steady_state
from hidden_reach.calibration import QuantileMethod

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
SCENARIOS = ROOT / "scenarios"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

F = np.array([[0.84, 0.23], [-0.47, 0.12]])
C = np.array([[1.0, 0.0]])
L = np.array([[1.16], [-0.69]])
R1 = np.array([[0.45, -0.11], [-0.11, 0.45]])
R2 = np.array([[1.0]])
RATES = (0.01, 0.05, 0.10, 0.20)
EXCESS = (0.01, 0.03)


@pytest.fixture(scope="session")
def oracles():
    return json.loads((FIXTURES / "oracles.json").read_text())


@pytest.fixture(scope="session")
def model():
    return SystemModel(F, C, R1, R2, R0=np.eye(2))


@pytest.fixture(scope="session")
def observer():
    return ObserverDesign(L)


@pytest.fixture(scope="session")
def steady(model, observer):
    return steady_state(model, observer)


@pytest.fixture(scope="session")
def case1_bounds(model, observer, steady):
    return {A: min_volume_bound(model, observer, steady, case1_budget(A, 1, R1, QuantileMethod.GAMMA)) for A in RATES}


@pytest.fixture(scope="session")
def case2_bounds(model, observer, steady):
    return {
        a_p: min_volume_bound(model, observer, steady, case2_budget(0.05, a_p, 1, R1, QuantileMethod.GAMMA))
        for a_p in EXCESS
    }


def random_stable(rng, n, rho=0.9):
    A = rng.standard_normal((n, n))
    return A * (rho / max(abs(np.linalg.eigvals(A))))


def random_psd(rng, n, rank=None):
    B = rng.standard_normal((n, rank or n))
    return B @ B.T
