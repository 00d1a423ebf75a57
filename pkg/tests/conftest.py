import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

# テスト環境設定
os.environ["ENVIRONMENT"] = "testing"

from app.main import app
from app.models.path import EventRecord, SampledPath
from app.schemas.estimation import EstimatorConfig
from app.schemas.scenario import ScenarioConfig
from app.services.simulate import simulate_cox


def intensity(x):
    """テスト用の真の強度 q(x) = 1000 exp(-0.05 x)"""
    return 1000.0 * np.exp(-0.05 * np.asarray(x, dtype=float))


@pytest.fixture(scope="session")
def true_intensity():
    return intensity


@pytest.fixture(scope="session")
def linear_path():
    """X_t = t (0 <= t <= 10): 局所時間は 1"""
    times = np.linspace(0.0, 10.0, 1001)
    return SampledPath(times=times, values=times, horizon=10.0)


@pytest.fixture(scope="session")
def sine_path():
    """[-2, 30] を 40 往復する経路 (1 年, 時間単位: 年)"""
    times = np.linspace(0.0, 1.0, 16001)
    values = 14.0 + 16.0 * np.sin(2.0 * np.pi * 40.0 * times)
    return SampledPath(times=times, values=values, horizon=1.0)


@pytest.fixture(scope="session")
def sine_events(sine_path):
    return simulate_cox(sine_path, intensity, n=1, seed=7)


@pytest.fixture(scope="session")
def estimator_config():
    return EstimatorConfig(interval="0:28", degree=1, eval_grid_size=201)


@pytest.fixture
def no_events(sine_path):
    return EventRecord(event_times=[], horizon=sine_path.horizon)


@pytest.fixture
def small_scenario():
    """数秒で終わるモンテカルロ用のシナリオ"""
    return ScenarioConfig.model_validate(
        {
            "run": {"T_hours": 1500, "step": 1.0, "seed": 3, "replications": 2},
            "experiment": {
                "intervals": ["2:12"],
                "grid": "arithmetic:0.5",
                "h_max": 4.0,
                "eval_grid_size": 101,
                "run_tests": False,
            },
        }
    )


@pytest.fixture(scope="function")
def client():
    """FastAPIテストクライアント"""
    with TestClient(app) as test_client:
        yield test_client
