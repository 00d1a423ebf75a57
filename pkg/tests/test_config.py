from pathlib import Path

import pytest
from pydantic import ValidationError

from app import config
from app.config import Settings, get_settings
from app.schemas import run as run_schemas
from app.schemas.run import EstimationRun, McRun
from app.schemas.scenario import ScenarioConfig
from app.services.io import load_json


@pytest.mark.unit
class TestSettingsLoading:
    """環境変数からの設定"""

    def test_testing_environment(self):
        settings = get_settings()
        assert isinstance(settings, config.TestSettings)
        assert settings.worker_count == 1

    def test_development_environment(self, monkeypatch):
        monkeypatch.setenv("ENVIRONMENT", "development")
        settings = get_settings()
        assert not isinstance(settings, config.TestSettings)
        assert settings.worker_count >= 1

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("EVAL_GRID_SIZE", "64")
        monkeypatch.setenv("THREADS", "3")
        settings = Settings()
        assert settings.eval_grid_size == 64
        assert settings.worker_count == 3

    def test_cors_origins(self):
        settings = Settings(cors_origins_str="http://a, http://b")
        assert settings.cors_origins == ["http://a", "http://b"]


@pytest.mark.unit
class TestRunConfigs:
    """コマンドごとの実行設定"""

    def _run(self, **extra):
        return EstimationRun(path="p.csv", events="e.csv", interval="-5:33", **extra)

    @pytest.mark.parametrize(
        "unit, hours", [("hour", 1.0), ("year", 8760.0), ("Day", 24.0), ("168", 168.0), (2.5, 2.5)]
    )
    def test_time_unit(self, unit, hours):
        run = self._run(time_unit=unit)
        assert run.time_unit == hours
        assert run.time_factor == pytest.approx(1.0 / hours)

    def test_invalid_time_unit(self):
        with pytest.raises(ValidationError):
            self._run(time_unit="fortnight")
        with pytest.raises(ValidationError):
            self._run(time_unit=-1.0)

    def test_invalid_interval_and_grid(self):
        with pytest.raises(ValidationError):
            EstimationRun(path="p.csv", events="e.csv", interval="33:-5")
        with pytest.raises(ValidationError):
            self._run(grid="geometric")

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            self._run(bandwidth=1.0)

    def test_h_must_be_positive(self):
        with pytest.raises(ValidationError):
            run_schemas.TestRun(path="p.csv", events="e.csv", interval="0:1", h="-1")
        assert run_schemas.TestRun(path="p.csv", events="e.csv", interval="0:1", h="0.5").h == "0.5"

    def test_mc_intervals(self):
        with pytest.raises(ValidationError):
            McRun(intervals=["1:0"])


@pytest.mark.unit
class TestScenarioDefaults:
    """組み込みシナリオの既定値"""

    def test_defaults(self):
        scenario = ScenarioConfig()
        assert scenario.temperature.vartheta == 0.011
        assert scenario.intensity.a0 == 1033.8
        assert scenario.intensity.time_factor == pytest.approx(1.0 / 8760.0)
        assert scenario.run.T_hours == 8760.0
        assert scenario.spike is None
        assert len(scenario.experiment.parsed_intervals()) == 3

    def test_constant_intensity(self):
        scenario = ScenarioConfig.model_validate({"intensity": {"family": "constant", "a0": 5.0}})
        assert scenario.intensity.q()([1.0, 2.0]).tolist() == [5.0, 5.0]

    def test_invalid_parameters(self):
        with pytest.raises(ValidationError):
            ScenarioConfig.model_validate({"temperature": {"vartheta": 0.0}})
        with pytest.raises(ValidationError):
            ScenarioConfig.model_validate({"experiment": {"intervals": []}})

    def test_shipped_scenario(self):
        document = load_json(Path(__file__).resolve().parents[1] / "docs" / "scenario.json")
        scenario = ScenarioConfig.model_validate(document)
        assert scenario.spike is not None
        assert scenario.model_copy(update={"spike": None}) == ScenarioConfig()
