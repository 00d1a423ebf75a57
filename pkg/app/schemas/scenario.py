from typing import Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config import settings
from ..models.path import Interval

YEAR_HOURS = 8760.0
DAY_HOURS = 24.0


class SeasonalOUParams(BaseModel):
    """気温モデル theta_t = Gamma_t + X_t, dX = -vartheta X dt + sigma dW (時間単位: 時間)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = 12.06
    b: float = 0.0000072
    c1: float = 7.81
    c2: float = -3.18
    tau1: float = -16924.50
    tau2: float = 10.84
    vartheta: float = Field(default=0.011, gt=0)
    sigma: float = Field(default=0.46, ge=0)
    x0: float = 0.0

    @property
    def stationary_variance(self) -> float:
        return self.sigma ** 2 / (2.0 * self.vartheta)


class OUParams(BaseModel):
    """平均回帰する連続成分 dY = -vartheta (Y - mean) dt + sigma dW"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mean: float = 50.0
    vartheta: float = Field(default=0.05, gt=0)
    sigma: float = Field(default=2.0, ge=0)
    y0: Optional[float] = None


class JumpLaw(BaseModel):
    """ジャンプの大きさの分布 (符号はラーデマッハー)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["signed_exponential", "fixed"] = "signed_exponential"
    scale: float = Field(default=50.0, gt=0)
    floor: float = Field(default=30.0, ge=0)
    positive_probability: float = Field(default=0.5, ge=0, le=1)


class SpikeModelParams(BaseModel):
    """スポット価格 S = Y + Z, dZ = -beta Z dt + ジャンプ"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta: float = Field(default=0.5, gt=0)
    jump_law: JumpLaw = JumpLaw()
    continuous: OUParams = OUParams()


class IntensityParams(BaseModel):
    """強度 lambda_t = n q(theta_t)。q の単位は time_unit_hours あたりの件数"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["exponential", "constant"] = "exponential"
    a0: float = Field(default=1033.8, ge=0)
    a1: float = -0.2
    n: int = Field(default=1, ge=1)
    time_unit_hours: float = Field(default=YEAR_HOURS, gt=0)

    def q(self) -> Callable[[np.ndarray], np.ndarray]:
        a0, a1 = self.a0, self.a1
        if self.family == "constant":
            return lambda x: np.full(np.shape(x), a0, dtype=float)
        return lambda x: a0 * np.exp(a1 * np.asarray(x, dtype=float))

    @property
    def time_factor(self) -> float:
        """時間 -> 強度の時間単位"""
        return 1.0 / self.time_unit_hours


class RunParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    T_hours: float = Field(default=YEAR_HOURS, gt=0)
    step: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)
    replications: int = Field(default=50, ge=1)


class ExperimentParams(BaseModel):
    """モンテカルロ実験での推定・検定の設定"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    intervals: List[str] = ["-1:29", "-3:31", "-5:33"]
    degree: int = Field(default=1, ge=0)
    kernel: str = "epanechnikov"
    alpha: float = Field(default=1.0, gt=0)
    grid: str = "arithmetic:0.1"
    grid_count: float = Field(default=200.0, gt=0)
    h_max: Optional[float] = Field(default=11.0, gt=0)
    gamma: float = Field(default=0.05, gt=0, le=1)
    min_nu: float = Field(default_factory=lambda: settings.observability_nu, ge=0, le=1)
    eval_grid_size: int = Field(default_factory=lambda: settings.eval_grid_size, ge=2)
    families: List[Literal["exponential", "constant"]] = ["exponential", "constant"]
    run_tests: bool = True

    @field_validator("intervals")
    @classmethod
    def _parse_intervals(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one interval is required")
        for text in value:
            Interval.parse(text)
        return value

    def parsed_intervals(self) -> List[Interval]:
        return [Interval.parse(text) for text in self.intervals]


class ScenarioConfig(BaseModel):
    """シナリオ JSON (temperature / intensity / spike / run / experiment)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    temperature: SeasonalOUParams = SeasonalOUParams()
    intensity: IntensityParams = IntensityParams()
    spike: Optional[SpikeModelParams] = None
    run: RunParams = RunParams()
    experiment: ExperimentParams = ExperimentParams()
