"""CLI コマンドごとの実行設定 (JSON ファイル + フラグで上書き)"""

from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config import settings
from ..models.path import Interval
from .estimation import GridSpec

TIME_UNITS = {"hour": 1.0, "day": 24.0, "week": 168.0, "year": 8760.0}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    threads: Optional[int] = Field(default=None, ge=1)


class EstimationRun(RunConfig):
    path: str
    events: str
    interval: str
    degree: int = Field(default=1, ge=0)
    kernel: str = "epanechnikov"
    n: int = Field(default=1, ge=1)
    alpha: float = Field(default_factory=lambda: settings.default_alpha, gt=0)
    grid: str = "arithmetic:0.1"
    h_max: Optional[float] = Field(default=None, gt=0)
    grid_count: Optional[float] = Field(default=None, gt=0)
    eval_grid_size: int = Field(default_factory=lambda: settings.eval_grid_size, ge=2)
    min_nu: float = Field(default_factory=lambda: settings.observability_nu, ge=0, le=1)
    clip_floor: Optional[float] = None
    time_unit: Union[float, str] = 1.0

    @field_validator("interval")
    @classmethod
    def _check_interval(cls, value: str) -> str:
        Interval.parse(value)
        return value

    @field_validator("grid")
    @classmethod
    def _check_grid(cls, value: str) -> str:
        GridSpec.parse(value)
        return value

    @field_validator("time_unit")
    @classmethod
    def _check_time_unit(cls, value):
        if isinstance(value, str):
            key = value.strip().lower()
            if key in TIME_UNITS:
                return TIME_UNITS[key]
            try:
                value = float(key)
            except ValueError as exc:
                raise ValueError(
                    f"time unit must be a number of hours or one of {sorted(TIME_UNITS)}"
                ) from exc
        if value <= 0:
            raise ValueError("time unit must be positive")
        return float(value)

    @property
    def time_factor(self) -> float:
        """ファイルの時間 (時間単位) -> 強度の時間単位"""
        return 1.0 / float(self.time_unit)


class EstimateRun(EstimationRun):
    out: str = "out"
    alphas: Optional[List[float]] = None

    @field_validator("alphas")
    @classmethod
    def _positive_alphas(cls, value):
        if value is not None and any(a <= 0 for a in value):
            raise ValueError("every alpha must be positive")
        return value


class TestRun(EstimationRun):
    family: str = "exp"
    h: str = "from-estimate"
    gamma: float = Field(default=0.05, gt=0, le=1)
    box_lo: Optional[List[float]] = None
    box_hi: Optional[List[float]] = None
    max_iter: int = Field(default=5000, ge=1)
    out: Optional[str] = None

    @field_validator("h")
    @classmethod
    def _check_h(cls, value: str) -> str:
        if value != "from-estimate":
            try:
                h = float(value)
            except ValueError as exc:
                raise ValueError("h must be 'from-estimate' or a positive number") from exc
            if h <= 0:
                raise ValueError("h must be positive")
        return value


class SimulateRun(RunConfig):
    scenario: Optional[str] = None
    out: str = "out"
    seed: Optional[int] = Field(default=None, ge=0)
    T_hours: Optional[float] = Field(default=None, gt=0)


class DetectRun(RunConfig):
    prices: str
    order: int = Field(default=20, ge=1)
    mult: float = Field(default=5.0, gt=0)
    exponent: float = Field(default=0.49, gt=0)
    segment_hours: float = Field(default=8760.0, gt=0)
    out: str = "events.csv"


class McRun(RunConfig):
    scenario: Optional[str] = None
    reps: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    intervals: Optional[List[str]] = None
    out: str = "table.csv"
    detail: Optional[str] = None
    curves: Optional[str] = None

    @field_validator("intervals")
    @classmethod
    def _check_intervals(cls, value):
        for text in value or []:
            Interval.parse(text)
        return value


class InfoRun(RunConfig):
    kernel: str = "epanechnikov"
    degree: int = Field(default=1, ge=0)


class RateRun(RunConfig):
    scenario: Optional[str] = None
    n_values: List[int] = [1, 4, 16]
    reps: int = Field(default=20, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    interval: Optional[str] = None
    out: Optional[str] = None

    @field_validator("n_values")
    @classmethod
    def _check_n_values(cls, value: List[int]) -> List[int]:
        if any(n < 1 for n in value):
            raise ValueError("scale values must be >= 1")
        return value
