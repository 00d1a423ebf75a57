from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config import settings
from ..models.kernel import Kernel
from ..models.path import Interval
from ..services.kernels import get_kernel


def _coerce_interval(value: Any) -> Any:
    if isinstance(value, str):
        return Interval.parse(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Interval(lo=float(value[0]), hi=float(value[1]))
    return value


class EstimatorConfig(BaseModel):
    """局所多項式推定の設定"""

    model_config = ConfigDict(frozen=True)

    interval: Interval
    degree: int = Field(default=1, ge=0)
    kernel: str = "epanechnikov"
    n: int = Field(default=1, ge=1)
    alpha: float = Field(default_factory=lambda: settings.default_alpha, gt=0)
    eval_grid_size: int = Field(default_factory=lambda: settings.eval_grid_size, ge=2)
    pd_tolerance: float = Field(default_factory=lambda: settings.pd_tolerance, gt=0)
    clip_floor: Optional[float] = None
    min_nu: float = Field(default_factory=lambda: settings.observability_nu, ge=0, le=1)

    @field_validator("interval", mode="before")
    @classmethod
    def _parse_interval(cls, value):
        return _coerce_interval(value)

    @field_validator("kernel")
    @classmethod
    def _known_kernel(cls, value: str) -> str:
        get_kernel(value)
        return value.lower()

    def kernel_obj(self) -> Kernel:
        return get_kernel(self.kernel)

    def with_updates(self, **changes: Any) -> "EstimatorConfig":
        return self.model_validate({**self.model_dump(), **changes})


class GridSpec(BaseModel):
    """バンド幅グリッドの指定 ('arithmetic:0.1' または 'divisor')"""

    model_config = ConfigDict(frozen=True)

    style: Literal["arithmetic", "divisor"] = "arithmetic"
    step: float = Field(default=0.1, gt=0)
    h_max: Optional[float] = Field(default=None, gt=0)
    count: Optional[float] = Field(default=None, gt=0)
    max_count: int = Field(default=200, ge=1)

    @classmethod
    def parse(cls, text: str, **extra: Any) -> "GridSpec":
        style, _, step = text.strip().partition(":")
        data: Dict[str, Any] = {"style": style.lower(), **extra}
        if step:
            try:
                data["step"] = float(step)
            except ValueError as exc:
                raise ValueError(f"grid step must be a number, got {step!r}") from exc
        return cls(**data)


class EstimateSummary(BaseModel):
    """estimate コマンドの JSON サマリ"""

    interval: List[float]
    degree: int
    kernel: str
    n: int
    alpha: float
    h_hat: float
    h_min: float
    grid_size: int
    n_events: int
    achieved_nu: Optional[float]
    observability_ok: bool
    masked_fraction: float
    criterion_at_h_hat: float
    alphas: Optional[Dict[str, float]] = None
