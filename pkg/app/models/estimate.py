from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .kernel import Kernel
from .path import Interval, _frozen_array


class BandwidthGrid(BaseModel):
    """候補バンド幅の集合 H (昇順)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_values(self):
        h = self.values
        if h.size == 0:
            raise ValueError("bandwidth grid is empty")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("bandwidths must be finite and positive")
        if np.any(np.diff(h) <= 0):
            raise ValueError("bandwidths must be strictly increasing")
        return self

    @property
    def h_min(self) -> float:
        return float(self.values[0])

    @property
    def h_max(self) -> float:
        return float(self.values[-1])

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(float(h) for h in self.values)

    @staticmethod
    def lower_bound(interval: Interval, kernel: Kernel, n: float) -> float:
        """h_min >= ||K||_inf ||K||_1 |I| / n"""
        return kernel.norm_inf * kernel.norm_l1 * interval.length / n

    @staticmethod
    def ceiling(interval: Interval, kernel: Kernel) -> float:
        """h <= (2/3) |I| / Delta"""
        return kernel.bandwidth_ceiling_factor * interval.length

    def violations(self, interval: Interval, kernel: Kernel, n: float) -> List[str]:
        """グリッドが理論上の前提を満たさない理由の一覧 (空なら問題なし)"""
        problems = []
        floor = self.lower_bound(interval, kernel, n)
        if self.h_min < floor * (1 - 1e-12):
            problems.append(f"h_min={self.h_min:g} is below {floor:g}")
        ceiling = self.ceiling(interval, kernel)
        if self.h_max > ceiling * (1 + 1e-12):
            problems.append(f"h_max={self.h_max:g} exceeds {ceiling:g}")
        return problems


class CurveEstimate(BaseModel):
    """評価グリッド上の推定曲線

    B(x,h) が正定値でない点は defined_mask = False で、値は NaN。
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: np.ndarray
    values: np.ndarray
    defined_mask: np.ndarray
    bandwidth: Optional[float] = None

    @field_validator("grid", "values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @field_validator("defined_mask", mode="before")
    @classmethod
    def _as_mask(cls, value):
        mask = np.array(value, dtype=bool).reshape(-1)
        mask.setflags(write=False)
        return mask

    @model_validator(mode="after")
    def _check_shapes(self):
        if not (self.grid.size == self.values.size == self.defined_mask.size):
            raise ValueError("grid, values and mask must have the same length")
        if np.any(np.isfinite(self.values[~self.defined_mask])):
            raise ValueError("undefined points must carry NaN")
        return self

    @classmethod
    def from_raw(
        cls,
        grid: np.ndarray,
        values: np.ndarray,
        defined: np.ndarray,
        bandwidth: Optional[float] = None,
    ) -> "CurveEstimate":
        """未定義点を NaN に置き換えて生成"""
        values = np.where(defined, values, np.nan)
        return cls(grid=grid, values=values, defined_mask=defined, bandwidth=bandwidth)

    @property
    def masked_fraction(self) -> float:
        return float(1.0 - np.mean(self.defined_mask))

    @property
    def fully_defined(self) -> bool:
        return bool(np.all(self.defined_mask))

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.defined_mask, self.values, fill)

    def clipped(self, floor: float) -> "CurveEstimate":
        """max(q_hat, floor) を適用 (報告用)"""
        return CurveEstimate(
            grid=self.grid,
            values=np.where(self.defined_mask, np.maximum(self.values, floor), np.nan),
            defined_mask=self.defined_mask,
            bandwidth=self.bandwidth,
        )


class SelectionResult(BaseModel):
    """罰則付き基準によるバンド幅選択の結果"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    h_hat: float
    h_min: float
    alpha: float
    criterion: Dict[float, Optional[float]]  # 全点マスクなら None
    v_hat: Dict[float, float]
    v_cross: Dict[float, float]
    penalty: Dict[float, float]
    masked_fraction: Dict[float, float]
    starved_events: Dict[float, int]
    curve: CurveEstimate
    achieved_nu: Optional[float] = None
    n_events: int = 0

    @model_validator(mode="after")
    def _check_argmin(self):
        if self.h_hat not in self.criterion:
            raise ValueError("h_hat must belong to the bandwidth grid")
        if self.criterion[self.h_hat] is None:
            raise ValueError("h_hat must have a defined criterion")
        return self

    @property
    def bandwidths(self) -> List[float]:
        return sorted(self.criterion)

    def defined(self, h: float) -> bool:
        return self.criterion[h] is not None

    def table(self) -> List[Dict[str, Any]]:
        """選択診断の行 (h,criterion,vhat,penalty,defined)"""
        return [
            {
                "h": h,
                "criterion": self.criterion[h],
                "defined": self.defined(h),
                "vhat": self.v_hat[h],
                "penalty": self.penalty[h],
            }
            for h in self.bandwidths
        ]
