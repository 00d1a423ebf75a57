from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


def _frozen_array(value) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


class Interval(BaseModel):
    """推定区間 I = [lo, hi]"""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_order(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        return self

    @classmethod
    def parse(cls, text: str) -> "Interval":
        """'lo:hi' 形式の文字列から生成"""
        try:
            lo, hi = (float(part) for part in text.split(":"))
        except ValueError as exc:
            raise ValueError(f"interval must look like lo:hi, got {text!r}") from exc
        return cls(lo=lo, hi=hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)

    def grid(self, size: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, size)

    def label(self) -> str:
        return f"[{self.lo:g},{self.hi:g}]"


class SampledPath(BaseModel):
    """離散観測された共変量の経路 (連続観測の代替)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    horizon: float

    @model_validator(mode="before")
    @classmethod
    def _default_horizon(cls, data):
        if isinstance(data, dict) and data.get("horizon") is None and "times" in data:
            times = np.asarray(data["times"], dtype=float)
            data = {**data, "horizon": float(times[-1]) if times.size else 0.0}
        return data

    @field_validator("times", "values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_path(self):
        if self.times.size != self.values.size:
            raise ValueError("times and values must have the same length")
        if self.times.size < 2:
            raise ValueError("a sampled path needs at least 2 points")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.values)):
            raise ValueError("path contains non-finite entries")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must be strictly increasing")
        if self.times[0] < 0 or self.horizon <= 0 or self.times[-1] > self.horizon:
            raise ValueError("path times must lie in [0, T] with T > 0")
        return self

    @property
    def size(self) -> int:
        return int(self.times.size)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def riemann_samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """左リーマン和の (X_{t_i}, t_{i+1} - t_i)"""
        return self.values[:-1], self.steps

    def value_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """線形補間による X_t"""
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        steps = self.steps
        return bool(np.all(np.abs(steps - steps[0]) <= rtol * abs(steps[0])))

    def rescaled(self, factor: float) -> "SampledPath":
        """時間単位の変換 (例: 時間 -> 年 は factor = 1/8760)"""
        return SampledPath(
            times=self.times * factor, values=self.values, horizon=self.horizon * factor
        )


class EventRecord(BaseModel):
    """計数過程 N のジャンプ時刻"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    event_times: np.ndarray
    horizon: float

    @field_validator("event_times", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_events(self):
        t = self.event_times
        if not np.all(np.isfinite(t)):
            raise ValueError("event times must be finite")
        if np.any(np.diff(t) < 0):
            raise ValueError("event times must be sorted")
        if t.size and (t[0] < 0 or t[-1] > self.horizon):
            raise ValueError("event times must lie in [0, T]")
        return self

    @property
    def count(self) -> int:
        return int(self.event_times.size)

    def rescaled(self, factor: float) -> "EventRecord":
        return EventRecord(event_times=self.event_times * factor, horizon=self.horizon * factor)

    def union(self, other: "EventRecord") -> "EventRecord":
        merged = np.sort(np.concatenate([self.event_times, other.event_times]), kind="stable")
        return EventRecord(event_times=merged, horizon=max(self.horizon, other.horizon))


class LocalTimeEstimate(BaseModel):
    """局所時間 l_T^x の推定値"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: np.ndarray
    values: np.ndarray
    epsilon: float

    @field_validator("grid", "values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_values(self):
        if self.grid.size != self.values.size:
            raise ValueError("grid and values must have the same length")
        if np.any(self.values < 0):
            raise ValueError("local time cannot be negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return self
