from math import factorial
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class Kernel(BaseModel):
    """コンパクト台をもつカーネル関数とそのノルム"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    norm_l1: float
    norm_l2_sq: float
    norm_inf: float
    minorant_delta: float
    minorant_kmin: float

    @model_validator(mode="after")
    def _check_assumptions(self):
        if not 0 < self.support_radius <= 1:
            raise ValueError("kernel support radius must lie in (0, 1]")
        if not 0 < self.minorant_delta <= self.support_radius:
            raise ValueError("minorant delta must lie in (0, support_radius]")
        for field in ("norm_l1", "norm_l2_sq", "norm_inf", "minorant_kmin"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        return self

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.asarray(self.func(u), dtype=float)
        return np.where(np.abs(u) <= self.support_radius, out, 0.0)

    def scaled(self, u, h: float) -> np.ndarray:
        """K_h(u) = K(u/h) / h"""
        return self(np.asarray(u, dtype=float) / h) / h

    @property
    def bandwidth_ceiling_factor(self) -> float:
        """h <= (2/3) |I| / Delta の係数 2/(3 Delta)"""
        return 2.0 / (3.0 * self.minorant_delta)


class MonomialBasis(BaseModel):
    """U(x) = (1, x, x^2/2!, ..., x^m/m!)"""

    model_config = ConfigDict(frozen=True)

    degree: int

    @field_validator("degree")
    @classmethod
    def _non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("polynomial degree must be >= 0")
        return value

    @property
    def dimension(self) -> int:
        return self.degree + 1

    @property
    def factorials(self) -> np.ndarray:
        return np.array([float(factorial(j)) for j in range(self.dimension)])

    def __call__(self, x) -> np.ndarray:
        """末尾の軸に m+1 成分を並べて返す"""
        x = np.asarray(x, dtype=float)
        powers = x[..., None] ** np.arange(self.dimension)
        return powers / self.factorials

    def zero(self) -> np.ndarray:
        e0 = np.zeros(self.dimension)
        e0[0] = 1.0
        return e0
