import importlib
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..exceptions import InputError
from ..models.estimate import CurveEstimate
from ..models.path import Interval, _frozen_array

FamilyFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ParametricFamily(BaseModel):
    """パラメトリック族 {g_theta, theta in Theta} (Theta はコンパクトな箱)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    parameter_names: Tuple[str, ...]
    func: FamilyFunc
    grad_func: Optional[FamilyFunc] = None
    box_lo: np.ndarray
    box_hi: np.ndarray

    @field_validator("box_lo", "box_hi", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_box(self):
        d = len(self.parameter_names)
        if self.box_lo.size != d or self.box_hi.size != d:
            raise ValueError("box bounds must match the parameter dimension")
        if not (np.all(np.isfinite(self.box_lo)) and np.all(np.isfinite(self.box_hi))):
            raise ValueError("parameter box must be bounded")
        if np.any(self.box_lo > self.box_hi):
            raise ValueError("parameter box is empty")
        return self

    @property
    def dim(self) -> int:
        return len(self.parameter_names)

    @property
    def box(self) -> List[Tuple[float, float]]:
        return [(float(lo), float(hi)) for lo, hi in zip(self.box_lo, self.box_hi)]

    def __call__(self, theta, x) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.asarray(self.func(theta, x), dtype=float) * np.ones_like(x)

    def grad(self, theta, x) -> np.ndarray:
        """d g_theta(x) / d theta (末尾の軸に d 成分)"""
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.grad_func is not None:
            return np.asarray(self.grad_func(theta, x), dtype=float)
        # 中心差分
        out = np.empty(x.shape + (self.dim,))
        for j in range(self.dim):
            step = 1e-6 * max(1.0, abs(float(theta[j])))
            up, down = theta.copy(), theta.copy()
            up[j] += step
            down[j] -= step
            out[..., j] = (self(up, x) - self(down, x)) / (2 * step)
        return out

    def lipschitz(self, interval: Interval, points: int = 101) -> float:
        """sup_{theta in Theta, x in I} |grad g| (箱の頂点と中心で評価)"""
        x = interval.grid(points)
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in self.box])).reshape(self.dim, -1).T
        centre = 0.5 * (self.box_lo + self.box_hi)
        best = 0.0
        for theta in np.vstack([corners, centre]):
            norms = np.linalg.norm(self.grad(theta, x), axis=-1)
            best = max(best, float(np.max(norms)))
        return best

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.box_lo) and np.all(theta <= self.box_hi))

    def with_box(self, lo, hi) -> "ParametricFamily":
        return self.model_copy(update={"box_lo": _frozen_array(lo), "box_hi": _frozen_array(hi)})


def _exp_func(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return theta[0] * np.exp(theta[1] * x)


def _exp_grad(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    e = np.exp(theta[1] * x)
    return np.stack([e, theta[0] * x * e], axis=-1)


def _const_func(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.full(np.shape(x), theta[0])


def _const_grad(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(x) + (1,))


def exponential(box_lo=(1e-6, -1.0), box_hi=(1e6, 1.0)) -> ParametricFamily:
    """g(x) = a0 exp(a1 x), a0 > 0"""
    if box_lo[0] <= 0:
        raise InputError("a0 must be positive on the whole box", box_lo=list(box_lo))
    return ParametricFamily(
        name="exponential",
        parameter_names=("a0", "a1"),
        func=_exp_func,
        grad_func=_exp_grad,
        box_lo=box_lo,
        box_hi=box_hi,
    )


def constant(box_lo=(1e-6,), box_hi=(1e6,)) -> ParametricFamily:
    """g(x) = c, c > 0"""
    if box_lo[0] <= 0:
        raise InputError("c must be positive on the whole box", box_lo=list(box_lo))
    return ParametricFamily(
        name="constant",
        parameter_names=("c",),
        func=_const_func,
        grad_func=_const_grad,
        box_lo=box_lo,
        box_hi=box_hi,
    )


FAMILIES: Dict[str, Callable[..., ParametricFamily]] = {
    "exp": exponential,
    "exponential": exponential,
    "const": constant,
    "constant": constant,
}


def get_family(name: str) -> Callable[..., ParametricFamily]:
    factory = FAMILIES.get(name.lower())
    if factory is None:
        raise InputError(f"unknown family {name!r}", known=sorted(FAMILIES))
    return factory


def load_plugin(target: str) -> ParametricFamily:
    """'package.module:factory' から族を読み込む"""
    module_name, _, attr = target.partition(":")
    if not module_name or not attr:
        raise InputError(f"plugin family must look like module:factory, got {target!r}")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise InputError(f"cannot load plugin family {target!r}: {exc}") from exc
    family = factory()
    if not isinstance(family, ParametricFamily):
        raise InputError(f"{target!r} did not return a ParametricFamily")
    return family


def default_box(
    name: str, curve: CurveEstimate, interval: Interval, slack: float = 10.0
) -> Tuple[np.ndarray, np.ndarray]:
    """推定曲線の正の値から求めた初期値の周りに slack 倍の余裕をもつ箱"""
    usable = curve.defined_mask & (np.nan_to_num(curve.values, nan=0.0) > 0)
    if not np.any(usable):
        raise InputError(
            "cannot derive a parameter box: the estimate has no positive values",
            family=name,
        )
    x = curve.grid[usable]
    y = curve.values[usable]

    if name in ("const", "constant"):
        level = float(np.mean(y))
        return np.array([level / slack]), np.array([level * slack])

    if name in ("exp", "exponential"):
        if x.size >= 2 and np.ptp(x) > 0:
            a1, log_a0 = np.polyfit(x, np.log(y), 1)
        else:
            a1, log_a0 = 0.0, float(np.log(y[0]))
        a0 = float(np.exp(log_a0))
        width = slack * max(abs(float(a1)), 1.0 / interval.length)
        return (
            np.array([a0 / slack, float(a1) - width]),
            np.array([a0 * slack, float(a1) + width]),
        )

    raise InputError(f"no default box for family {name!r}; pass --box explicitly")


def build_family(
    name: str,
    curve: Optional[CurveEstimate] = None,
    interval: Optional[Interval] = None,
    box: Optional[Tuple[List[float], List[float]]] = None,
) -> ParametricFamily:
    """名前 (または plugin の module:factory) と箱から族を組み立てる"""
    if ":" in name:
        family = load_plugin(name)
        return family.with_box(*box) if box is not None else family
    factory = get_family(name)
    if box is None:
        if curve is None or interval is None:
            raise InputError("a parameter box or a pilot estimate is required", family=name)
        box = default_box(name, curve, interval)
    return factory(box_lo=tuple(box[0]), box_hi=tuple(box[1]))
