from typing import Callable, NamedTuple, Optional

import numpy as np

from ..exceptions import InputError
from ..models.estimate import BandwidthGrid
from ..models.path import Interval, LocalTimeEstimate, SampledPath
from .logging_service import get_logger

log = get_logger(__name__)

_CHUNK = 128


class ObservabilityCheck(NamedTuple):
    holds: bool
    achieved_nu: float


def occupation_integral(
    path: SampledPath, f: Callable[[np.ndarray], np.ndarray], interval: Interval
) -> float:
    """int_0^T f(X_s) 1_{X_s in I} ds の左リーマン和"""
    values, steps = path.riemann_samples()
    inside = interval.contains(values)
    if not np.any(inside):
        return 0.0
    fx = np.asarray(f(values[inside]), dtype=float) * np.ones(int(np.count_nonzero(inside)))
    return float(np.sum(fx * steps[inside]))


def default_epsilon(
    interval: Interval,
    grid: Optional[BandwidthGrid] = None,
    h: Optional[float] = None,
) -> float:
    """局所時間の窓幅: 選んだ h の半分、なければ h_min/2、グリッドもなければ |I|/200"""
    if h is not None:
        if h <= 0:
            raise InputError("bandwidth must be positive", h=h)
        return 0.5 * float(h)
    if grid is not None:
        return 0.5 * grid.h_min
    return interval.length / 200.0


def local_time(
    path: SampledPath, interval: Interval, grid_size: int, epsilon: float
) -> LocalTimeEstimate:
    """l_T^x ~ (1/2eps) * |{s : |X_s - x| <= eps}|

    滞在時間は標本点を線形補間した経路について厳密に計算する。
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive", epsilon=epsilon)
    if grid_size < 2:
        raise InputError("grid_size must be >= 2", grid_size=grid_size)

    grid = interval.grid(grid_size)
    start, end = path.values[:-1], path.values[1:]
    steps = path.steps
    seg_lo = np.minimum(start, end)
    seg_hi = np.maximum(start, end)
    span = seg_hi - seg_lo
    flat = span <= 0
    safe_span = np.where(flat, 1.0, span)

    # 窓にかかり得る区間だけを使う
    relevant = (seg_hi >= interval.lo - epsilon) & (seg_lo <= interval.hi + epsilon)
    seg_lo, seg_hi, safe_span = seg_lo[relevant], seg_hi[relevant], safe_span[relevant]
    flat, steps, start = flat[relevant], steps[relevant], start[relevant]

    occupation = np.zeros(grid_size)
    for offset in range(0, grid_size, _CHUNK):
        x = grid[offset:offset + _CHUNK, None]
        overlap = np.clip(
            np.minimum(seg_hi, x + epsilon) - np.maximum(seg_lo, x - epsilon), 0.0, None
        )
        moving = steps * overlap / safe_span
        resting = steps * (np.abs(start - x) <= epsilon)
        occupation[offset:offset + _CHUNK] = np.sum(np.where(flat, resting, moving), axis=1)

    return LocalTimeEstimate(grid=grid, values=occupation / (2.0 * epsilon), epsilon=epsilon)


def check_observability(
    lt: LocalTimeEstimate, interval: Interval, horizon: float, nu: float
) -> ObservabilityCheck:
    """D(I, nu): inf_x l_T^x >= nu T / |I| の判定"""
    if horizon <= 0:
        raise InputError("horizon must be positive", horizon=horizon)
    if not 0 <= nu <= 1:
        raise InputError("nu must lie in [0, 1]", nu=nu)
    achieved = float(np.min(lt.values)) * interval.length / horizon
    holds = achieved >= nu if nu > 0 else achieved > 0
    return ObservabilityCheck(holds=bool(holds), achieved_nu=achieved)


def observability(
    path: SampledPath,
    interval: Interval,
    nu: float,
    epsilon: float,
    grid_size: int = 512,
) -> ObservabilityCheck:
    lt = local_time(path, interval, grid_size, epsilon)
    check = check_observability(lt, interval, path.horizon, nu)
    if not check.holds:
        log.warning(
            "observability_low",
            interval=interval.label(),
            achieved_nu=round(check.achieved_nu, 6),
            threshold=nu,
            epsilon=epsilon,
        )
    return check
