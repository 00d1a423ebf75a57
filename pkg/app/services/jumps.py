from typing import List, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import gamma

from ..exceptions import InputError
from ..models.path import EventRecord, SampledPath
from .logging_service import get_logger

log = get_logger(__name__)


class SegmentVolatility(NamedTuple):
    start: float
    end: float
    sigma: float
    threshold: float
    flagged: int


class JumpDetection(NamedTuple):
    events: EventRecord
    segments: List[SegmentVolatility]


def abs_normal_moment(p: float) -> float:
    """mu_p = E|Z|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)"""
    return float(2.0 ** (p / 2.0) * gamma((p + 1.0) / 2.0) / np.sqrt(np.pi))


def mpv_sigma(increments: np.ndarray, order: int, step: float) -> float:
    """次数 order の multipower variation による拡散係数 sigma の推定"""
    increments = np.asarray(increments, dtype=float)
    m = increments.size
    if order < 1:
        raise InputError("multipower order must be >= 1", order=order)
    if m < order:
        raise InputError("segment too short for the multipower order", increments=m, order=order)
    power = 2.0 / order
    products = sliding_window_view(np.abs(increments) ** power, order).prod(axis=1)
    variance = (
        abs_normal_moment(power) ** (-order) * (m / (m - order + 1)) * products.sum() / (m * step)
    )
    return float(np.sqrt(variance))


def _segments(total: int, per_segment: int, order: int) -> List[slice]:
    """増分を per_segment ずつに分割 (短すぎる末尾は直前の区間に含める)"""
    bounds = list(range(0, total, per_segment)) + [total]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] < order:
        bounds.pop(-2)
    return [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]


def detect(
    prices: SampledPath,
    mpv_order: int = 20,
    threshold_mult: float = 5.0,
    exponent: float = 0.49,
    segment_hours: float = 8760.0,
) -> JumpDetection:
    if not prices.is_uniform():
        raise InputError("jump detection needs a uniform sampling step")
    if threshold_mult <= 0 or segment_hours <= 0:
        raise InputError(
            "threshold multiplier and segment length must be positive",
            threshold_mult=threshold_mult,
            segment_hours=segment_hours,
        )

    step = float(prices.steps[0])
    increments = np.diff(prices.values)
    per_segment = max(int(round(segment_hours / step)), 1)
    # Delta_i S Delta_{i+1} S < 0 (最後の増分は判定できない)
    reverses = np.zeros(increments.size, dtype=bool)
    reverses[:-1] = increments[:-1] * increments[1:] < 0

    flagged = np.zeros(increments.size, dtype=bool)
    segments: List[SegmentVolatility] = []
    for part in _segments(increments.size, per_segment, mpv_order):
        sigma = mpv_sigma(increments[part], mpv_order, step)
        threshold = threshold_mult * sigma * step ** exponent
        hits = (np.abs(increments[part]) > threshold) & reverses[part]
        flagged[part] = hits
        segments.append(
            SegmentVolatility(
                start=float(prices.times[part.start]),
                end=float(prices.times[part.stop]),
                sigma=sigma,
                threshold=threshold,
                flagged=int(np.count_nonzero(hits)),
            )
        )
        log.debug("segment_volatility", start=segments[-1].start, sigma=sigma, flagged=segments[-1].flagged)

    # イベント時刻は増分の左端
    events = EventRecord(event_times=prices.times[:-1][flagged], horizon=prices.horizon)
    log.info("jumps_detected", events=events.count, segments=len(segments))
    return JumpDetection(events=events, segments=segments)


def detect_jumps(
    prices: SampledPath,
    mpv_order: int = 20,
    threshold_mult: float = 5.0,
    exponent: float = 0.49,
    segment_hours: float = 8760.0,
) -> EventRecord:
    return detect(prices, mpv_order, threshold_mult, exponent, segment_hours).events
