from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.signal import lfilter

from ..exceptions import InputError, SimulationError
from ..models.path import EventRecord, SampledPath
from ..schemas.scenario import (
    DAY_HOURS,
    YEAR_HOURS,
    JumpLaw,
    OUParams,
    ScenarioConfig,
    SeasonalOUParams,
    SpikeModelParams,
)
from .logging_service import get_logger

log = get_logger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

ENVELOPE_FACTOR = 1.01


class SimulatedScenario(NamedTuple):
    temperature: SampledPath
    events: EventRecord
    prices: Optional[SampledPath]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def time_grid(T: float, step: float) -> np.ndarray:
    """0, step, 2 step, ... (<= T)"""
    if step <= 0 or T <= 0:
        raise InputError("horizon and step must be positive", T=T, step=step)
    count = int(np.floor(T / step + 1e-9))
    if count < 1:
        raise InputError("horizon shorter than one step", T=T, step=step)
    times = step * np.arange(count + 1, dtype=float)
    times[-1] = min(times[-1], T)
    return times


def trend(params: SeasonalOUParams, t) -> np.ndarray:
    """Gamma_t = a + b t + c1 sin((2 pi t + tau1)/8760) + c2 sin((2 pi t + tau2)/24)"""
    t = np.asarray(t, dtype=float)
    return (
        params.a
        + params.b * t
        + params.c1 * np.sin((2.0 * np.pi * t + params.tau1) / YEAR_HOURS)
        + params.c2 * np.sin((2.0 * np.pi * t + params.tau2) / DAY_HOURS)
    )


def ou_exact(
    times: np.ndarray, vartheta: float, sigma: float, x0: float, rng: np.random.Generator
) -> np.ndarray:
    """dX = -vartheta X dt + sigma dW の厳密な推移

    X_{t+d} = X_t e^{-vartheta d} + sigma sqrt((1 - e^{-2 vartheta d}) / (2 vartheta)) xi
    """
    steps = np.diff(times)
    decay = np.exp(-vartheta * steps)
    sd = sigma * np.sqrt(-np.expm1(-2.0 * vartheta * steps) / (2.0 * vartheta))
    noise = sd * rng.standard_normal(steps.size)
    if np.allclose(decay, decay[0]):
        # 等間隔なら AR(1) フィルタで一括計算
        drive = np.concatenate([[x0], noise])
        return lfilter([1.0], [1.0, -decay[0]], drive)
    out = np.empty(times.size)
    out[0] = x0
    for k in range(steps.size):
        out[k + 1] = out[k] * decay[k] + noise[k]
    return out


def simulate_temperature(
    params: SeasonalOUParams, T_hours: float, step: float, seed: SeedLike = None
) -> SampledPath:
    times = time_grid(T_hours, step)
    deviation = ou_exact(times, params.vartheta, params.sigma, params.x0, _rng(seed))
    return SampledPath(times=times, values=trend(params, times) + deviation, horizon=T_hours)


def simulate_cox(
    path: SampledPath,
    q: Callable[[np.ndarray], np.ndarray],
    n: int,
    seed: SeedLike = None,
) -> EventRecord:
    """Lewis-Shedler の間引きで強度 n q(X_t) の点過程を生成"""
    rng = _rng(seed)
    observed = np.asarray(q(path.values), dtype=float) * np.ones(path.size)
    if not np.all(np.isfinite(observed)):
        raise SimulationError("intensity is not finite on the observed range")
    if np.any(observed < 0):
        raise SimulationError(
            "intensity is negative on the observed range", minimum=float(observed.min())
        )

    envelope = ENVELOPE_FACTOR * n * float(observed.max())
    start, end = float(path.times[0]), float(path.horizon)
    if envelope <= 0 or end <= start:
        return EventRecord(event_times=[], horizon=path.horizon)

    count = rng.poisson(envelope * (end - start))
    candidates = np.sort(rng.uniform(start, end, size=count))
    rate = n * np.asarray(q(path.value_at(candidates)), dtype=float) * np.ones(count)
    if np.any(rate < 0):
        raise SimulationError("intensity is negative between observations")

    ratio = rate / envelope
    clipped = int(np.count_nonzero(ratio > 1.0))
    if clipped:
        log.warning("thinning_envelope_exceeded", candidates=clipped, envelope=envelope)
    accepted = rng.uniform(size=count) < np.minimum(ratio, 1.0)
    return EventRecord(event_times=candidates[accepted], horizon=path.horizon)


def draw_jumps(law: JumpLaw, size: int, rng: np.random.Generator) -> np.ndarray:
    sign = np.where(rng.uniform(size=size) < law.positive_probability, 1.0, -1.0)
    if law.kind == "fixed":
        magnitude = np.full(size, law.scale)
    else:
        magnitude = law.floor + rng.exponential(law.scale, size=size)
    return sign * magnitude


def spike_component(
    times: np.ndarray, jump_times: np.ndarray, sizes: np.ndarray, beta: float
) -> np.ndarray:
    """Z_t = sum_{tau <= t} J_tau e^{-beta (t - tau)} を格子上で厳密に計算"""
    index = np.searchsorted(times, jump_times, side="left")
    keep = index < times.size
    index, jump_times, sizes = index[keep], jump_times[keep], sizes[keep]
    arrivals = sizes * np.exp(-beta * (times[index] - jump_times))
    drive = np.bincount(index, weights=arrivals, minlength=times.size)
    steps = np.diff(times)
    decay = np.exp(-beta * steps)
    if np.allclose(decay, decay[0]):
        return lfilter([1.0], [1.0, -decay[0]], drive)
    out = np.empty(times.size)
    out[0] = drive[0]
    for k in range(steps.size):
        out[k + 1] = out[k] * decay[k] + drive[k + 1]
    return out


def continuous_component(
    params: OUParams, times: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    y0 = params.mean if params.y0 is None else params.y0
    return params.mean + ou_exact(times, params.vartheta, params.sigma, y0 - params.mean, rng)


def simulate_spot(
    spike: SpikeModelParams,
    events: EventRecord,
    T: float,
    step: float,
    seed: SeedLike = None,
) -> SampledPath:
    """S = Y + Z (時間単位: 時間)"""
    rng = _rng(seed)
    times = time_grid(T, step)
    sizes = draw_jumps(spike.jump_law, events.count, rng)
    z = spike_component(times, np.asarray(events.event_times), sizes, spike.beta)
    y = continuous_component(spike.continuous, times, rng)
    return SampledPath(times=times, values=y + z, horizon=T)


def simulate_scenario(scenario: ScenarioConfig, seed: SeedLike = None) -> SimulatedScenario:
    """気温・イベント・(価格) をそれぞれ独立な部分系列の乱数で生成 (時間単位: 時間)"""
    run = scenario.run
    root = np.random.SeedSequence(run.seed if seed is None else seed)
    temp_seed, event_seed, spike_seed = root.spawn(3)

    path = simulate_temperature(scenario.temperature, run.T_hours, run.step, temp_seed)
    intensity = scenario.intensity
    factor = intensity.time_factor
    events = simulate_cox(path.rescaled(factor), intensity.q(), intensity.n, event_seed)
    events = events.rescaled(1.0 / factor)

    prices = None
    if scenario.spike is not None:
        prices = simulate_spot(scenario.spike, events, run.T_hours, run.step, spike_seed)

    log.info(
        "scenario_simulated",
        T_hours=run.T_hours,
        samples=path.size,
        events=events.count,
        prices=prices is not None,
    )
    return SimulatedScenario(temperature=path, events=events, prices=prices)
