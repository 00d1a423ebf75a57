"""モンテカルロ実験: 相対誤差 e_hat / オラクル誤差 e_o / 検定の受容率 / 収束率"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from ..config import settings
from ..exceptions import EstimationError, InputError, OptimizerError
from ..models.estimate import BandwidthGrid
from ..models.path import Interval
from ..schemas.estimation import EstimatorConfig, GridSpec
from ..schemas.experiment import McSummary, RateCheck
from ..schemas.scenario import ScenarioConfig
from .families import build_family
from .gof import mle_exponential, run_test
from .localpoly import LocalPolynomialEstimator, default_grid
from .logging_service import RunLogger, get_logger
from .normal import norm_ppf
from .simulate import simulate_scenario

log = get_logger(__name__)


class IntervalOutcome(NamedTuple):
    """1 反復 x 1 区間の結果"""

    converged: bool
    achieved_nu: Optional[float]
    h_hat: Optional[float]
    rel_error: Optional[float]
    errors_by_h: Optional[np.ndarray]
    curve: Optional[np.ndarray]
    n_events: int
    not_rejected: Dict[str, Optional[bool]]
    pvalues: Dict[str, Optional[float]]
    theta: Dict[str, Optional[List[float]]]
    mle_theta: Optional[List[float]]


def replication_seed(master_seed: int, index: int) -> int:
    """反復ごとのシード (master_seed XOR index)"""
    return int(master_seed) ^ int(index)


def _estimator_config(scenario: ScenarioConfig, interval: Interval) -> EstimatorConfig:
    exp = scenario.experiment
    return EstimatorConfig(
        interval=interval,
        degree=exp.degree,
        kernel=exp.kernel,
        n=scenario.intensity.n,
        alpha=exp.alpha,
        eval_grid_size=exp.eval_grid_size,
        min_nu=exp.min_nu,
    )


def bandwidth_grid(scenario: ScenarioConfig, cfg: EstimatorConfig) -> BandwidthGrid:
    """全反復で共通の H (データに依存しない)"""
    exp = scenario.experiment
    spec = GridSpec.parse(exp.grid)
    return default_grid(
        cfg,
        style=spec.style,
        step=spec.step,
        h_max=exp.h_max,
        count=exp.grid_count * scenario.intensity.n,
        max_count=spec.max_count,
    )


def _run_interval(
    scenario: ScenarioConfig,
    estimator: LocalPolynomialEstimator,
    grid: BandwidthGrid,
) -> IntervalOutcome:
    exp = scenario.experiment
    q = scenario.intensity.q()
    families = exp.families if exp.run_tests else []
    empty = IntervalOutcome(
        converged=False,
        achieved_nu=None,
        h_hat=None,
        rel_error=None,
        errors_by_h=None,
        curve=None,
        n_events=estimator.n_events,
        not_rejected={name: None for name in families},
        pvalues={name: None for name in families},
        theta={name: None for name in families},
        mle_theta=None,
    )
    try:
        selection = estimator.select(grid, scale=exp.grid_count * scenario.intensity.n)
    except EstimationError as exc:
        log.info("replication_not_converged", reason=exc.message)
        return empty

    converged = bool(
        selection.achieved_nu is not None
        and selection.achieved_nu >= estimator.cfg.min_nu
        and selection.curve.fully_defined
    )
    if not converged:
        return empty._replace(achieved_nu=selection.achieved_nu, h_hat=selection.h_hat)

    errors = np.array([estimator.relative_error(estimator.estimate(h), q) for h in grid])
    not_rejected: Dict[str, Optional[bool]] = {}
    pvalues: Dict[str, Optional[float]] = {}
    theta: Dict[str, Optional[List[float]]] = {}
    for name in families:
        try:
            family = build_family(name, curve=selection.curve, interval=estimator.interval)
            report = run_test(estimator, selection.h_hat, family, exp.gamma, workers=1)
        except (OptimizerError, EstimationError, InputError) as exc:
            log.warning("test_failed", family=name, reason=exc.message)
            not_rejected[name], pvalues[name], theta[name] = None, None, None
            continue
        not_rejected[name] = not report.reject
        pvalues[name] = report.p_value
        theta[name] = report.theta_hat

    mle = None
    if scenario.intensity.family == "exponential" and estimator.n_events > 0:
        try:
            mle = mle_exponential(estimator.path, estimator.events, estimator.cfg).tolist()
        except (OptimizerError, InputError):
            mle = None

    return IntervalOutcome(
        converged=True,
        achieved_nu=selection.achieved_nu,
        h_hat=selection.h_hat,
        rel_error=float(errors[list(grid).index(selection.h_hat)]),
        errors_by_h=errors,
        curve=selection.curve.filled(np.nan),
        n_events=estimator.n_events,
        not_rejected=not_rejected,
        pvalues=pvalues,
        theta=theta,
        mle_theta=mle,
    )


def run_replication(
    scenario: ScenarioConfig,
    index: int,
    intervals: Sequence[Interval],
    grids: Sequence[BandwidthGrid],
    master_seed: int,
) -> List[IntervalOutcome]:
    seed = replication_seed(master_seed, index)
    sim = simulate_scenario(scenario, seed)
    factor = scenario.intensity.time_factor
    path = sim.temperature.rescaled(factor)
    events = sim.events.rescaled(factor)

    outcomes = []
    for interval, grid in zip(intervals, grids):
        cfg = _estimator_config(scenario, interval)
        estimator = LocalPolynomialEstimator(path, events, cfg, workers=1)
        outcomes.append(_run_interval(scenario, estimator, grid))
    log.debug("replication_done", index=index, seed=seed)
    return outcomes


def _mean_ci(values: List[List[float]], position: int) -> Optional[tuple]:
    """平均の 95% 信頼区間 (2 反復以上)"""
    column = np.array([v[position] for v in values], dtype=float)
    if column.size < 2:
        return None
    half = float(norm_ppf(0.975)) * column.std(ddof=1) / np.sqrt(column.size)
    mean = float(column.mean())
    return (mean - half, mean + half)


def summarize(
    interval: Interval,
    grid: BandwidthGrid,
    outcomes: List[IntervalOutcome],
    families: Sequence[str],
    keep_curve: bool = False,
    eval_grid: Optional[np.ndarray] = None,
) -> McSummary:
    reps = len(outcomes)
    done = [o for o in outcomes if o.converged]
    summary = {
        "interval": f"{interval.lo:g}:{interval.hi:g}",
        "replications": reps,
        "converged": len(done),
        "pct_converged": 100.0 * len(done) / reps,
    }

    if done:
        errors = np.array([o.rel_error for o in done])
        by_h = np.vstack([o.errors_by_h for o in done]).mean(axis=0)
        best = int(np.argmin(by_h))
        summary.update(
            e_hat=float(errors.mean()),
            e_hat_se=float(errors.std(ddof=1) / np.sqrt(errors.size)) if errors.size > 1 else None,
            e_oracle=float(by_h[best]),
            oracle_h=float(grid.values[best]),
            h_hat_mean=float(np.mean([o.h_hat for o in done])),
        )

    pct: Dict[str, Optional[float]] = {}
    ci: Dict[str, Optional[tuple]] = {}
    for name in families:
        decided = [o.not_rejected[name] for o in done if o.not_rejected.get(name) is not None]
        pct[name] = 100.0 * float(np.mean(decided)) if decided else None
    thetas = [o.theta["exponential"] for o in done if o.theta.get("exponential")]
    if thetas:
        ci["a0"] = _mean_ci(thetas, 0)
        ci["a1"] = _mean_ci(thetas, 1)
    summary["pct_not_rejected"] = pct
    summary["theta_hat_ci"] = ci

    mles = [o.mle_theta for o in done if o.mle_theta is not None]
    if mles:
        summary["mle_theta_mean"] = np.mean(np.array(mles), axis=0).tolist()

    if keep_curve and done and eval_grid is not None:
        curves = np.vstack([o.curve for o in done])
        mean_curve = np.nanmean(curves, axis=0)
        summary["grid"] = eval_grid.tolist()
        summary["mean_curve"] = [None if np.isnan(v) else float(v) for v in mean_curve]

    return McSummary(**summary)


def run_mc(
    scenario: ScenarioConfig,
    intervals: Optional[Sequence[Interval]] = None,
    reps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    run_logger: Optional[RunLogger] = None,
    keep_curves: bool = False,
) -> List[McSummary]:
    """反復を並列に実行して区間ごとに集計 (集計は反復番号順)"""
    reps = scenario.run.replications if reps is None else int(reps)
    if reps < 1:
        raise InputError("replications must be >= 1", reps=reps)
    master = scenario.run.seed if seed is None else int(seed)
    intervals = list(intervals) if intervals is not None else scenario.experiment.parsed_intervals()
    configs = [_estimator_config(scenario, interval) for interval in intervals]
    grids = [bandwidth_grid(scenario, cfg) for cfg in configs]
    workers = workers or settings.worker_count

    def task(index: int) -> List[IntervalOutcome]:
        return run_replication(scenario, index, intervals, grids, master)

    log.info("mc_started", replications=reps, intervals=len(intervals), workers=workers)
    if workers > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(reps)))
    else:
        results = [task(i) for i in range(reps)]

    if run_logger is not None:
        for index, outcomes in enumerate(results):
            for interval, outcome in zip(intervals, outcomes):
                theta = outcome.theta.get("exponential") or [None, None]
                run_logger.log_replication(
                    replication=index,
                    interval=f"{interval.lo:g}:{interval.hi:g}",
                    converged=outcome.converged,
                    achieved_nu=outcome.achieved_nu,
                    h_hat=outcome.h_hat,
                    rel_error=outcome.rel_error,
                    n_events=outcome.n_events,
                    pvalue_exponential=outcome.pvalues.get("exponential"),
                    pvalue_constant=outcome.pvalues.get("constant"),
                    a0=theta[0],
                    a1=theta[1],
                )

    families = scenario.experiment.families if scenario.experiment.run_tests else []
    summaries = []
    for k, (interval, cfg, grid) in enumerate(zip(intervals, configs, grids)):
        outcomes = [result[k] for result in results]
        summary = summarize(
            interval, grid, outcomes, families, keep_curve=keep_curves,
            eval_grid=interval.grid(cfg.eval_grid_size),
        )
        log.info(
            "mc_interval_summary",
            interval=summary.interval,
            e_hat=summary.e_hat,
            e_oracle=summary.e_oracle,
            pct_converged=summary.pct_converged,
        )
        summaries.append(summary)
    return summaries


def rate_check(
    scenario: ScenarioConfig,
    n_values: Sequence[int],
    reps: int,
    seed: Optional[int] = None,
    interval: Optional[Interval] = None,
    workers: Optional[int] = None,
) -> RateCheck:
    """log(mean e_hat) を log(n) に最小二乗回帰した傾き"""
    ns = sorted(int(n) for n in n_values)
    if len(ns) < 3 or ns[0] < 1 or ns[-1] < 8 * ns[0]:
        raise InputError("rate check needs >= 3 scale values spanning at least 8x", n_values=ns)
    interval = interval or scenario.experiment.parsed_intervals()[0]
    experiment = scenario.experiment.model_copy(update={"run_tests": False})

    means = []
    for n in ns:
        scaled = scenario.model_copy(
            update={
                "intensity": scenario.intensity.model_copy(update={"n": n}),
                "experiment": experiment,
            }
        )
        summary = run_mc(scaled, [interval], reps=reps, seed=seed, workers=workers)[0]
        if summary.e_hat is None:
            raise EstimationError("no replication converged", n=n, interval=summary.interval)
        means.append(summary.e_hat)

    slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    log.info("rate_check", n_values=ns, mean_errors=means, slope=slope)
    return RateCheck(
        interval=f"{interval.lo:g}:{interval.hi:g}",
        n_values=ns,
        mean_errors=[float(m) for m in means],
        slope=slope,
    )
