"""パラメトリック族 H0: q = g_theta (on I) の適合度検定

M_n(theta) = || q_hat_{h_n} - S g_theta ||_I^2 - (1/n^2) int_I sum_tau (w K_{h_n})^2 dx
S g(x)     = int w(x,h_n,.) K_{h_n}(X_s - x) 1_{X_s in I} g(X_s) ds
"""

from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import qmc

from ..config import settings
from ..exceptions import EstimationError, InputError, OptimizerError
from ..models.path import EventRecord, SampledPath
from ..schemas.estimation import EstimatorConfig
from ..schemas.gof import TestReport
from .families import ParametricFamily
from .kernels import test_constant
from .localpoly import LocalPolynomialEstimator
from .logging_service import get_logger
from .normal import two_sided_pvalue, two_sided_quantile

log = get_logger(__name__)

COVERAGE_WARNING = 0.05
STARVATION_LIMIT = 0.05


class FitResult(NamedTuple):
    theta: np.ndarray
    value: float
    starts_converged: int
    starts: int


class Contrast:
    """固定したデータと h_n に対する theta -> M_n(theta)"""

    def __init__(self, estimator: LocalPolynomialEstimator, h_n: float, family: ParametricFamily):
        self.estimator = estimator
        self.h_n = float(h_n)
        self.family = family
        self.grid = estimator.grid

        curve = estimator.estimate(self.h_n)
        self.defined = curve.defined_mask
        self.qhat = curve.filled(0.0)
        self.masked_fraction = curve.masked_fraction
        self.smoother = estimator.smoothing_matrix(self.h_n)
        self.samples = estimator.sample_values
        self.bias = estimator.variance_terms(self.h_n, self.h_n).v_h

        if self.masked_fraction > COVERAGE_WARNING:
            log.warning(
                "contrast_coverage_low",
                masked_fraction=round(self.masked_fraction, 4),
                h_n=self.h_n,
            )

    def smoothed(self, theta) -> np.ndarray:
        return self.smoother @ self.family(theta, self.samples)

    def __call__(self, theta) -> float:
        diff = np.where(self.defined, self.qhat - self.smoothed(theta), 0.0)
        return float(trapezoid(diff * diff, x=self.grid)) - self.bias


def contrast(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    h_n: float,
    family: ParametricFamily,
    theta,
) -> float:
    estimator = LocalPolynomialEstimator(path, events, cfg, workers=1)
    return Contrast(estimator, h_n, family)(theta)


def starting_points(dim: int, seed: int = 0) -> np.ndarray:
    """[0,1]^d 上の 5^min(d,3) 個の初期点 (d <= 3 は格子、それ以上はラテン超方格)"""
    levels = (np.arange(5) + 0.5) / 5
    if dim <= 3:
        return np.array(list(product(levels, repeat=dim)), dtype=float).reshape(-1, dim)
    sampler = qmc.LatinHypercube(d=dim, seed=seed)
    return sampler.random(n=125)


def minimize_contrast(
    objective,
    family: ParametricFamily,
    max_iter: int = 5000,
    workers: Optional[int] = None,
) -> FitResult:
    """箱を [0,1]^d に正規化して Nelder-Mead を多点から実行"""
    lo, hi = family.box_lo, family.box_hi
    width = hi - lo
    free = width > 0
    if not np.any(free):
        theta = lo.copy()
        return FitResult(theta=theta, value=float(objective(theta)), starts_converged=1, starts=1)

    def to_theta(u: np.ndarray) -> np.ndarray:
        theta = lo.copy()
        theta[free] = lo[free] + np.clip(u, 0.0, 1.0) * width[free]
        return theta

    def run(start: np.ndarray):
        res = minimize(
            lambda u: objective(to_theta(u)),
            start,
            method="Nelder-Mead",
            bounds=[(0.0, 1.0)] * int(np.count_nonzero(free)),
            # 単体の大きさだけで収束判定
            options={"xatol": 1e-8, "fatol": np.inf, "maxiter": max_iter, "maxfev": 4 * max_iter},
        )
        return res

    starts = starting_points(int(np.count_nonzero(free)))
    workers = workers or settings.worker_count
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    converged = [r for r in results if r.success]
    if not converged:
        raise OptimizerError(
            "Nelder-Mead did not converge from any starting point",
            family=family.name,
            starts=len(starts),
            max_iter=max_iter,
        )
    if len(converged) < len(results):
        log.warning(
            "optimizer_partial_convergence",
            family=family.name,
            converged=len(converged),
            starts=len(results),
        )
    best = min(converged, key=lambda r: r.fun)
    return FitResult(
        theta=to_theta(best.x),
        value=float(best.fun),
        starts_converged=len(converged),
        starts=len(results),
    )


def fit(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    h_n: float,
    family: ParametricFamily,
    max_iter: int = 5000,
) -> np.ndarray:
    """theta_hat = argmin_{Theta} M_n(theta)"""
    estimator = LocalPolynomialEstimator(path, events, cfg, workers=1)
    return minimize_contrast(Contrast(estimator, h_n, family), family, max_iter).theta


def variance_estimate(
    estimator: LocalPolynomialEstimator,
    h_n: float,
    family: ParametricFamily,
    theta: np.ndarray,
    a_of_k: float,
) -> float:
    """V_n = A(K) int_I (g_theta(y) / D(y))^2 dy"""
    denom = estimator.kernel_occupation(h_n)
    vanished = denom <= 0
    if np.mean(vanished) > STARVATION_LIMIT:
        raise EstimationError(
            "kernel occupation vanishes on too much of the interval",
            vanished_fraction=float(np.mean(vanished)),
            h_n=h_n,
        )
    g = family(theta, estimator.grid)
    ratio = np.where(vanished, 0.0, g / np.where(vanished, 1.0, denom))
    value = a_of_k * float(trapezoid(ratio * ratio, x=estimator.grid))
    if not value > 0:
        raise EstimationError("test variance estimate is not positive", value=value)
    return value


def decide(
    contrast_value: float, variance: float, n: int, h_n: float, gamma: float
) -> Tuple[float, float, float, bool]:
    """(statistic, critical_value, p_value, reject) を整合的に求める"""
    scale = n * np.sqrt(h_n) / np.sqrt(variance)
    statistic = float(contrast_value * scale)
    critical = float(two_sided_quantile(gamma) / scale)
    reject = abs(contrast_value) >= critical
    p_value = two_sided_pvalue(statistic)
    # 境界での丸め誤差をそろえる
    if reject and p_value > gamma:
        p_value = gamma
    elif not reject and p_value <= gamma:
        p_value = float(np.nextafter(gamma, 1.0))
    return statistic, critical, p_value, bool(reject)


def run_test(
    estimator: LocalPolynomialEstimator,
    h_n: float,
    family: ParametricFamily,
    gamma: float = 0.05,
    max_iter: int = 5000,
    workers: Optional[int] = None,
) -> TestReport:
    if not 0 < gamma <= 1:
        raise InputError("gamma must lie in (0, 1]", gamma=gamma)
    cfg = estimator.cfg
    objective = Contrast(estimator, h_n, family)
    result = minimize_contrast(objective, family, max_iter, workers=workers)
    _, a_of_k = test_constant(estimator.kernel, cfg.degree)
    variance = variance_estimate(estimator, h_n, family, result.theta, a_of_k)
    statistic, critical, p_value, reject = decide(result.value, variance, cfg.n, h_n, gamma)

    log.info(
        "gof_test",
        family=family.name,
        theta_hat=[round(float(t), 6) for t in result.theta],
        statistic=round(statistic, 4),
        p_value=round(p_value, 6),
        reject=reject,
    )
    return TestReport(
        family=family.name,
        parameter_names=list(family.parameter_names),
        theta_hat=[float(t) for t in result.theta],
        contrast_value=result.value,
        statistic=statistic,
        variance_estimate=variance,
        critical_value=critical,
        p_value=p_value,
        reject=reject,
        level=gamma,
        h_n=float(h_n),
        n=cfg.n,
        masked_fraction=objective.masked_fraction,
        starts_converged=result.starts_converged,
    )


def test(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    h_n: float,
    family: ParametricFamily,
    gamma: float = 0.05,
) -> TestReport:
    estimator = LocalPolynomialEstimator(path, events, cfg, workers=1)
    return run_test(estimator, h_n, family, gamma)


def mle_exponential(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    a1_bounds: Tuple[float, float] = (-1.0, 1.0),
) -> np.ndarray:
    """条件付きポアソン尤度の最大化による (a0, a1) (実験的)

    log L = sum_tau log(n a0 e^{a1 X_tau}) - n a0 int e^{a1 X_s} 1 ds
    a0 について閉じた形で解き、a1 を 1 次元で探索する。
    """
    values, steps = path.riemann_samples()
    inside = cfg.interval.contains(values)
    xs, dt = values[inside], steps[inside]
    covariate = path.value_at(events.event_times)
    covariate = covariate[cfg.interval.contains(covariate)]
    count = covariate.size
    if count == 0:
        raise InputError("no events inside the interval", interval=cfg.interval.label())
    if xs.size == 0:
        raise InputError("the path never visits the interval", interval=cfg.interval.label())

    # 指数のオーバーフローを避けるため区間中心からの偏差で計算
    centre = 0.5 * (cfg.interval.lo + cfg.interval.hi)
    event_sum = float(np.sum(covariate - centre))

    def negative_profile(a1: float) -> float:
        exposure = float(np.sum(np.exp(a1 * (xs - centre)) * dt))
        return -(a1 * event_sum - count * np.log(exposure))

    res = minimize_scalar(negative_profile, bounds=a1_bounds, method="bounded",
                          options={"xatol": 1e-10})
    if not res.success:
        raise OptimizerError("profile likelihood maximisation failed", message=str(res.message))
    a1 = float(res.x)
    exposure = float(np.sum(np.exp(a1 * (xs - centre)) * dt))
    a0 = count / (cfg.n * exposure) * np.exp(-a1 * centre)
    return np.array([float(a0), a1])
