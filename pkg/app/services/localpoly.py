"""局所多項式による強度推定とバンド幅選択

q_hat_h(x) = (1/n) sum_tau w(x,h,(X_tau-x)/h) K_h(X_tau-x) 1_{X_tau in I}
w(x,h,z)   = U(0)^T B(x,h)^{-1} U(z)
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid

from ..config import settings
from ..exceptions import EstimationError, InputError
from ..models.estimate import BandwidthGrid, CurveEstimate, SelectionResult
from ..models.kernel import Kernel, MonomialBasis
from ..models.path import EventRecord, Interval, SampledPath
from ..schemas.estimation import EstimatorConfig, GridSpec
from .linalg import positive_definite_mask, solve_first_column
from .logging_service import get_logger
from .occupation import default_epsilon, observability

log = get_logger(__name__)

_GRID_CHUNK = 32
_EVENT_CHUNK = 2048


class BandwidthFit(NamedTuple):
    """1 つのバンド幅に対する評価グリッド上の量"""

    h: float
    coef: np.ndarray  # (G, m+1) = B(x,h)^{-1} e_0 (未定義点は 0)
    defined: np.ndarray  # (G,)
    events: np.ndarray  # (G, E) = w K_h 1 (イベントごとの寄与)
    starved_events: int


class VarianceTerms(NamedTuple):
    v_h: float
    v_cross: float


def _power_sums(
    points: np.ndarray,
    weights: np.ndarray,
    grid: np.ndarray,
    h: float,
    kernel: Kernel,
    order: int,
) -> np.ndarray:
    """sum_s z^r K_h(X_s - x) weight_s  (r = 0..order), z = (X_s - x)/h

    points は昇順。グリッドを塊に分けて台にかかる標本だけを使う。
    """
    out = np.zeros((grid.size, order + 1))
    reach = kernel.support_radius * h
    for start in range(0, grid.size, _GRID_CHUNK):
        x = grid[start:start + _GRID_CHUNK]
        lo = np.searchsorted(points, x[0] - reach, side="left")
        hi = np.searchsorted(points, x[-1] + reach, side="right")
        if lo == hi:
            continue
        z = (points[None, lo:hi] - x[:, None]) / h
        kz = kernel.scaled(points[None, lo:hi] - x[:, None], h) * weights[None, lo:hi]
        zp = np.ones_like(z)
        for r in range(order + 1):
            out[start:start + _GRID_CHUNK, r] = np.sum(kz * zp, axis=1)
            zp = zp * z
    return out


def _assemble(sums: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """B_jk = P_{j+k} / (j! k!)"""
    d = basis.dimension
    fact = basis.factorials
    idx = np.add.outer(np.arange(d), np.arange(d))
    return sums[..., idx] / np.outer(fact, fact)


def design_matrix(
    path: SampledPath,
    interval: Interval,
    kernel: Kernel,
    degree: int,
    h: float,
    x: float,
    pd_tolerance: Optional[float] = None,
) -> Optional[np.ndarray]:
    """B(x,h) の左リーマン和。正定値でなければ None"""
    if h <= 0:
        raise InputError("bandwidth must be positive", h=h)
    tolerance = settings.pd_tolerance if pd_tolerance is None else pd_tolerance
    basis = MonomialBasis(degree=degree)
    values, steps = path.riemann_samples()
    inside = interval.contains(values)
    order = np.argsort(values[inside], kind="stable")
    sums = _power_sums(
        values[inside][order], steps[inside][order], np.array([float(x)]), h, kernel, 2 * degree
    )
    matrix = _assemble(sums, basis)[0]
    if not positive_definite_mask(matrix, tolerance):
        return None
    return matrix


class LocalPolynomialEstimator:
    """経路とイベントを固定して、バンド幅ごとの計算をキャッシュする推定器"""

    def __init__(
        self,
        path: SampledPath,
        events: EventRecord,
        cfg: EstimatorConfig,
        workers: Optional[int] = None,
    ):
        self.path = path
        self.events = events
        self.cfg = cfg
        self.kernel = cfg.kernel_obj()
        self.basis = MonomialBasis(degree=cfg.degree)
        self.interval = cfg.interval
        self.grid = cfg.interval.grid(cfg.eval_grid_size)
        self.workers = workers or settings.worker_count

        values, steps = path.riemann_samples()
        inside = cfg.interval.contains(values)
        order = np.argsort(values[inside], kind="stable")
        self.sample_values = values[inside][order]
        self.sample_steps = steps[inside][order]

        covariate = path.value_at(events.event_times)
        covariate = covariate[cfg.interval.contains(covariate)]
        self.event_values = np.sort(covariate)

        self._fits: Dict[float, BandwidthFit] = {}
        self._smoothers: Dict[float, sparse.csr_matrix] = {}

    @property
    def n_events(self) -> int:
        """I に入ったイベント数 N_I"""
        return int(self.event_values.size)

    def fit(self, h: float) -> BandwidthFit:
        h = float(h)
        cached = self._fits.get(h)
        if cached is not None:
            return cached
        result = self._compute(h)
        self._fits[h] = result
        return result

    def _compute(self, h: float) -> BandwidthFit:
        if h <= 0:
            raise InputError("bandwidth must be positive", h=h)
        sums = _power_sums(
            self.sample_values, self.sample_steps, self.grid, h, self.kernel, 2 * self.cfg.degree
        )
        matrices = _assemble(sums, self.basis)
        defined = positive_definite_mask(matrices, self.cfg.pd_tolerance)
        coef = solve_first_column(matrices, defined)

        # 正定値でない点の台にかかったイベント数
        near = np.abs(self.event_values[None, :] - self.grid[:, None]) <= (
            self.kernel.support_radius * h
        )
        starved = int(np.count_nonzero(np.any(near & ~defined[:, None], axis=0)))
        return BandwidthFit(
            h=h,
            coef=coef,
            defined=defined,
            events=self._event_contributions(coef, h),
            starved_events=starved,
        )

    def _event_contributions(self, coef: np.ndarray, h: float) -> np.ndarray:
        grid = self.grid
        out = np.zeros((grid.size, self.n_events))
        for start in range(0, self.n_events, _EVENT_CHUNK):
            ev = self.event_values[start:start + _EVENT_CHUNK]
            z = (ev[None, :] - grid[:, None]) / h
            w = np.einsum("gej,gj->ge", self.basis(z), coef)
            kh = self.kernel.scaled(ev[None, :] - grid[:, None], h)
            out[:, start:start + _EVENT_CHUNK] = w * kh
        return out

    def prefetch(self, bandwidths: Iterable[float]) -> None:
        """複数のバンド幅を並列に計算してキャッシュ"""
        todo = [float(h) for h in bandwidths if float(h) not in self._fits]
        if not todo:
            return
        if self.workers <= 1 or len(todo) == 1:
            for h in todo:
                self.fit(h)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            fits = list(pool.map(self._compute, todo))
        for h, fit in zip(todo, fits):
            self._fits.setdefault(h, fit)

    def estimate(self, h: float) -> CurveEstimate:
        fit = self.fit(h)
        values = fit.events.sum(axis=1) / self.cfg.n
        return CurveEstimate.from_raw(self.grid, values, fit.defined, bandwidth=fit.h)

    def kernel_occupation(self, h: float) -> np.ndarray:
        """D(x) = int K_h(x - X_s) 1_{X_s in I} ds (評価グリッド上)"""
        sums = _power_sums(self.sample_values, self.sample_steps, self.grid, h, self.kernel, 0)
        return sums[:, 0]

    def smoothing_matrix(self, h: float) -> sparse.csr_matrix:
        """W[x, s] = w(x,h,z_s) K_h(X_s - x) dt_s (疎行列)

        W @ f(sample_values) は int w K_h 1 f(X_s) ds の左リーマン和。
        """
        h = float(h)
        cached = self._smoothers.get(h)
        if cached is not None:
            return cached

        fit = self.fit(h)
        points, steps = self.sample_values, self.sample_steps
        reach = self.kernel.support_radius * h
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        data: List[np.ndarray] = []
        for start in range(0, self.grid.size, _GRID_CHUNK):
            x = self.grid[start:start + _GRID_CHUNK]
            lo = np.searchsorted(points, x[0] - reach, side="left")
            hi = np.searchsorted(points, x[-1] + reach, side="right")
            if lo == hi:
                continue
            z = (points[None, lo:hi] - x[:, None]) / h
            w = np.einsum("gsj,gj->gs", self.basis(z), fit.coef[start:start + _GRID_CHUNK])
            kh = self.kernel.scaled(points[None, lo:hi] - x[:, None], h)
            entries = w * kh * steps[None, lo:hi]
            r, c = np.nonzero(entries)
            rows.append(r + start)
            cols.append(c + lo)
            data.append(entries[r, c])

        shape = (self.grid.size, points.size)
        if rows:
            matrix = sparse.csr_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
            )
        else:
            matrix = sparse.csr_matrix(shape)
        self._smoothers[h] = matrix
        return matrix

    def smooth(self, f: Callable[[np.ndarray], np.ndarray], h: float) -> CurveEstimate:
        """int w K_h 1_{X_s in I} f(X_s) ds (q_h の計算にも使う)"""
        fit = self.fit(h)
        fx = np.asarray(f(self.sample_values), dtype=float) * np.ones(self.sample_values.size)
        values = self.smoothing_matrix(h) @ fx
        return CurveEstimate.from_raw(self.grid, values, fit.defined, bandwidth=fit.h)

    def variance_terms(self, h: float, h_min: float) -> VarianceTerms:
        a = self.fit(h).events
        b = self.fit(h_min).events
        scale = 1.0 / float(self.cfg.n) ** 2
        v_h = scale * float(np.sum(trapezoid(a * a, x=self.grid, axis=0)))
        v_cross = scale * float(np.sum(trapezoid(a * b, x=self.grid, axis=0)))
        return VarianceTerms(v_h=v_h, v_cross=v_cross)

    def grid_scale(self, count: Optional[float] = None) -> float:
        """h_min の下限に使う件数: 指定値、なければ N_I (0 件なら n)"""
        if count is not None:
            return float(count)
        return float(self.n_events or self.cfg.n)

    def select(
        self,
        grid: BandwidthGrid,
        alpha: Optional[float] = None,
        scale: Optional[float] = None,
    ) -> SelectionResult:
        alpha = self.cfg.alpha if alpha is None else float(alpha)
        if alpha <= 0:
            raise InputError("alpha must be positive", alpha=alpha)
        problems = grid.violations(self.interval, self.kernel, self.grid_scale(scale))
        if problems:
            raise InputError(
                "bandwidth grid violates its bounds",
                interval=self.interval.label(),
                problems=problems,
            )

        self.prefetch(grid)
        h_min = grid.h_min
        reference = self.estimate(h_min).filled(0.0)

        criterion: Dict[float, Optional[float]] = {}
        v_hat: Dict[float, float] = {}
        v_cross: Dict[float, float] = {}
        pens: Dict[float, float] = {}
        masked: Dict[float, float] = {}
        starved: Dict[float, int] = {}

        v_min = self.variance_terms(h_min, h_min).v_h
        for h in grid:
            curve = self.estimate(h)
            terms = self.variance_terms(h, h_min)
            pen = penalty(terms.v_h, v_min, terms.v_cross, alpha)
            v_hat[h], v_cross[h], pens[h] = terms.v_h, terms.v_cross, pen
            masked[h] = curve.masked_fraction
            starved[h] = self.fit(h).starved_events
            if not np.any(curve.defined_mask):
                criterion[h] = None
                continue
            # 参照曲線の未定義点は 0 として比較する
            diff = np.where(curve.defined_mask, curve.filled(0.0) - reference, 0.0)
            criterion[h] = float(trapezoid(diff * diff, x=self.grid)) + pen

        finite = [h for h in grid if criterion[h] is not None]
        if not finite:
            raise EstimationError(
                "every bandwidth produced an all-masked curve",
                interval=self.interval.label(),
                bandwidths=len(grid),
            )
        # 同値なら小さい h (grid は昇順)
        h_hat = min(finite, key=lambda h: criterion[h])

        curve = self.estimate(h_hat)
        check = observability(
            self.path,
            self.interval,
            self.cfg.min_nu,
            default_epsilon(self.interval, grid, h_hat),
            grid_size=self.grid.size,
        )
        if curve.masked_fraction > 0:
            log.warning(
                "curve_partially_masked",
                h_hat=h_hat,
                masked_fraction=round(curve.masked_fraction, 4),
            )
        if self.cfg.clip_floor is not None:
            curve = curve.clipped(self.cfg.clip_floor)

        log.info(
            "bandwidth_selected",
            interval=self.interval.label(),
            h_hat=h_hat,
            alpha=alpha,
            grid_size=len(grid),
            n_events=self.n_events,
        )
        return SelectionResult(
            h_hat=h_hat,
            h_min=h_min,
            alpha=alpha,
            criterion=criterion,
            v_hat=v_hat,
            v_cross=v_cross,
            penalty=pens,
            masked_fraction=masked,
            starved_events=starved,
            curve=curve,
            achieved_nu=check.achieved_nu,
            n_events=self.n_events,
        )

    def relative_error(self, curve: CurveEstimate, true_q: Callable[[np.ndarray], np.ndarray]) -> float:
        """int (q - q_hat)^2 / int q^2 (評価グリッド上の台形則)"""
        truth = np.asarray(true_q(self.grid), dtype=float) * np.ones(self.grid.size)
        denom = float(trapezoid(truth * truth, x=self.grid))
        if denom <= 0:
            raise InputError("true intensity has zero L2 norm on the interval")
        diff = curve.filled(0.0) - truth
        return float(trapezoid(diff * diff, x=self.grid)) / denom


def estimate(
    path: SampledPath, events: EventRecord, cfg: EstimatorConfig, h: float
) -> CurveEstimate:
    curve = LocalPolynomialEstimator(path, events, cfg, workers=1).estimate(h)
    if cfg.clip_floor is not None:
        curve = curve.clipped(cfg.clip_floor)
    return curve


def conditional_mean(
    path: SampledPath,
    true_q: Callable[[np.ndarray], np.ndarray],
    cfg: EstimatorConfig,
    h: float,
) -> CurveEstimate:
    """q_h(x) = int w K_h 1 q(X_s) ds (F^X_T 条件付き期待値)"""
    empty = EventRecord(event_times=[], horizon=path.horizon)
    return LocalPolynomialEstimator(path, empty, cfg, workers=1).smooth(true_q, h)


def variance_terms(
    path: SampledPath, events: EventRecord, cfg: EstimatorConfig, h: float, h_min: float
) -> VarianceTerms:
    return LocalPolynomialEstimator(path, events, cfg, workers=1).variance_terms(h, h_min)


def penalty(v_h: float, v_hmin: float, v_cross: float, alpha: float) -> float:
    """pen_alpha(h) = alpha V_h - V_h - V_hmin + 2 V_{h,hmin}"""
    return alpha * v_h - v_h - v_hmin + 2.0 * v_cross


def select_bandwidth(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    grid: BandwidthGrid,
    workers: Optional[int] = None,
    scale: Optional[float] = None,
) -> SelectionResult:
    return LocalPolynomialEstimator(path, events, cfg, workers=workers).select(grid, scale=scale)


def alpha_scan(
    path: SampledPath,
    events: EventRecord,
    cfg: EstimatorConfig,
    grid: BandwidthGrid,
    alphas: Sequence[float],
    workers: Optional[int] = None,
    scale: Optional[float] = None,
) -> Dict[float, SelectionResult]:
    """複数の alpha で選択 (分散項は共有)"""
    estimator = LocalPolynomialEstimator(path, events, cfg, workers=workers)
    return {float(a): estimator.select(grid, alpha=a, scale=scale) for a in alphas}


def default_grid(
    cfg: EstimatorConfig,
    n: Optional[float] = None,
    style: str = "arithmetic",
    step: float = 0.1,
    h_max: Optional[float] = None,
    count: Optional[float] = None,
    max_count: int = 200,
) -> BandwidthGrid:
    """既定のバンド幅グリッド

    arithmetic: h_min = |I| ||K||_1 ||K||_inf / N_I から step 刻み
    divisor:    h = |I| / k (k は自然数), 多すぎるときは等比に間引く
    """
    kernel = cfg.kernel_obj()
    interval = cfg.interval
    ceiling = BandwidthGrid.ceiling(interval, kernel)
    top = ceiling if h_max is None else min(float(h_max), ceiling)
    if h_max is not None and h_max > ceiling:
        log.warning("h_max_capped", requested=h_max, ceiling=ceiling)

    scale = float(count if count is not None else (n if n is not None else cfg.n))
    if scale <= 0:
        raise InputError("cannot build a bandwidth grid without events", interval=interval.label())
    h_min = BandwidthGrid.lower_bound(interval, kernel, scale)

    if style == "arithmetic":
        if step <= 0:
            raise InputError("grid step must be positive", step=step)
        size = int(np.floor((top - h_min) / step + 1e-9)) + 1 if top >= h_min else 0
        values = h_min + step * np.arange(max(size, 0))
    elif style == "divisor":
        k_max = int(np.floor(interval.length / h_min + 1e-9))
        k_min = int(np.ceil(interval.length / top - 1e-9))
        k_min = max(k_min, 1)
        if k_max < k_min:
            values = np.array([])
        else:
            ks = np.arange(k_min, k_max + 1)
            if ks.size > max_count:
                ks = np.unique(np.round(np.geomspace(k_min, k_max, max_count)).astype(int))
            values = np.sort(interval.length / ks)
    else:
        raise InputError(f"unknown grid style {style!r}", known=["arithmetic", "divisor"])

    if values.size == 0:
        raise InputError(
            "bandwidth grid is empty; interval and scale are incompatible",
            interval=interval.label(),
            h_min=h_min,
            h_max=top,
        )
    return BandwidthGrid(values=values)


def observed_grid(
    estimator: LocalPolynomialEstimator,
    spec: GridSpec,
    h_max: Optional[float] = None,
    count: Optional[float] = None,
) -> BandwidthGrid:
    """観測データ用のグリッド: count 未指定なら N_I を使う"""
    if count is None and estimator.n_events == 0:
        log.warning("no_events_in_interval", interval=estimator.interval.label())
    count = estimator.grid_scale(count)
    return default_grid(
        estimator.cfg,
        style=spec.style,
        step=spec.step,
        h_max=h_max if h_max is not None else spec.h_max,
        count=count,
        max_count=spec.max_count,
    )
