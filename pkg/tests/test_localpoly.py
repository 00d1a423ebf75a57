import numpy as np
import pytest

from app.exceptions import EstimationError, InputError
from app.models.estimate import BandwidthGrid, CurveEstimate, SelectionResult
from app.models.path import EventRecord, SampledPath
from app.schemas.estimation import EstimatorConfig, GridSpec
from app.services.kernels import epanechnikov
from app.services.localpoly import (
    LocalPolynomialEstimator,
    alpha_scan,
    conditional_mean,
    default_grid,
    design_matrix,
    estimate,
    observed_grid,
    penalty,
    select_bandwidth,
    variance_terms,
)
from app.services.simulate import ou_exact


@pytest.fixture
def estimator(sine_path, sine_events, estimator_config):
    return LocalPolynomialEstimator(sine_path, sine_events, estimator_config, workers=1)


def _split(events: EventRecord):
    times = events.event_times
    first = EventRecord(event_times=times[::2], horizon=events.horizon)
    second = EventRecord(event_times=times[1::2], horizon=events.horizon)
    return first, second


@pytest.mark.unit
class TestBandwidthGrid:
    """グリッドの生成と検証"""

    def test_h_min_from_event_count(self):
        cfg = EstimatorConfig(interval="-5:33")
        grid = default_grid(cfg, count=219)
        assert grid.h_min == pytest.approx(38 * 0.75 / 219)
        assert grid.h_min == pytest.approx(0.1301, abs=5e-4)
        assert np.diff(grid.values) == pytest.approx(np.full(len(grid) - 1, 0.1))

    def test_h_max_is_capped_at_ceiling(self):
        cfg = EstimatorConfig(interval="0:3")
        grid = default_grid(cfg, count=100, h_max=50.0)
        assert grid.h_max <= BandwidthGrid.ceiling(cfg.interval, epanechnikov()) + 1e-12

    def test_divisor_grid(self):
        cfg = EstimatorConfig(interval="0:10")
        grid = default_grid(cfg, count=30, style="divisor")
        ratios = 10.0 / grid.values
        assert ratios == pytest.approx(np.round(ratios))
        assert grid.h_min >= BandwidthGrid.lower_bound(cfg.interval, epanechnikov(), 30) - 1e-12

    def test_empty_grid_raises(self):
        cfg = EstimatorConfig(interval="0:1")
        with pytest.raises(InputError):
            default_grid(cfg, count=0.5, h_max=0.1)

    def test_rejects_unsorted_values(self):
        with pytest.raises(ValueError):
            BandwidthGrid(values=[0.3, 0.2])

    def test_violations(self):
        cfg = EstimatorConfig(interval="0:10")
        grid = BandwidthGrid(values=[0.01, 0.5])
        problems = grid.violations(cfg.interval, epanechnikov(), 10)
        assert len(problems) == 1

    def test_observed_grid_uses_event_count(self, estimator):
        grid = observed_grid(estimator, GridSpec.parse("arithmetic:0.5"), h_max=3.0)
        assert grid.h_min == pytest.approx(28 * 0.75 / estimator.n_events)


@pytest.mark.unit
class TestLocalPolynomial:
    """推定量の基本的な性質"""

    def test_design_matrix_positive_definite(self, sine_path, estimator_config):
        matrix = design_matrix(
            sine_path, estimator_config.interval, epanechnikov(), 1, h=1.0, x=14.0
        )
        assert matrix is not None
        assert matrix.shape == (2, 2)
        assert np.all(np.linalg.eigvalsh(matrix) > 0)

    def test_design_matrix_undefined_off_path(self, sine_path, estimator_config):
        cfg = estimator_config.with_updates(interval="40:60")
        assert design_matrix(sine_path, cfg.interval, epanechnikov(), 1, h=1.0, x=50.0) is None

    def test_reproduces_linear_functions(self, estimator):
        curve = estimator.smooth(lambda x: 3.0 + 2.0 * x, h=1.0)
        truth = 3.0 + 2.0 * curve.grid
        defined = curve.defined_mask
        assert defined.all()
        assert curve.values[defined] == pytest.approx(truth[defined], rel=1e-8)

    def test_degree_zero_reproduces_constants(self, sine_path, sine_events, estimator_config):
        cfg = estimator_config.with_updates(degree=0)
        curve = LocalPolynomialEstimator(sine_path, sine_events, cfg, workers=1).smooth(
            lambda x: np.full_like(x, 7.5), h=0.8
        )
        assert curve.values[curve.defined_mask] == pytest.approx(7.5, rel=1e-10)

    def test_linear_in_events(self, sine_path, sine_events, estimator_config):
        first, second = _split(sine_events)
        both = estimate(sine_path, sine_events, estimator_config, 1.5)
        a = estimate(sine_path, first, estimator_config, 1.5)
        b = estimate(sine_path, second, estimator_config, 1.5)
        assert both.values == pytest.approx(a.values + b.values, abs=1e-9)

    def test_scale_n_divides_estimate(self, sine_path, sine_events, estimator_config):
        one = estimate(sine_path, sine_events, estimator_config, 1.5)
        two = estimate(sine_path, sine_events, estimator_config.with_updates(n=2), 1.5)
        assert two.values == pytest.approx(one.values / 2.0)

    def test_empty_events_give_zero_curve(self, sine_path, no_events, estimator_config):
        curve = estimate(sine_path, no_events, estimator_config, 1.0)
        assert curve.values[curve.defined_mask] == pytest.approx(0.0)

    def test_clip_floor(self, sine_path, no_events, estimator_config):
        cfg = estimator_config.with_updates(clip_floor=0.5)
        curve = estimate(sine_path, no_events, cfg, 1.0)
        assert np.all(curve.values[curve.defined_mask] == 0.5)

    def test_undefined_points_are_nan(self):
        curve = CurveEstimate.from_raw(
            np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.array([True, False])
        )
        assert np.isnan(curve.values[1])
        assert curve.masked_fraction == 0.5
        assert curve.filled(0.0).tolist() == [1.0, 0.0]

    def test_estimate_tracks_intensity(self, estimator, true_intensity):
        curve = estimator.estimate(2.0)
        # 真の q は 250 から 1000 程度、件数は 500 件前後
        error = estimator.relative_error(curve, true_intensity)
        assert error < 0.25

    def test_conditional_mean_of_polynomial(self, sine_path, estimator_config):
        curve = conditional_mean(sine_path, lambda x: 10.0 - 0.1 * x, estimator_config, 1.0)
        assert curve.values == pytest.approx(10.0 - 0.1 * curve.grid, rel=1e-8)

    def test_degree_two_reproduces_quadratics_on_ou_paths(self):
        cfg = EstimatorConfig(interval="-4:4", degree=2, eval_grid_size=81)
        rng = np.random.default_rng(23)
        times = np.arange(5001.0)
        for _ in range(20):
            values = ou_exact(times, 0.05, 1.0, 0.0, rng)
            path = SampledPath(times=times, values=values, horizon=times[-1])
            curve = conditional_mean(path, lambda x: 5.0 + 0.5 * x + 0.1 * x**2, cfg, 1.0)
            inner = curve.defined_mask & (np.abs(curve.grid) <= 3.0)
            assert inner.any()
            truth = 5.0 + 0.5 * curve.grid + 0.1 * curve.grid**2
            assert curve.values[inner] == pytest.approx(truth[inner], rel=1e-6)

    def test_bias_shrinks_like_h_squared(self, linear_path):
        cfg = EstimatorConfig(interval="0:10", degree=1, eval_grid_size=101)
        errors = []
        for h in (0.8, 0.4, 0.2):
            curve = conditional_mean(linear_path, lambda x: x**2, cfg, h)
            inner = (curve.grid >= 2.0) & (curve.grid <= 8.0)
            errors.append(np.max(np.abs(curve.values[inner] - curve.grid[inner] ** 2)))
        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(slopes >= 1.8)

    def test_cached_fit_is_reused(self, estimator):
        assert estimator.fit(1.0) is estimator.fit(1.0)


@pytest.mark.unit
class TestVarianceAndPenalty:
    """分散項と罰則"""

    def test_penalty_arithmetic(self):
        assert penalty(v_h=2.0, v_hmin=1.0, v_cross=0.5, alpha=1.5) == pytest.approx(1.0)

    def test_penalty_at_h_min(self):
        assert penalty(3.0, 3.0, 3.0, alpha=0.5) == pytest.approx(1.5)

    def test_cross_term_equals_variance_at_h_min(self, estimator):
        terms = estimator.variance_terms(0.8, 0.8)
        assert terms.v_cross == pytest.approx(terms.v_h)
        assert terms.v_h > 0

    def test_cauchy_schwarz(self, estimator):
        v_h = estimator.variance_terms(2.0, 0.8)
        v_min = estimator.variance_terms(0.8, 0.8).v_h
        assert v_h.v_cross <= np.sqrt(v_h.v_h * v_min) + 1e-12

    def test_variance_decreases_with_n(self, sine_path, sine_events, estimator_config):
        one = LocalPolynomialEstimator(sine_path, sine_events, estimator_config, workers=1)
        four = LocalPolynomialEstimator(
            sine_path, sine_events, estimator_config.with_updates(n=4), workers=1
        )
        assert four.variance_terms(1.0, 1.0).v_h == pytest.approx(one.variance_terms(1.0, 1.0).v_h / 16)


@pytest.mark.unit
class TestSelection:
    """罰則付き基準による選択"""

    @pytest.fixture
    def grid(self):
        return BandwidthGrid(values=np.arange(0.6, 4.01, 0.2))

    def test_criterion_at_h_min(self, estimator, grid):
        result = estimator.select(grid)
        h_min = grid.h_min
        assert result.criterion[h_min] == pytest.approx(result.alpha * result.v_hat[h_min])

    def test_h_hat_is_argmin(self, estimator, grid):
        result = estimator.select(grid)
        assert result.h_hat in result.criterion
        defined = [c for c in result.criterion.values() if c is not None]
        assert result.criterion[result.h_hat] == min(defined)
        assert result.n_events == estimator.n_events
        assert result.achieved_nu is not None and result.achieved_nu > 0

    def test_ties_go_to_smallest_bandwidth(self, sine_path, no_events, estimator_config, grid):
        result = LocalPolynomialEstimator(sine_path, no_events, estimator_config).select(
            grid, scale=100
        )
        assert result.h_hat == grid.h_min

    def test_table_rows(self, estimator, grid):
        rows = estimator.select(grid).table()
        assert [row["h"] for row in rows] == list(grid)
        assert set(rows[0]) == {"h", "criterion", "defined", "vhat", "penalty"}
        assert all(row["defined"] for row in rows)

    def test_alpha_scan_shares_grid(self, sine_path, sine_events, estimator_config, grid):
        scans = alpha_scan(sine_path, sine_events, estimator_config, grid, [0.5, 1.0, 1.5])
        assert sorted(scans) == [0.5, 1.0, 1.5]
        for alpha, result in scans.items():
            assert result.alpha == alpha
            assert result.v_hat == scans[1.0].v_hat

    def test_all_masked_raises(self, sine_path, sine_events, estimator_config):
        cfg = estimator_config.with_updates(interval="35:45")
        estimator = LocalPolynomialEstimator(sine_path, sine_events, cfg, workers=1)
        with pytest.raises(EstimationError):
            estimator.select(BandwidthGrid(values=[0.5, 1.0]), scale=100)

    def test_rejects_grid_below_lower_bound(self, estimator):
        # 下限は 28 * 0.75 / N_I (N_I は数百件)
        with pytest.raises(InputError):
            estimator.select(BandwidthGrid(values=[0.01, 0.5]))
        with pytest.raises(InputError):
            select_bandwidth(
                estimator.path, estimator.events, estimator.cfg,
                BandwidthGrid(values=[0.01, 0.5]), workers=1,
            )

    def test_rejects_grid_above_ceiling(self, estimator):
        with pytest.raises(InputError):
            estimator.select(BandwidthGrid(values=[0.6, 40.0]))

    def test_explicit_scale_lowers_the_bound(self, estimator):
        grid = BandwidthGrid(values=[0.6, 1.0])
        with pytest.raises(InputError):
            estimator.select(grid, scale=10)
        assert estimator.select(grid, scale=100).h_hat in (0.6, 1.0)

    def test_h_hat_must_have_defined_criterion(self, estimator, grid):
        result = estimator.select(grid)
        update = {**result.criterion, result.h_hat: None}
        with pytest.raises(ValueError):
            SelectionResult(**{**dict(result), "criterion": update})

    def test_rejects_non_positive_alpha(self, estimator, grid):
        with pytest.raises(InputError):
            estimator.select(grid, alpha=0.0)

    def test_functional_interface(self, sine_path, sine_events, estimator_config, estimator, grid):
        result = select_bandwidth(sine_path, sine_events, estimator_config, grid, workers=1)
        assert result.h_hat == estimator.select(grid).h_hat
        terms = variance_terms(sine_path, sine_events, estimator_config, 1.4, 0.6)
        assert terms.v_h == pytest.approx(estimator.variance_terms(1.4, 0.6).v_h)
