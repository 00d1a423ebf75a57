import numpy as np
import pytest
from scipy.stats import norm

from app.services.normal import norm_cdf, norm_ppf, two_sided_pvalue, two_sided_quantile


@pytest.mark.unit
class TestNormal:
    """正規分布の Phi, Phi^{-1}"""

    def test_cdf_matches_scipy(self):
        z = np.linspace(-8, 8, 161)
        assert norm_cdf(z) == pytest.approx(norm.cdf(z), rel=1e-12, abs=1e-300)

    def test_ppf_matches_scipy(self):
        p = np.concatenate([[1e-12, 1e-6], np.linspace(0.01, 0.99, 99), [1 - 1e-9]])
        assert norm_ppf(p) == pytest.approx(norm.ppf(p), rel=1e-10)

    def test_known_quantile(self):
        assert norm_ppf(0.975) == pytest.approx(1.959964, abs=1e-6)
        assert norm_ppf(0.5) == 0.0

    def test_ppf_endpoints(self):
        assert norm_ppf(0.0) == -np.inf
        assert norm_ppf(1.0) == np.inf

    def test_ppf_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            norm_ppf(1.5)
        with pytest.raises(ValueError):
            norm_ppf(np.nan)

    def test_round_trip(self):
        p = np.array([0.001, 0.2, 0.5, 0.8, 0.999])
        assert norm_cdf(norm_ppf(p)) == pytest.approx(p, rel=1e-12)


@pytest.mark.unit
class TestTwoSided:
    """両側検定の p 値と臨界値"""

    def test_pvalue_at_critical_value(self):
        assert two_sided_pvalue(two_sided_quantile(0.05)) == pytest.approx(0.05, rel=1e-10)

    def test_pvalue_is_symmetric_and_bounded(self):
        assert two_sided_pvalue(-1.3) == two_sided_pvalue(1.3)
        assert two_sided_pvalue(0.0) == 1.0

    def test_quantile_at_level_one(self):
        assert two_sided_quantile(1.0) == 0.0

    def test_quantile_rejects_zero(self):
        with pytest.raises(ValueError):
            two_sided_quantile(0.0)
