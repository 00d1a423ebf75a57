from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri

ArrayLike = Union[float, np.ndarray]


def norm_cdf(z: ArrayLike) -> ArrayLike:
    """標準正規分布の分布関数 Phi (Cephes の有理近似)"""
    out = ndtr(np.asarray(z, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def norm_ppf(p: ArrayLike) -> ArrayLike:
    """Phi^{-1}。p = 0, 1 ではそれぞれ -inf, +inf"""
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("probability must lie in [0, 1]")
    out = ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def two_sided_pvalue(z: float) -> float:
    """2 (1 - Phi(|z|))"""
    # 上側確率は Phi(-|z|)
    return float(min(1.0, 2.0 * ndtr(-abs(float(z)))))


def two_sided_quantile(gamma: float) -> float:
    """Phi^{-1}(1 - gamma/2)"""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    return max(0.0, float(norm_ppf(1.0 - 0.5 * gamma)))
