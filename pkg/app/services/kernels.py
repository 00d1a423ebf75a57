from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import simpson

from ..config import settings
from ..exceptions import EstimationError, InputError
from ..models.kernel import Kernel, MonomialBasis
from .linalg import cholesky_pivots


def _nodes(nodes: Optional[int]) -> int:
    """Simpson 則の節点数 (奇数に切り上げ)"""
    count = int(nodes or settings.quadrature_nodes)
    count = max(count, 3)
    return count if count % 2 == 1 else count + 1


def _epanechnikov_func(u: np.ndarray) -> np.ndarray:
    return 0.75 * np.maximum(0.0, 1.0 - u * u)


def epanechnikov() -> Kernel:
    """K(u) = 0.75 (1 - u^2) 1_{|u| <= 1}, Delta = 1/2"""
    return Kernel(
        name="epanechnikov",
        func=_epanechnikov_func,
        support_radius=1.0,
        norm_l1=1.0,
        norm_l2_sq=0.6,
        norm_inf=0.75,
        minorant_delta=0.5,
        minorant_kmin=0.5625,
    )


def make_kernel(
    name: str,
    func: Callable[[np.ndarray], np.ndarray],
    support_radius: float = 1.0,
    minorant_delta: float = 0.5,
    nodes: Optional[int] = None,
) -> Kernel:
    """任意のカーネル関数からノルムを数値積分で求めて Kernel を作る"""
    u = np.linspace(-support_radius, support_radius, _nodes(nodes))
    k = np.asarray(func(u), dtype=float)
    inner = np.abs(u) <= minorant_delta
    return Kernel(
        name=name,
        func=func,
        support_radius=support_radius,
        norm_l1=float(simpson(np.abs(k), x=u)),
        norm_l2_sq=float(simpson(k * k, x=u)),
        norm_inf=float(np.max(np.abs(k))),
        minorant_delta=minorant_delta,
        minorant_kmin=float(np.min(k[inner])),
    )


KERNELS: Dict[str, Callable[[], Kernel]] = {"epanechnikov": epanechnikov}


def register_kernel(name: str, factory: Callable[[], Kernel]) -> None:
    KERNELS[name.lower()] = factory


def get_kernel(name: str) -> Kernel:
    factory = KERNELS.get(name.lower())
    if factory is None:
        raise InputError(f"unknown kernel {name!r}", known=sorted(KERNELS))
    return factory()


def kernel_mass(kernel: Kernel, nodes: Optional[int] = None) -> float:
    """int K(u) du"""
    r = kernel.support_radius
    u = np.linspace(-r, r, _nodes(nodes))
    return float(simpson(kernel(u), x=u))


def moment_matrix(kernel: Kernel, degree: int, nodes: Optional[int] = None) -> np.ndarray:
    """M = int U(z) U(z)^T K(z) dz (複合 Simpson 則)"""
    basis = MonomialBasis(degree=degree)
    r = kernel.support_radius
    z = np.linspace(-r, r, _nodes(nodes))
    uz = basis(z)
    integrand = kernel(z)[:, None, None] * uz[:, :, None] * uz[:, None, :]
    matrix = simpson(integrand, x=z, axis=0)
    matrix = 0.5 * (matrix + matrix.T)

    trace = float(np.trace(matrix))
    pivots = cholesky_pivots(matrix)
    if trace <= 0 or np.any(pivots <= 1e-12 * trace):
        raise EstimationError(
            "kernel moment matrix is numerically singular",
            kernel=kernel.name,
            degree=degree,
        )
    return matrix


def asymptotic_weight(
    kernel: Kernel, degree: int, nodes: Optional[int] = None
) -> Callable[[np.ndarray], np.ndarray]:
    """w(u) = U(0)^T M^{-1} U(u)"""
    basis = MonomialBasis(degree=degree)
    coef = np.linalg.solve(moment_matrix(kernel, degree, nodes), basis.zero())

    def weight(u) -> np.ndarray:
        return basis(u) @ coef

    return weight


@lru_cache(maxsize=32)
def test_constant(
    kernel: Kernel, degree: int, nodes: Optional[int] = None
) -> Tuple[float, float]:
    """(inner, A(K)) を入れ子の Simpson 則で計算
    (kernel, degree, nodes) ごとにキャッシュする。

    inner = int_{-r}^{r} ( int w(u) w(u+p) K(u) K(u+p) du )^2 dp。
    ずれ p は台の半径 r まで (Epanechnikov, m <= 1 で 413113/985600)。
    内側の積分は両因子の台が重なる区間に制限するので被積分関数は滑らか。
    """
    count = _nodes(nodes)
    weight = asymptotic_weight(kernel, degree, nodes)
    r = kernel.support_radius

    p = np.linspace(-r, r, count)
    s = np.linspace(0.0, 1.0, count)
    overlap = np.empty(count)

    for start in range(0, count, 256):
        pc = p[start:start + 256]
        lo = np.maximum(-r, -r - pc)
        hi = np.minimum(r, r - pc)
        width = np.maximum(hi - lo, 0.0)
        u = lo[:, None] + width[:, None] * s[None, :]
        v = u + pc[:, None]
        integrand = weight(u) * weight(v) * kernel(u) * kernel(v)
        overlap[start:start + 256] = width * simpson(integrand, x=s, axis=1)

    inner = float(simpson(overlap ** 2, x=p))
    a_of_k = 2.0 * kernel_mass(kernel, nodes) ** 2 * inner
    return inner, a_of_k


def kernel_info(kernel: Kernel, degree: int, nodes: Optional[int] = None) -> Dict[str, Any]:
    """CLI / API 用のカーネル定数まとめ"""
    matrix = moment_matrix(kernel, degree, nodes)
    inner, a_of_k = test_constant(kernel, degree, nodes)
    weight = asymptotic_weight(kernel, degree, nodes)
    u = np.linspace(-kernel.support_radius, kernel.support_radius, 101)
    w = weight(u)
    return {
        "kernel": kernel.name,
        "degree": degree,
        "support_radius": kernel.support_radius,
        "norm_l1": kernel.norm_l1,
        "norm_l2_sq": kernel.norm_l2_sq,
        "norm_inf": kernel.norm_inf,
        "minorant_delta": kernel.minorant_delta,
        "minorant_kmin": kernel.minorant_kmin,
        "moment_matrix": matrix.tolist(),
        "weight_constant": bool(np.allclose(w, w[0], atol=1e-10)),
        "inner": inner,
        "a_of_k": a_of_k,
    }
