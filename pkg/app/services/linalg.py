import numpy as np


def cholesky_pivots(matrices: np.ndarray) -> np.ndarray:
    """対称行列の束の LDL^T ピボット (Cholesky 因子の対角の 2 乗)

    matrices の形状は (..., d, d)。分解できない行列のピボットは 0。
    """
    a = np.asarray(matrices, dtype=float)
    try:
        return np.diagonal(np.linalg.cholesky(a), axis1=-2, axis2=-1) ** 2
    except np.linalg.LinAlgError:
        pass
    # 束に正定値でないものが混ざると一括分解は失敗する
    d = a.shape[-1]
    flat = a.reshape(-1, d, d)
    pivots = np.zeros((flat.shape[0], d))
    for k, matrix in enumerate(flat):
        try:
            pivots[k] = np.diagonal(np.linalg.cholesky(matrix)) ** 2
        except np.linalg.LinAlgError:
            continue
    return pivots.reshape(a.shape[:-1])


def positive_definite_mask(matrices: np.ndarray, tolerance: float) -> np.ndarray:
    """ピボットがすべて tolerance * trace を超えるものを正定値とみなす"""
    a = np.asarray(matrices, dtype=float)
    trace = np.trace(a, axis1=-2, axis2=-1)
    pivots = cholesky_pivots(a)
    return (trace > 0) & np.all(pivots > tolerance * trace[..., None], axis=-1)


def solve_first_column(matrices: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """B^{-1} e_0 を正定値のものについてだけ解き、それ以外は 0"""
    a = np.asarray(matrices, dtype=float)
    d = a.shape[-1]
    out = np.zeros(a.shape[:-1])
    if np.any(defined):
        rhs = np.zeros((int(np.count_nonzero(defined)), d, 1))
        rhs[:, 0, 0] = 1.0
        out[defined] = np.linalg.solve(a[defined], rhs)[..., 0]
    return out
