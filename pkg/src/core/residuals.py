"""
ノンパラメトリック回帰の残差
箱型カーネルの Nadaraya-Watson 推定 → 残差 ê_i → 推定経験過程 v̂_n と尺度推定 σ̂
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateSampleError, DomainError, EmptyWindowError
from .dist_families import ErrorFamily
from .martingale_transform import ProcessPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Sample:
    """共変量・応答のペア (X_i, Y_i)"""
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise DomainError(f"covariates and responses differ in length ({x.size} vs {y.size})")
        if x.size == 0:
            raise DomainError("sample is empty")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("sample values must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """残差 ê_i = Y_i - m̂_n(X_i)"""
    residuals: np.ndarray
    fitted: np.ndarray
    bandwidth: float

    @property
    def n(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def order_statistics(self) -> np.ndarray:
        return np.sort(self.residuals)


def _window_mask(sample: Sample, a: float, x: np.ndarray) -> np.ndarray:
    # 窓 [x-a, x+a] は両端を含む
    return (sample.x[None, :] >= x[:, None] - a) & (sample.x[None, :] <= x[:, None] + a)


def nw_fit(sample: Sample, a: float, x):
    """箱型 Nadaraya-Watson 推定 m̂_n(x)（x は配列可）"""
    a = float(a)
    if not (math.isfinite(a) and a > 0):
        raise DomainError(f"bandwidth must be positive (got {a!r})")
    xq = np.atleast_1d(np.asarray(x, dtype=float))
    mask = _window_mask(sample, a, xq)
    counts = mask.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyWindowError(float(xq[empty[0]]), a)
    fitted = (mask @ sample.y) / counts
    return fitted if np.ndim(x) else float(fitted[0])


def compute_residuals(sample: Sample, a: float) -> ResidualSet:
    """各 X_i での当てはめ値と残差（窓は必ず X_i 自身を含む）"""
    fitted = nw_fit(sample, a, sample.x)
    residuals = sample.y - fitted
    logger.debug(f"residuals computed: n={sample.n} a={a}")
    return ResidualSet(residuals=residuals, fitted=fitted, bandwidth=float(a))


def estimated_empirical_process(residuals, family: ErrorFamily) -> ProcessPath:
    """v̂_n(x) = √n [F̂_n(x) - F(x)]"""
    e = np.asarray(getattr(residuals, "residuals", residuals), dtype=float).ravel()
    if e.size == 0:
        raise DomainError("residual set is empty")
    n = e.shape[0]
    u, c = np.unique(e, return_counts=True)
    counts = np.cumsum(c)
    root_n = math.sqrt(n)
    big_f = family.cdf(u)
    levels = root_n * (counts / n - big_f)
    left = root_n * ((counts - c) / n - big_f)
    return ProcessPath(name="v_hat", jump_points=u, levels=levels, left_levels=left, scale=root_n, n=n,
                       family_spec=family.spec, drift=family, counts=counts)


def scale_estimate(residuals, family: ErrorFamily) -> float:
    """MAD 型の尺度推定 median|ê - median(ê)| / F⁻¹(0.75)（対称ファミリー用）"""
    e = np.asarray(getattr(residuals, "residuals", residuals), dtype=float).ravel()
    if e.size < 2:
        raise DomainError("scale estimate needs at least two residuals")
    mad = float(np.median(np.abs(e - np.median(e))))
    if mad == 0.0:
        raise DegenerateSampleError("median absolute deviation of the residuals is zero")
    return mad / float(family.quantile(0.75))

