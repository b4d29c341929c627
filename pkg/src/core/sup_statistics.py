"""
sup 型統計量と極限分布 sup_{t∈[0,1]} |b(t)|（b は標準ブラウン運動）
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import optimize, special

from ..config_analysis import DEFAULT_NUMERICS, NumericalConfig
from ..exceptions import DomainError
from .martingale_transform import ProcessPath

logger = logging.getLogger(__name__)

STATISTIC_NAMES = {"v_hat": "V_hat", "w": "W", "w_tilde": "W_tilde"}
REPORT_KEYS = ("statistic", "value", "level", "critical_value", "p_value", "reject",
               "family", "n", "bandwidth", "seed")


@dataclass
class TestReport:
    """検定結果（key=value のテキストとして出力）"""
    __test__ = False

    statistic_name: str
    value: float
    level: float
    critical_value: Optional[float]
    p_value: Optional[float]
    reject: Optional[bool]
    family: str
    n: int
    bandwidth: Optional[float] = None
    seed: Optional[int] = None
    critical_source: str = "limiting law"
    extras: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, object]:
        return {
            "statistic": self.statistic_name,
            "value": self.value,
            "level": self.level,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "family": self.family,
            "n": self.n,
            "bandwidth": self.bandwidth,
            "seed": self.seed,
        }

    def to_text(self) -> str:
        lines = [f"{key}={_format_value(val)}" for key, val in self.as_dict().items()]
        lines.append(f"critical_source={self.critical_source}")
        for key in sorted(self.extras):
            lines.append(f"{key}={self.extras[key]}")
        return "\n".join(lines) + "\n"


def _format_value(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


# ――― sup 統計量 ―――
def sup_statistic(path: ProcessPath, intermediate_points: int = DEFAULT_NUMERICS.sup_intermediate_points) -> float:
    """
    sup_x |path(x)|

    w_n 型は順序統計量での値の最大。v̂_n 型は値・左極限と、跳躍間の F 目盛りで等間隔な
    中間点も見る。
    """
    if len(path.jump_points) == 0:
        raise DomainError("path has no jump points")
    best = float(np.max(np.abs(path.levels)))
    if not path.has_drift:
        return best

    best = max(best, float(np.max(np.abs(path.left_levels))))
    if intermediate_points > 0 and len(path.jump_points) > 1:
        t = path.drift.cdf(path.jump_points)
        frac = np.arange(1, intermediate_points + 1) / (intermediate_points + 1)
        tt = t[:-1, None] + (t[1:] - t[:-1])[:, None] * frac[None, :]
        between = path.scale * (path.counts[:-1, None] / path.n - tt)
        best = max(best, float(np.max(np.abs(between))))
    return best


# ――― 極限分布 ―――
def _cdf_small(a: float, tol: float) -> float:
    """小さい a 用のテータ級数 (4/π) Σ (-1)^k/(2k+1) exp(-π²(2k+1)²/(8a²))"""
    total = 0.0
    k = 0
    while True:
        j = 2 * k + 1
        term = math.exp(-(math.pi * j) ** 2 / (8.0 * a * a)) / j
        total += term if k % 2 == 0 else -term
        if term < tol:
            break
        k += 1
    return min(max(4.0 / math.pi * total, 0.0), 1.0)


def _sf_reflection(a: float, tol: float) -> float:
    """鏡像原理の交代級数による P(sup|b| > a)"""
    total = 2.0 * special.ndtr(-a)
    k = 1
    while True:
        term = 2.0 * (special.ndtr(-(2 * k - 1) * a) - special.ndtr(-(2 * k + 1) * a))
        total += term if k % 2 == 1 else -term
        if abs(term) < tol:
            break
        k += 1
    return min(max(float(total), 0.0), 1.0)


def _check_level_arg(a: float) -> float:
    a = float(a)
    if math.isnan(a) or a < 0:
        raise DomainError(f"argument of the sup|b| law must be nonnegative (got {a!r})")
    return a


def _sf_scalar(a: float, tol: float) -> float:
    a = _check_level_arg(a)
    if a == 0.0:
        return 1.0
    if math.isinf(a):
        return 0.0
    if a < 1.0:
        return 1.0 - _cdf_small(a, tol)
    return _sf_reflection(a, tol)


def _cdf_scalar(a: float, tol: float) -> float:
    a = _check_level_arg(a)
    if a == 0.0:
        return 0.0
    if a < 1.0:
        return _cdf_small(a, tol)
    return 1.0 - _sf_scalar(a, tol)


def sup_abs_bm_cdf(a, numerics: NumericalConfig = DEFAULT_NUMERICS):
    """P(sup_{t∈[0,1]} |b(t)| ≤ a)"""
    if np.ndim(a):
        return np.array([_cdf_scalar(v, numerics.series_tol) for v in np.ravel(a)]).reshape(np.shape(a))
    return _cdf_scalar(a, numerics.series_tol)


def sup_abs_bm_sf(a, numerics: NumericalConfig = DEFAULT_NUMERICS):
    """P(sup_{t∈[0,1]} |b(t)| > a)"""
    if np.ndim(a):
        return np.array([_sf_scalar(v, numerics.series_tol) for v in np.ravel(a)]).reshape(np.shape(a))
    return _sf_scalar(a, numerics.series_tol)


def critical_value(level: float, numerics: NumericalConfig = DEFAULT_NUMERICS) -> float:
    """sup_abs_bm_cdf(a) = 1 - level となる a（二分法）"""
    level = float(level)
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must lie in (0, 1) (got {level!r})")
    lo, hi = 1e-3, 10.0
    while _sf_scalar(hi, numerics.series_tol) > level:
        hi *= 2.0
    if _sf_scalar(lo, numerics.series_tol) < level:
        raise DomainError(f"level {level!r} is too close to 1")
    return float(optimize.bisect(lambda a: _sf_scalar(a, numerics.series_tol) - level, lo, hi,
                                 xtol=numerics.bisection_xtol, maxiter=200))


def p_value(stat: float, numerics: NumericalConfig = DEFAULT_NUMERICS) -> float:
    """1 - sup_abs_bm_cdf(stat)"""
    return _sf_scalar(stat, numerics.series_tol)


def build_report(path: ProcessPath, level: float, bandwidth: Optional[float] = None,
                 seed: Optional[int] = None, empirical_critical_value: Optional[float] = None,
                 numerics: NumericalConfig = DEFAULT_NUMERICS) -> TestReport:
    """
    経路から TestReport を作る

    W / W_tilde は極限法則の臨界値と p 値。V_hat の極限は推定量に依存するので
    シミュレーションで得た経験臨界値だけを使い、p 値は出さない。
    """
    name = STATISTIC_NAMES.get(path.name, path.name)
    value = sup_statistic(path)

    if name == "V_hat":
        if empirical_critical_value is None:
            cv, reject = None, None
        else:
            cv = float(empirical_critical_value)
            reject = value > cv
        report = TestReport(statistic_name=name, value=value, level=level, critical_value=cv, p_value=None,
                            reject=reject, family=path.family_spec, n=path.n, bandwidth=bandwidth, seed=seed,
                            critical_source="empirical null distribution")
        report.extras["note"] = "limiting law of V_hat depends on the regression estimator; no p-value"
        return report

    cv = critical_value(level, numerics)
    pv = p_value(value, numerics)
    return TestReport(statistic_name=name, value=value, level=level, critical_value=cv, p_value=pv,
                      reject=value > cv, family=path.family_spec, n=path.n, bandwidth=bandwidth, seed=seed)
