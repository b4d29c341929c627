"""
仮説誤差分布ファミリー
密度・分布関数・分位点・位置スコア ψ_f = -f'/f と、Γ_{F(x)} に入る裾の汎関数を提供する

対応ファミリー: normal / logistic / laplace(α) / student_t(k)  (t:1 = Cauchy)
パラメータは指定どおりに使い、標準化は呼び出し側で行う
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, special

from ..config_analysis import DEFAULT_NUMERICS
from ..exceptions import DomainError, ParseError, TailOverflowError

KINDS = ("normal", "logistic", "laplace", "student_t")

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class FamilyValues:
    """family_eval の結果"""
    f: float
    F: float
    psi: float


@dataclass(frozen=True)
class TailFunctionals:
    """x より上の裾の汎関数"""
    x: float
    survival: float
    density_at: float
    sigma2: float
    cond_mean: float
    cond_var: float


@dataclass(frozen=True)
class ErrorFamily:
    """仮説誤差分布（不変オブジェクト）"""
    kind: str
    alpha: Optional[float] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown family kind {self.kind!r}")
        if self.kind == "laplace":
            if self.alpha is None or not math.isfinite(self.alpha) or self.alpha <= 0:
                raise DomainError(f"laplace rate must be positive and finite (got {self.alpha!r})")
        if self.kind == "student_t":
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise DomainError(f"student_t degrees of freedom must be an integer >= 1 (got {self.k!r})")

    # ――― コンストラクタ ―――
    @classmethod
    def normal(cls) -> "ErrorFamily":
        return cls("normal")

    @classmethod
    def logistic(cls) -> "ErrorFamily":
        return cls("logistic")

    @classmethod
    def laplace(cls, alpha: float) -> "ErrorFamily":
        return cls("laplace", alpha=float(alpha))

    @classmethod
    def student_t(cls, k: int) -> "ErrorFamily":
        return cls("student_t", k=int(k))

    # ――― 表示 ―――
    @property
    def spec(self) -> str:
        """parse_family で復元できる正規形の指定文字列"""
        if self.kind == "laplace":
            return f"laplace:{self.alpha!r}"
        if self.kind == "student_t":
            return f"t:{self.k}"
        return self.kind

    def __str__(self) -> str:
        return self.spec

    @property
    def kink(self) -> Optional[float]:
        """スコアが不連続になる点（Laplace の 0）"""
        return 0.0 if self.kind == "laplace" else None

    @property
    def fisher_information(self) -> float:
        """∫ψ_f² dF"""
        if self.kind == "normal":
            return 1.0
        if self.kind == "logistic":
            return 1.0 / 3.0
        if self.kind == "laplace":
            return self.alpha ** 2
        return (self.k + 1.0) / (self.k + 3.0)

    # ――― 分布 ―――
    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if self.kind == "logistic":
            return special.expit(x) * special.expit(-x)
        if self.kind == "laplace":
            return 0.5 * self.alpha * np.exp(-self.alpha * np.abs(x))
        k = float(self.k)
        return np.exp(_t_log_norm(self.k) - 0.5 * (k + 1.0) * np.log1p(x * x / k))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return special.ndtr(x)
        if self.kind == "logistic":
            return special.expit(x)
        if self.kind == "laplace":
            half = 0.5 * np.exp(-self.alpha * np.abs(x))
            return np.where(x < 0, half, 1.0 - half)
        return special.stdtr(self.k, x)

    def sf(self, x):
        """1 - F(x) を差を取らずに評価"""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return special.ndtr(-x)
        if self.kind == "logistic":
            return special.expit(-x)
        if self.kind == "laplace":
            half = 0.5 * np.exp(-self.alpha * np.abs(x))
            return np.where(x < 0, 1.0 - half, half)
        return special.stdtr(self.k, -x)

    def quantile(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "normal":
            return special.ndtri(t)
        if self.kind == "logistic":
            return special.logit(t)
        if self.kind == "laplace":
            with np.errstate(divide="ignore"):
                lower = np.log(2.0 * t) / self.alpha
                upper = -np.log(2.0 * (1.0 - t)) / self.alpha
            return np.where(t < 0.5, lower, upper)
        x = special.stdtrit(self.k, t)
        # stdtrit の許容誤差は x 側で効くので、裾側の分布関数で Newton 補正する
        for _ in range(2):
            with np.errstate(invalid="ignore"):
                resid = np.where(t < 0.5, self.cdf(x) - t, (1.0 - t) - self.sf(x))
                x = np.where(np.isfinite(x), x - resid / self.pdf(x), x)
        return x

    def score(self, x, right_limit: bool = False):
        """ψ_f(x)。right_limit=True では Laplace の 0 で右極限 α を返す"""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return x.copy()
        if self.kind == "logistic":
            return np.tanh(0.5 * x)
        if self.kind == "laplace":
            psi = self.alpha * np.sign(x)
            if right_limit:
                psi = np.where(x == 0.0, self.alpha, psi)
            return psi
        k = float(self.k)
        with np.errstate(invalid="ignore"):
            psi = (k + 1.0) * x / (k + x * x)
        return np.where(np.isinf(x), 0.0, psi)

    def scale_score(self, x, right_limit: bool = False):
        """φ_f(x) = 1 + x ψ_f(x)"""
        x = np.asarray(x, dtype=float)
        return 1.0 + x * self.score(x, right_limit=right_limit)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(size)
        if self.kind == "logistic":
            return rng.logistic(size=size)
        if self.kind == "laplace":
            return rng.laplace(scale=1.0 / self.alpha, size=size)
        return rng.standard_t(self.k, size=size)

    # ――― 裾の汎関数 ―――
    def tail_sigma2(self, x):
        """σ_f²(x) = ∫_x^∞ ψ_f² dF（配列対応）"""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            s = self.sf(x)
            # x·f + S を Mills 比で書くと裾でも相対精度が保たれる
            return s * (x * normal_mills_ratio(x) + 1.0)
        if self.kind == "logistic":
            s = special.expit(-x)
            big_f = special.expit(x)
            return s * (1.0 - 2.0 * big_f + 4.0 * big_f * big_f) / 3.0
        if self.kind == "laplace":
            return self.alpha ** 2 * self.sf(x)
        return _vectorized(lambda v: _symmetric_tail(self, v, 0, even=True), x)

    def tail_score_moments(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """(∫_x^∞ yψ_f² dF, ∫_x^∞ y²ψ_f² dF)。スケール拡張の Γ_{t,σ} 用"""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            f = self.pdf(x)
            a = (x * x + 2.0) * f
            b = (x ** 3 + 3.0 * x) * f + 3.0 * self.sf(x)
            return a, b
        if self.kind == "laplace":
            al = self.alpha
            ax = np.abs(x)
            e = 0.5 * np.exp(-al * ax)
            first = e * (ax + 1.0 / al)
            upper = e * (ax * ax + 2.0 * ax / al + 2.0 / al ** 2)
            second = np.where(x >= 0, upper, 2.0 / al ** 2 - upper)
            return al ** 2 * first, al ** 2 * second
        a = _vectorized(lambda v: _symmetric_tail(self, v, 1, even=False), x)
        b = _vectorized(lambda v: _symmetric_tail(self, v, 2, even=True), x)
        return a, b

    def total_score_moment(self, power: int) -> float:
        """∫ y^p ψ_f² dF（全域）。対称ファミリーなので奇数次は 0"""
        if power % 2 == 1:
            return 0.0
        if power == 0:
            return self.fisher_information
        if power != 2:
            raise DomainError(f"score moment of order {power} is not provided")
        if self.kind == "normal":
            return 3.0
        if self.kind == "laplace":
            return 2.0
        return _full_moment(self, 2)


# ――― 補助関数 ―――
def normal_mills_ratio(x):
    """μ(x) = φ(x)/(1-Φ(x)) を erfcx で安定に評価"""
    x = np.asarray(x, dtype=float)
    return _SQRT_2_OVER_PI / special.erfcx(x / _SQRT2)


@lru_cache(maxsize=None)
def _t_log_norm(k: int) -> float:
    return (special.gammaln(0.5 * (k + 1.0)) - special.gammaln(0.5 * k)
            - 0.5 * math.log(k * math.pi))


def _t_integrand(k: int, power: int):
    c = _t_log_norm(k)
    kk = float(k)

    def g(y: float) -> float:
        psi = (kk + 1.0) * y / (kk + y * y)
        dens = math.exp(c - 0.5 * (kk + 1.0) * math.log1p(y * y / kk))
        return (y ** power) * psi * psi * dens

    return g


def _logistic_integrand(power: int):
    def g(y: float) -> float:
        psi = math.tanh(0.5 * y)
        e = math.exp(-abs(y))
        dens = e / (1.0 + e) ** 2
        return (y ** power) * psi * psi * dens

    return g


def _integrand(family: ErrorFamily, power: int):
    if family.kind == "student_t":
        return _t_integrand(family.k, power)
    if family.kind == "logistic":
        return _logistic_integrand(power)
    raise DomainError(f"no quadrature integrand for family {family.spec}")


def _upper_tail_quad(family: ErrorFamily, a: float, power: int) -> float:
    """∫_a^∞ y^p ψ² dF (a ≥ 0)。絶対許容誤差は裾の質量でスケール"""
    rtol = DEFAULT_NUMERICS.tail_rtol
    value, _ = integrate.quad(_integrand(family, power), a, np.inf,
                              epsabs=rtol * float(family.sf(a)), epsrel=rtol, limit=200)
    return value


@lru_cache(maxsize=None)
def _full_moment(family: ErrorFamily, power: int) -> float:
    if power == 0:
        return family.fisher_information
    return 2.0 * _upper_tail_quad(family, 0.0, power)


def _symmetric_tail(family: ErrorFamily, x: float, power: int, even: bool) -> float:
    """対称ファミリーの裾積分。x < 0 では |x| の上側から組み立てる"""
    if x >= 0:
        return _upper_tail_quad(family, x, power)
    upper = _upper_tail_quad(family, -x, power)
    if even:
        return _full_moment(family, power) - upper
    return upper


def _vectorized(fn, x: np.ndarray) -> np.ndarray:
    flat = np.array([fn(float(v)) for v in x.ravel()])
    return flat.reshape(x.shape)


def _check_finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite (got {x!r})")
    return x


# ――― 公開操作 ―――
def family_eval(family: ErrorFamily, x: float) -> FamilyValues:
    """f(x), F(x), ψ_f(x)。Laplace の 0 では ψ = 0"""
    x = _check_finite(x)
    return FamilyValues(f=float(family.pdf(x)), F=float(family.cdf(x)), psi=float(family.score(x)))


def quantile(family: ErrorFamily, t: float) -> float:
    t = float(t)
    if not (0.0 < t < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1) (got {t!r})")
    return float(family.quantile(t))


def tail_functionals(family: ErrorFamily, x: float) -> TailFunctionals:
    """x より上の条件付きスコア平均・分散など"""
    x = _check_finite(x)
    s = float(family.sf(x))
    if s <= 1.0 - DEFAULT_NUMERICS.t_max:
        raise TailOverflowError(x)
    f = float(family.pdf(x))
    sigma2 = float(family.tail_sigma2(x))

    if family.kind == "normal":
        cond_mean = float(normal_mills_ratio(x))
        cond_var = max(x * cond_mean + 1.0 - cond_mean ** 2, 0.0)
    elif family.kind == "logistic":
        cond_mean = float(family.cdf(x))
        cond_var = s * s / 3.0
    elif family.kind == "laplace":
        al = family.alpha
        if x >= 0:
            cond_mean, cond_var = al, 0.0
        else:
            big_f = float(family.cdf(x))
            cond_mean = al * big_f / (1.0 - big_f)
            cond_var = al * al - cond_mean ** 2
    else:
        cond_mean = f / s
        cond_var = max(sigma2 / s - cond_mean ** 2, 0.0)

    return TailFunctionals(x=x, survival=s, density_at=f, sigma2=sigma2,
                           cond_mean=cond_mean, cond_var=cond_var)


def parse_family(spec: str) -> ErrorFamily:
    """`normal` | `logistic` | `laplace:<α>` | `t:<k>`"""
    text = (spec or "").strip()
    name, sep, arg = text.partition(":")
    name = name.strip().lower()
    arg = arg.strip()

    if name in ("normal", "logistic"):
        if sep:
            raise ParseError(f"family {name!r} takes no parameter: {spec!r}")
        return ErrorFamily(name)

    if name == "laplace":
        try:
            alpha = float(arg)
        except ValueError:
            raise ParseError(f"laplace rate is not a number: {spec!r}")
        if not math.isfinite(alpha) or alpha <= 0:
            raise ParseError(f"laplace rate must be positive: {spec!r}")
        return ErrorFamily.laplace(alpha)

    if name == "t":
        try:
            k = int(arg)
        except ValueError:
            raise ParseError(f"t degrees of freedom must be an integer: {spec!r}")
        if k < 1:
            raise ParseError(f"t degrees of freedom must be >= 1: {spec!r}")
        return ErrorFamily.student_t(k)

    raise ParseError(f"unknown family spec {spec!r} (expected normal, logistic, laplace:<alpha>, t:<k>)")
