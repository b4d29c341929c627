"""
残差経験過程のマルチンゲール変換

Γ_t（不完全情報行列）の構築と（退化時は擬似）逆行列の適用、累積カーネル
𝒢(x) = ∫_{y≤x} Γ_{F(y)}⁻¹ h(y) dF(y) の求積、和公式による w_n / w̃_n の計算を行う。

求積は全て時間スケール t = F(y) で行う。Laplace では 𝒢 自体が y ↑ 0 で対数発散するため、
累積表はファミリーごとの「射影基底」B の座標 B𝒢 で保持し、Γ_{F(0)} が潰す方向の座標は
0 以上の点で退役（inf）させる。縮約は重み 0 の座標を読まないので inf に触れない。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from ..config_analysis import DEFAULT_NUMERICS, NumericalConfig
from ..exceptions import DomainError, IllConditionedError, TailOverflowError
from .dist_families import ErrorFamily, normal_mills_ratio

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = leggauss(16)


# ――― 型 ―――
@dataclass(frozen=True, eq=False)
class ScoreVec:
    """拡張スコア h(x) = (1, ψ_f(x)) または h_σ(x) = (1, ψ_f/σ, φ_f/σ)"""
    components: np.ndarray

    def __post_init__(self):
        if self.components[0] != 1.0:
            raise DomainError("first score component must be exactly 1")

    @property
    def dim(self) -> int:
        return int(self.components.shape[0])


@dataclass(frozen=True, eq=False)
class GammaMatrix:
    """Γ_t = ∫_t^1 γγᵀ ds"""
    t: float
    entries: np.ndarray
    rank_deficient: bool = False
    alpha: Optional[float] = None
    sigma: Optional[float] = None

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.entries))


@dataclass(frozen=True, eq=False)
class CumulantTable:
    """
    点列上の累積カーネル。values は射影基底の座標 B𝒢(x_j)

    滑らかなファミリーの位置問題では B = I なので values = 𝒢 そのもの。
    retired 座標は kink 以上の点で inf（発散）を持つ。
    """
    points: np.ndarray
    values: np.ndarray
    basis: np.ndarray
    family: ErrorFamily
    sigma: Optional[float] = None
    retired: Optional[int] = None
    kink: Optional[float] = None

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def kernel(self) -> np.ndarray:
        """標準座標の 𝒢。発散する行（Laplace の 0 以上）は nan"""
        finite = np.all(np.isfinite(self.values), axis=1)
        out = np.full(self.values.shape, np.nan)
        if finite.any():
            out[finite] = np.linalg.solve(self.basis, self.values[finite].T).T
        return out

    def weights(self, at: np.ndarray, scores: np.ndarray) -> np.ndarray:
        """h(e) を基底で表した係数 λ（h = Bᵀλ）。kink 以上では退役座標を 0 に固定"""
        lam = np.linalg.solve(self.basis.T, np.atleast_2d(scores).T).T
        if self.retired is not None:
            lam[np.asarray(at) >= self.kink, self.retired] = 0.0
        return lam

    def contract(self, weights: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
        values = self.values if rows is None else self.values[rows]
        return _safe_contract(weights, values)


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """
    càdlàg 経路。jump_points ごとに値 levels と左極限 left_levels を持つ

    drift が与えられた経路（v̂_n 型）は scale·(N(x)/n - F(x)) を厳密に評価する。
    w_n 型は跳躍点間を直前の値で保持する階段表現（任意点の厳密値は evaluate_transform）。
    """
    name: str
    jump_points: np.ndarray
    levels: np.ndarray
    left_levels: np.ndarray
    scale: float
    n: int
    family_spec: str = ""
    drift: Optional[ErrorFamily] = None
    counts: Optional[np.ndarray] = None

    @property
    def has_drift(self) -> bool:
        return self.drift is not None and self.counts is not None

    @property
    def values(self) -> np.ndarray:
        return self.levels

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.jump_points, x, side="right")
        prev = np.maximum(k - 1, 0)
        if self.has_drift:
            cnt = np.where(k > 0, self.counts[prev], 0)
            return self.scale * (cnt / self.n - self.drift.cdf(x))
        return np.where(k > 0, self.levels[prev], 0.0)

    def left_limit(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.jump_points, x, side="left")
        prev = np.maximum(k - 1, 0)
        if self.has_drift:
            cnt = np.where(k > 0, self.counts[prev], 0)
            return self.scale * (cnt / self.n - self.drift.cdf(x))
        at = np.minimum(k, len(self.jump_points) - 1)
        on_jump = (k < len(self.jump_points)) & (self.jump_points[at] == x)
        step = np.where(k > 0, self.levels[prev], 0.0)
        return np.where(on_jump, self.left_levels[at], step)

    def to_frame(self) -> pd.DataFrame:
        """(x, value) の2列表。跳躍点ごとに左極限の行、続いて跳躍後の値の行"""
        return pd.DataFrame({
            "x": np.repeat(self.jump_points, 2),
            "value": np.column_stack([self.left_levels, self.levels]).ravel(),
        })


# ――― ファミリーごとの幾何 ―――
@dataclass(frozen=True, eq=False)
class _Projection:
    family: ErrorFamily
    dim: int
    basis1: np.ndarray
    retired: Optional[int]
    kink_t: Optional[float]

    @classmethod
    def of(cls, family: ErrorFamily, dim: int) -> "_Projection":
        if family.kind == "laplace":
            a = family.alpha
            if dim == 2:
                b = np.array([[1.0, a], [1.0, -a]])
                retired = 1
            else:
                b = np.array([[1.0, a, 0.0], [0.0, 0.0, 1.0], [1.0, -a, 0.0]])
                retired = 2
            return cls(family, dim, b, retired, 0.5)
        return cls(family, dim, np.eye(dim), None, None)

    def basis(self, sigma: Optional[float]) -> np.ndarray:
        if self.dim == 2:
            return self.basis1
        return self.basis1 @ _scale_matrix(sigma or 1.0)

    @property
    def kink(self) -> Optional[float]:
        return self.family.kink


def _scale_matrix(sigma: float) -> np.ndarray:
    return np.diag([1.0, 1.0 / sigma, 1.0 / sigma])


# ――― 裾の状態（t ベクトル化） ―――
@dataclass
class _TailState:
    t: np.ndarray
    x: np.ndarray
    s: np.ndarray
    psi: np.ndarray
    m: np.ndarray
    v: np.ndarray
    xm: np.ndarray
    a_s: Optional[np.ndarray] = None
    b_s: Optional[np.ndarray] = None


def _tail_state(family: ErrorFamily, t, moments: bool = False) -> _TailState:
    """t = F(x) での条件付きスコア平均 m、分散 v など。t = 0 は極限値で埋める"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    start = t <= 0.0
    tt = np.where(start, 0.5, t)
    x = family.quantile(tt)
    s = 1.0 - tt
    psi = family.score(x, right_limit=True)

    if family.kind == "normal":
        m = normal_mills_ratio(x)
        v = np.maximum(1.0 + x * m - m * m, 0.0)
    elif family.kind == "logistic":
        m = tt.copy()
        v = s * s / 3.0
    elif family.kind == "laplace":
        al = family.alpha
        below = tt < 0.5
        m = np.where(below, al * tt / s, al)
        v = np.where(below, al * al - m * m, 0.0)
    else:
        m = family.pdf(x) / s
        v = np.maximum(family.tail_sigma2(x) / s - m * m, 0.0)
    xm = x * m

    a_s = b_s = None
    if moments:
        if family.kind == "normal":
            a_s = (x * x + 2.0) * m
            b_s = (x ** 3 + 3.0 * x) * m + 3.0
        else:
            a, b = family.tail_score_moments(x)
            a_s, b_s = a / s, b / s

    if start.any():
        x = np.where(start, -np.inf, x)
        s = np.where(start, 1.0, s)
        psi = np.where(start, family.score(-np.inf), psi)
        m = np.where(start, 0.0, m)
        v = np.where(start, family.fisher_information, v)
        xm = np.where(start, 0.0, xm)
        if moments:
            a_s = np.where(start, family.total_score_moment(1), a_s)
            b_s = np.where(start, family.total_score_moment(2), b_s)
        tt = np.where(start, 0.0, tt)

    return _TailState(tt, x, s, psi, m, v, xm, a_s, b_s)


def _normalized_gamma(st: _TailState, dim: int) -> np.ndarray:
    """Γ_t / (1-t) を (q, dim, dim) で返す"""
    q = st.t.shape[0]
    m2 = st.m * st.m + st.v
    if dim == 2:
        out = np.empty((q, 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 0, 1] = out[:, 1, 0] = st.m
        out[:, 1, 1] = m2
        return out
    out = np.empty((q, 3, 3))
    out[:, 0, 0] = 1.0
    out[:, 0, 1] = out[:, 1, 0] = st.m
    out[:, 0, 2] = out[:, 2, 0] = 2.0 + st.xm
    out[:, 1, 1] = m2
    out[:, 1, 2] = out[:, 2, 1] = st.m + st.a_s
    out[:, 2, 2] = 3.0 + 2.0 * st.xm + st.b_s
    return out


def _location_deficient(m: np.ndarray, v: np.ndarray, rank_tol: float) -> np.ndarray:
    return v < rank_tol * (1.0 + m * m) ** 2


def _pinv_apply(mat: np.ndarray, vec: np.ndarray, rtol: float) -> np.ndarray:
    """対称行列の固有分解による擬似逆行列の適用（λ < rtol·λmax を 0 とみなす）"""
    w, vecs = np.linalg.eigh(mat)
    keep = w > rtol * w[..., -1:]
    inv = np.divide(1.0, w, out=np.zeros_like(w), where=keep)
    coef = np.einsum("...ji,...j->...i", vecs, vec)
    return np.einsum("...ij,...j->...i", vecs, inv * coef)


def _raw_integrand(family: ErrorFamily, dim: int, t, sigma: Optional[float] = None,
                   numerics: NumericalConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Γ_t⁺ γ(t)（標準座標、(q, dim)）"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if dim == 2 and family.kind == "laplace":
        al = family.alpha
        below = t < 0.5
        s = 1.0 - t
        c = 1.0 / np.where(below, 1.0 - 2.0 * t, 1.0)
        lower = np.column_stack([c, -c / al])
        upper = np.column_stack([np.ones_like(t), np.full_like(t, al)]) / (s * (1.0 + al * al))[:, None]
        return np.where(below[:, None], lower, upper)

    st = _tail_state(family, t, moments=(dim == 3))
    if dim == 2:
        m, v, psi, s = st.m, st.v, st.psi, st.s
        deficient = _location_deficient(m, v, numerics.rank_tol)
        vs = np.where(deficient, 1.0, v)
        g0 = (1.0 + m * (m - psi) / vs) / s
        g1 = ((psi - m) / vs) / s
        coef = (1.0 + m * psi) / (s * (1.0 + m * m) ** 2)
        return np.column_stack([np.where(deficient, coef, g0), np.where(deficient, coef * m, g1)])

    mat = _normalized_gamma(st, 3)
    gam = np.column_stack([np.ones_like(st.psi), st.psi, 1.0 + st.x * st.psi])
    if sigma is not None and sigma != 1.0:
        d = _scale_matrix(sigma)
        mat = d @ mat @ d
        gam = gam @ d
    return _pinv_apply(mat, gam, numerics.pinv_rtol) / st.s[:, None]


def _laplace_below_kink(t: np.ndarray, dim: int) -> np.ndarray:
    """
    t < 1/2 の Laplace で B·Γ_t⁻¹γ(t) から退役座標の極 1/(1/2 - t) を除いた残り

    (P, Q, φ) = (I(x>0), I(x<0), 1 + xψ) の座標では Γ_t が疎になり閉形式で解ける。
    p = 1/2 - t、z = -ln(2t) として G = [[1/2, 0, 1], [0, p, D], [1, D, E]]、
    D = 2p - tz、E = 5 - t(z² + 4z + 5)、γ(t) = (0, 1, 1 + z)。B·Γ⁻¹γ = G⁻¹γ（α に依存しない）。
    """
    out = np.zeros((t.shape[0], dim))
    if dim == 2:
        return out
    tt = np.maximum(t, np.finfo(float).tiny)
    p = 0.5 - tt
    # kink 近傍では D ~ p なので z を p から直接求める
    z = np.where(tt < 0.25, -np.log(2.0 * tt), -np.log1p(-2.0 * np.minimum(p, 0.25)))
    d = 2.0 * p - tt * z
    e = 5.0 - tt * (z * z + 4.0 * z + 5.0)
    # 分子は p(1+z) - D = z/2 - p
    y_phi = (0.5 * z - p) / (p * (e - 2.0) - d * d)
    out[:, 0] = -2.0 * y_phi
    out[:, 1] = y_phi
    out[:, 2] = -d * y_phi / p
    return out


def _projected_integrand(proj: _Projection, t, numerics: NumericalConfig = DEFAULT_NUMERICS,
                         regular: bool = False) -> np.ndarray:
    """
    B·Γ_t⁺γ(t)。kink 以上では退役座標を 0 にする

    regular=True では kink 未満の退役座標から極 1/(kink - t) を除く（極の積分は _pole_integral）。
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if proj.family.kind != "laplace":
        return _raw_integrand(proj.family, proj.dim, t, numerics=numerics) @ proj.basis1.T

    out = np.zeros((t.shape[0], proj.dim))
    below = t < proj.kink_t
    if below.any():
        out[below] = _laplace_below_kink(t[below], proj.dim)
        if not regular:
            out[below, proj.retired] += 1.0 / (proj.kink_t - t[below])
    above = ~below
    if above.any():
        if proj.dim == 2:
            out[above, 0] = 1.0 / (1.0 - t[above])
        else:
            out[above] = _raw_integrand(proj.family, 3, t[above], numerics=numerics) @ proj.basis1.T
            out[above, proj.retired] = 0.0
    return out


def _pole_integral(proj: _Projection, a, b) -> np.ndarray:
    """∫_a^b dt/(kink - t) = ln((kink - a)/(kink - b)) を退役座標に置いた (q, dim)。kink 以上の区間は 0"""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    out = np.zeros((a.shape[0], proj.dim))
    if proj.retired is None:
        return out
    below = b < proj.kink_t
    k = proj.kink_t
    out[below, proj.retired] = np.log((k - a[below]) / (k - b[below]))
    return out


def _safe_contract(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """重み 0 の座標は値（inf を含む）を読まずに縮約"""
    with np.errstate(invalid="ignore"):
        prod = np.where(weights == 0.0, 0.0, weights * values)
    return prod.sum(axis=-1)


def _score_matrix(family: ErrorFamily, x: np.ndarray, dim: int, sigma: Optional[float] = None) -> np.ndarray:
    psi = family.score(x, right_limit=True)
    cols = [np.ones_like(psi), psi]
    if dim == 3:
        cols.append(1.0 + x * psi)
    h = np.column_stack(cols)
    if sigma is not None:
        h = h @ _scale_matrix(sigma)
    return h


def _segment(proj: _Projection, a: float, b: float, drop_retired: bool = False,
             numerics: NumericalConfig = DEFAULT_NUMERICS) -> np.ndarray:
    def fun(t):
        return _projected_integrand(proj, t, numerics, regular=True)[0]

    res, _ = integrate.quad_vec(fun, a, b, epsabs=numerics.quad_epsabs, epsrel=numerics.segment_epsrel)
    res = np.asarray(res, dtype=float)
    if proj.retired is not None:
        if drop_retired:
            res[proj.retired] = 0.0
        else:
            res = res + _pole_integral(proj, a, b)[0]
    return res


# ――― 入力検査 ―――
def _check_points(points, numerics: NumericalConfig, require_sorted: bool = True) -> np.ndarray:
    pts = np.atleast_1d(np.asarray(points, dtype=float)).ravel()
    if pts.size == 0:
        raise DomainError("point set is empty")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    if require_sorted and np.any(np.diff(pts) < 0):
        raise DomainError("points must be sorted in nondecreasing order")
    return pts


def _check_tail(family: ErrorFamily, points: np.ndarray, numerics: NumericalConfig) -> None:
    top = float(np.max(points))
    if float(family.sf(top)) <= 1.0 - numerics.t_max:
        raise TailOverflowError(top)


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0:
        raise DomainError(f"scale must be positive and finite (got {sigma!r})")
    return sigma


def _residual_array(residuals) -> np.ndarray:
    e = np.asarray(getattr(residuals, "residuals", residuals), dtype=float).ravel()
    if e.size == 0:
        raise DomainError("residual set is empty")
    if not np.all(np.isfinite(e)):
        raise DomainError("residuals must be finite")
    return e


# ――― Γ の操作 ―――
def score_vector(family: ErrorFamily, x: float, sigma: Optional[float] = None,
                 right_limit: bool = False) -> ScoreVec:
    """h(x)、sigma を与えると h_σ(x)"""
    psi = float(family.score(x, right_limit=right_limit))
    if sigma is None:
        return ScoreVec(np.array([1.0, psi]))
    sigma = _check_sigma(sigma)
    return ScoreVec(np.array([1.0, psi / sigma, (1.0 + x * psi) / sigma]))


def gamma_matrix(family: ErrorFamily, t: float, sigma: Optional[float] = None,
                 numerics: NumericalConfig = DEFAULT_NUMERICS) -> GammaMatrix:
    """Γ_t（sigma を与えるとスケール拡張 Γ_{t,σ}）"""
    t = float(t)
    if not (0.0 <= t < numerics.t_max):
        raise DomainError(f"t must lie in [0, 1 - 1e-12) (got {t!r})")
    dim = 2 if sigma is None else 3
    st = _tail_state(family, [t], moments=(dim == 3))
    mat = _normalized_gamma(st, dim)[0]
    m, v = float(st.m[0]), float(st.v[0])

    if family.kind == "laplace" and st.x[0] >= 0:
        deficient, alpha = True, family.alpha
    elif dim == 2:
        deficient = bool(_location_deficient(st.m, st.v, numerics.rank_tol)[0])
        alpha = m if deficient else None
    else:
        w = np.linalg.eigvalsh(mat)
        deficient = bool(w[0] < numerics.pinv_rtol * w[-1])
        alpha = m if deficient else None

    entries = (1.0 - t) * mat
    if sigma is not None:
        sigma = _check_sigma(sigma)
        d = _scale_matrix(sigma)
        entries = d @ entries @ d
    logger.debug(f"gamma_matrix {family.spec} t={t!r} deficient={deficient} v={v:.3e}")
    return GammaMatrix(t=t, entries=entries, rank_deficient=deficient, alpha=alpha, sigma=sigma)


def gamma_inner_solve(g: GammaMatrix, gamma_t, b, numerics: NumericalConfig = DEFAULT_NUMERICS) -> float:
    """γᵀ Γ_t⁻¹ b（退化時は像への射影で一意に定まる値）"""
    gam = np.asarray(getattr(gamma_t, "components", gamma_t), dtype=float)
    b = np.asarray(b, dtype=float)
    if gam.shape != (g.dim,) or b.shape != (g.dim,):
        raise DomainError("score and right-hand side must match the matrix dimension")

    if g.dim == 2:
        scale = float(g.entries[0, 0])
        if scale <= 0:
            raise DomainError("gamma matrix has no remaining tail mass")
        if g.rank_deficient:
            a = float(g.alpha)
            u = np.array([1.0, a])
            return float((gam @ u) * (u @ b) / (scale * (1.0 + a * a) ** 2))
        mat = g.entries / scale
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] ** 2
        tr = mat[0, 0] + mat[1, 1]
        lmax = 0.5 * tr + math.sqrt(max(0.25 * tr * tr - det, 0.0))
        lmin = det / lmax if lmax > 0 else 0.0
        if lmin <= 0 or lmax / lmin > numerics.cond_max:
            raise IllConditionedError(
                f"gamma matrix at t={g.t!r} is ill-conditioned but not flagged rank-deficient"
            )
        inv = np.array([[mat[1, 1], -mat[0, 1]], [-mat[0, 1], mat[0, 0]]]) / det
        return float(gam @ inv @ b / scale)

    w = np.linalg.eigvalsh(g.entries)
    if not g.rank_deficient and (w[0] <= 0 or w[-1] / w[0] > numerics.cond_max):
        raise IllConditionedError(
            f"gamma matrix at t={g.t!r} is ill-conditioned but not flagged rank-deficient"
        )
    return float(gam @ _pinv_apply(g.entries, b, numerics.pinv_rtol))


def weighted_norm(family: ErrorFamily, t: float, numerics: NumericalConfig = DEFAULT_NUMERICS) -> float:
    """γ(t)ᵀ Γ_t⁻¹ γ(t)。退化領域では 1/(1-t)"""
    g = gamma_matrix(family, t, numerics=numerics)
    if g.rank_deficient:
        return 1.0 / (1.0 - g.t)
    x = float(family.quantile(g.t))
    gam = np.array([1.0, float(family.score(x, right_limit=True))])
    if not np.all(np.isfinite(gam)):
        return math.inf
    return gamma_inner_solve(g, gam, gam, numerics)


# ――― 累積カーネル ―――
def _accumulate(proj: _Projection, tq: np.ndarray, numerics: NumericalConfig) -> np.ndarray:
    out = np.zeros((tq.shape[0], proj.dim))
    cur = np.zeros(proj.dim)
    prev = 0.0
    for j, tj in enumerate(tq):
        if proj.kink_t is not None and prev < proj.kink_t <= tj:
            cur = cur + _segment(proj, prev, proj.kink_t, drop_retired=True, numerics=numerics)
            prev = proj.kink_t
        if tj > prev:
            cur = cur + _segment(proj, prev, tj, numerics=numerics)
            prev = tj
        out[j] = cur
        if proj.retired is not None and tj >= proj.kink_t:
            out[j, proj.retired] = np.inf
    return out


def cumulant_table(family: ErrorFamily, points, sigma: Optional[float] = None,
                   numerics: NumericalConfig = DEFAULT_NUMERICS) -> CumulantTable:
    """
    𝒢 を点列上で累積求積（t 空間、区間ごとに相対許容誤差 segment_epsrel）

    sigma を与えるとスケール拡張 𝒢_σ。表の座標 B_σ𝒢_σ は σ に依存しない。
    """
    pts = _check_points(points, numerics)
    _check_tail(family, pts, numerics)
    dim = 2
    if sigma is not None:
        sigma = _check_sigma(sigma)
        dim = 3
    proj = _Projection.of(family, dim)

    uniq, inverse = np.unique(pts, return_inverse=True)
    tq = np.minimum(family.cdf(uniq), numerics.t_clamp)
    values = _accumulate(proj, tq, numerics)
    return CumulantTable(points=pts, values=values[inverse], basis=proj.basis(sigma), family=family,
                         sigma=sigma, retired=proj.retired, kink=proj.kink)


class KernelGrid:
    """
    t 空間の密な累積表（0・kink・1 に向かって幾何的に集積した節点）

    構築時に節点間を適応求積し、問い合わせは直前の節点から 16 点 Gauss-Legendre で補完する。
    モンテカルロのように同じファミリーで何千回も w_n を作る場合に使う。
    """

    def __init__(self, proj: _Projection, nodes: np.ndarray, cumulative: np.ndarray,
                 numerics: NumericalConfig = DEFAULT_NUMERICS):
        self._proj = proj
        self.nodes = nodes
        self.cumulative = cumulative
        self.numerics = numerics

    @property
    def family(self) -> ErrorFamily:
        return self._proj.family

    @property
    def dim(self) -> int:
        return self._proj.dim

    @classmethod
    def build(cls, family: ErrorFamily, scale: bool = False,
              numerics: NumericalConfig = DEFAULT_NUMERICS) -> "KernelGrid":
        proj = _Projection.of(family, 3 if scale else 2)
        nodes = _grid_nodes(proj.kink_t, numerics)
        cumulative = np.zeros((nodes.shape[0], proj.dim))
        running = np.zeros(proj.dim)
        for i in range(1, nodes.shape[0]):
            a, b = nodes[i - 1], nodes[i]
            drop = proj.kink_t is not None and b == proj.kink_t
            running = running + _segment(proj, a, b, drop_retired=drop, numerics=numerics)
            cumulative[i] = running
        if proj.retired is not None:
            cumulative[nodes >= proj.kink_t, proj.retired] = np.inf
        logger.info(f"kernel grid built: family={family.spec} dim={proj.dim} nodes={nodes.shape[0]}")
        return cls(proj, nodes, cumulative, numerics)

    def values_at(self, t) -> np.ndarray:
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, self.numerics.t_clamp)
        j = np.searchsorted(self.nodes, t, side="right") - 1
        a = self.nodes[j]
        half = 0.5 * (t - a)
        out = self.cumulative[j].copy()
        active = half > 0
        if active.any():
            mid = a[active] + half[active]
            tt = mid[:, None] + half[active][:, None] * _GL_NODES[None, :]
            vals = _projected_integrand(self._proj, tt.ravel(), self.numerics, regular=True)
            vals = vals.reshape(tt.shape[0], tt.shape[1], self.dim)
            inc = np.einsum("qkd,k->qd", vals, _GL_WEIGHTS) * half[active][:, None]
            inc = inc + _pole_integral(self._proj, a[active], t[active])
            out[active] = out[active] + inc
        return out

    def table(self, points, sigma: Optional[float] = None) -> CumulantTable:
        pts = _check_points(points, self.numerics)
        _check_tail(self.family, pts, self.numerics)
        if self.dim == 3:
            sigma = _check_sigma(1.0 if sigma is None else sigma)
        elif sigma is not None:
            raise DomainError("location kernel grid does not take a scale")
        values = self.values_at(self.family.cdf(pts))
        return CumulantTable(points=pts, values=values, basis=self._proj.basis(sigma), family=self.family,
                             sigma=sigma, retired=self._proj.retired, kink=self._proj.kink)


def _grid_nodes(kink_t: Optional[float], numerics: NumericalConfig) -> np.ndarray:
    steps = np.arange(numerics.grid_decades * numerics.grid_points_per_decade + 1)
    ratios = 10.0 ** (-steps / numerics.grid_points_per_decade)
    tail_gap = 1.0 - numerics.t_clamp
    cuts = [0.0, 1.0] if kink_t is None else [0.0, kink_t, 1.0]
    nodes = [np.array([0.0, numerics.t_clamp])]
    for a, b in zip(cuts[:-1], cuts[1:]):
        d = 0.5 * (b - a) * ratios
        nodes.append(a + d)
        if b < 1.0:
            nodes.append(b - d)
            nodes.append(np.array([b]))
        else:
            nodes.append(1.0 - d[d >= tail_gap])
    return np.unique(np.concatenate(nodes))


# ――― 和公式による変換 ―――
def _transform(e: np.ndarray, family: ErrorFamily, dim: int, sigma: Optional[float],
               kernel: Optional[KernelGrid], name: str) -> ProcessPath:
    n = e.shape[0]
    u, c = np.unique(e, return_counts=True)
    if kernel is not None:
        if kernel.family != family or kernel.dim != dim:
            raise DomainError(f"kernel grid for {kernel.family.spec} (dim {kernel.dim}) "
                              f"does not match {family.spec} (dim {dim})")
        table = kernel.table(u, sigma=sigma)
    else:
        table = cumulant_table(family, u, sigma=sigma)

    lam = table.weights(u, _score_matrix(family, u, dim, sigma))
    own = table.contract(lam)
    weighted = c[:, None] * lam
    suffix = np.cumsum(weighted[::-1], axis=0)[::-1]
    later = np.vstack([suffix[1:], np.zeros((1, dim))])
    cross = table.contract(later)

    counts = np.cumsum(c)
    root_n = math.sqrt(n)
    levels = (counts - np.cumsum(c * own) - cross) / root_n
    left = levels - c / root_n
    return ProcessPath(name=name, jump_points=u, levels=levels, left_levels=left, scale=root_n, n=n,
                       family_spec=family.spec, counts=counts)


def transform_path(residuals, family: ErrorFamily, kernel: Optional[KernelGrid] = None) -> ProcessPath:
    """w_n(x) = n^{-1/2} Σ [I(ê_i ≤ x) - h(ê_i)ᵀ𝒢(x ∧ ê_i)] を順序統計量で評価"""
    e = _residual_array(residuals)
    return _transform(e, family, 2, None, kernel, "w")


def scale_transform_path(residuals, sigma_hat: float, family: ErrorFamily,
                         kernel: Optional[KernelGrid] = None) -> ProcessPath:
    """尺度推定つき w̃_n。残差は ẽ_i = ê_i/σ̂ に標準化する"""
    sigma_hat = _check_sigma(sigma_hat)
    e = _residual_array(residuals) / sigma_hat
    return _transform(e, family, 3, sigma_hat, kernel, "w_tilde")


def evaluate_transform(residuals, family: ErrorFamily, x, sigma_hat: Optional[float] = None,
                       numerics: NumericalConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """任意の x での w_n（sigma_hat を与えると w̃_n）の厳密値"""
    e = _residual_array(residuals)
    dim = 2
    if sigma_hat is not None:
        sigma_hat = _check_sigma(sigma_hat)
        e = e / sigma_hat
        dim = 3
    xq = _check_points(x, numerics, require_sorted=False)
    n = e.shape[0]
    u, c = np.unique(e, return_counts=True)
    pts = np.union1d(u, xq)
    table = cumulant_table(family, pts, sigma=sigma_hat, numerics=numerics)

    lam = table.weights(u, _score_matrix(family, u, dim, sigma_hat))
    own = table.contract(lam, rows=np.searchsorted(pts, u))
    cum_own = np.concatenate([[0.0], np.cumsum(c * own)])
    cum_lam = np.vstack([np.zeros((1, dim)), np.cumsum(c[:, None] * lam, axis=0)])
    cum_cnt = np.concatenate([[0], np.cumsum(c)])

    k = np.searchsorted(u, xq, side="right")
    later = cum_lam[-1] - cum_lam[k]
    cross = _safe_contract(later, table.values[np.searchsorted(pts, xq)])
    return (cum_cnt[k] - cum_own[k] - cross) / math.sqrt(n)


# ――― 直接評価（オラクル） ―――
def K_direct(family: ErrorFamily, x, atoms, weights=None, sigma: Optional[float] = None,
             numerics: NumericalConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """
    K(x, ν) = ∫_{-∞}^x hᵀ(y) Γ_{F(y)}⁻¹ ∫_y^∞ h(z) dν(z) dF(y)

    ν は有限個の原子（atoms, weights）。内側は原子の有限和、外側は原子と kink で
    区切った区間ごとの適応求積。transform_path の検算用の遅い実装。
    """
    xq = _check_points(x, numerics, require_sorted=False)
    _check_tail(family, xq, numerics)
    atoms = np.atleast_1d(np.asarray(atoms, dtype=float)).ravel()
    weights = np.ones_like(atoms) if weights is None else np.atleast_1d(np.asarray(weights, dtype=float))
    dim = 2
    if sigma is not None:
        sigma = _check_sigma(sigma)
        dim = 3
    proj = _Projection.of(family, dim)

    order = np.argsort(atoms, kind="stable")
    atoms, weights = atoms[order], weights[order]
    h = _score_matrix(family, atoms, dim, sigma)
    if proj.retired is not None:
        basis = proj.basis(sigma)
        coef = np.linalg.solve(basis.T, h.T).T if atoms.size else np.zeros((0, dim))
        coef[atoms >= proj.kink, proj.retired] = 0.0

        def segment_value(b_vec, a, b):
            smooth = integrate.quad(lambda t: float(b_vec @ _projected_integrand(proj, t, numerics, regular=True)[0]),
                                    a, b, epsabs=numerics.quad_epsabs * 10, epsrel=numerics.segment_epsrel / 10,
                                    limit=200)[0]
            if b_vec[proj.retired] == 0.0:
                return smooth
            return smooth + float(b_vec @ _pole_integral(proj, a, b)[0])
    else:
        coef = h

        def segment_value(b_vec, a, b):
            return integrate.quad(lambda t: float(b_vec @ _raw_integrand(family, dim, t, sigma, numerics)[0]),
                                  a, b, epsabs=numerics.quad_epsabs * 10, epsrel=numerics.segment_epsrel / 10,
                                  limit=200)[0]

    weighted = weights[:, None] * coef
    suffix = np.vstack([np.cumsum(weighted[::-1], axis=0)[::-1], np.zeros((1, dim))])

    events = np.concatenate([atoms, xq] + ([np.array([proj.kink])] if proj.kink is not None else []))
    kinds = np.concatenate([np.zeros(atoms.size, dtype=int), np.ones(xq.size, dtype=int),
                            np.full(1 if proj.kink is not None else 0, 2, dtype=int)])
    ev_order = np.lexsort((kinds, events))
    t_events = np.minimum(family.cdf(events), numerics.t_clamp)

    result = np.empty(xq.size)
    x_index = np.arange(xq.size)
    total = 0.0
    prev_t = 0.0
    passed = 0
    for idx in ev_order:
        t_next = float(t_events[idx])
        b_vec = suffix[passed]
        if t_next > prev_t and np.any(b_vec != 0.0):
            total += segment_value(b_vec, prev_t, t_next)
        prev_t = max(prev_t, t_next)
        if kinds[idx] == 0:
            passed += 1
        elif kinds[idx] == 1:
            result[x_index[idx - atoms.size]] = total
    return result


def identity_residual(family: ErrorFamily, x, sigma: Optional[float] = None,
                      numerics: NumericalConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """
    H(x) - K(x, Hᵀ) を求積で評価（理論上は恒等的に 0）

    H(x) = ∫_{-∞}^x h dF = (F, -f)、スケール拡張では (F, -f/σ, (2F - x f)/σ)。
    第 1 座標は仮説母集団そのものの変換に等しい。
    """
    xq = _check_points(x, numerics, require_sorted=False)
    _check_tail(family, xq, numerics)
    dim = 2 if sigma is None else 3
    if sigma is not None:
        sigma = _check_sigma(sigma)
    proj = _Projection.of(family, dim)

    def fun(t):
        tt = np.atleast_1d(t)
        st = _tail_state(family, tt, moments=(dim == 3))
        mat = _normalized_gamma(st, dim)
        if sigma is not None:
            d = _scale_matrix(sigma)
            mat = d @ mat @ d
        g = _raw_integrand(family, dim, tt, sigma, numerics)
        return (st.s[:, None] * np.einsum("qij,qj->qi", mat, g))[0]

    order = np.argsort(xq)
    tq = np.minimum(family.cdf(xq[order]), numerics.t_clamp)
    k_vals = np.zeros((xq.size, dim))
    cur = np.zeros(dim)
    prev = 0.0
    for j, tj in zip(order, tq):
        cuts = [proj.kink_t] if proj.kink_t is not None and prev < proj.kink_t < tj else []
        for b in cuts + [tj]:
            if b > prev:
                res, _ = integrate.quad_vec(fun, prev, b, epsabs=numerics.quad_epsabs,
                                            epsrel=numerics.segment_epsrel)
                cur = cur + np.asarray(res)
                prev = b
        k_vals[j] = cur

    big_f = family.cdf(xq)
    f = family.pdf(xq)
    cols = [big_f, -f]
    if dim == 3:
        cols.append(2.0 * big_f - xq * f)
    h_total = np.column_stack(cols)
    if sigma is not None:
        h_total = h_total @ _scale_matrix(sigma)
    return h_total - k_vals
