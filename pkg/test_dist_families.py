#!/usr/bin/env python3
"""
誤差分布ファミリーのテスト
密度・分位点・スコア・裾の汎関数の閉形式と求積による検算
"""

import math
import sys
import os

import numpy as np
import pytest
from scipy import integrate, optimize, special

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.core.dist_families import ErrorFamily, family_eval, parse_family, quantile, tail_functionals
from src.exceptions import DomainError, ParseError, TailOverflowError

FAMILIES = [
    ErrorFamily.normal(),
    ErrorFamily.logistic(),
    ErrorFamily.laplace(1.0),
    ErrorFamily.laplace(math.sqrt(2.0)),
    ErrorFamily.student_t(3),
    ErrorFamily.student_t(1),
]
IDS = [f.spec for f in FAMILIES]


def _integrate_line(fn, lo=-np.inf, hi=np.inf):
    """0 で分割して全域積分（Laplace の kink 対策）"""
    total = 0.0
    if lo < 0:
        total += integrate.quad(fn, lo, min(hi, 0.0), epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    if hi > 0:
        total += integrate.quad(fn, max(lo, 0.0), hi, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total


# ――― family_eval ―――
def test_logistic_score_at_zero():
    v = family_eval(ErrorFamily.logistic(), 0.0)
    assert v.psi == pytest.approx(2.0 * v.F - 1.0, abs=1e-15)
    assert v.psi == 0.0
    assert v.F == 0.5


def test_normal_score_is_identity():
    assert family_eval(ErrorFamily.normal(), 1.5).psi == pytest.approx(1.5, abs=1e-15)


def test_laplace_score_is_constant_alpha_above_zero():
    assert family_eval(ErrorFamily.laplace(1.0), 2.0).psi == 1.0
    assert family_eval(ErrorFamily.laplace(2.5), 0.3).psi == 2.5
    assert family_eval(ErrorFamily.laplace(2.5), -0.3).psi == -2.5


def test_laplace_score_at_kink_is_zero_but_right_limit_is_alpha():
    fam = ErrorFamily.laplace(1.7)
    assert family_eval(fam, 0.0).psi == 0.0
    assert float(fam.score(0.0, right_limit=True)) == 1.7


def test_student_t_score_formula():
    # ((k+1)/k)·x/(1+x²/k) at k=3, x=10
    psi = family_eval(ErrorFamily.student_t(3), 10.0).psi
    assert psi == pytest.approx((4.0 / 3.0) * 10.0 / (1.0 + 100.0 / 3.0), rel=1e-12)
    assert psi == pytest.approx(40.0 / 103.0, rel=1e-12)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_family_eval_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        family_eval(ErrorFamily.normal(), bad)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_score_matches_log_density_derivative(family):
    h = 1e-5
    for x in (-2.3, -0.4, 0.7, 3.1):
        fd = -(math.log(float(family.pdf(x + h))) - math.log(float(family.pdf(x - h)))) / (2 * h)
        assert float(family.score(x)) == pytest.approx(fd, rel=1e-6, abs=1e-8)


# ――― quantile ―――
def test_quantile_closed_forms():
    assert quantile(ErrorFamily.normal(), 0.5) == 0.0
    assert quantile(ErrorFamily.logistic(), 0.75) == pytest.approx(math.log(3.0), rel=1e-14)
    assert quantile(ErrorFamily.laplace(2.0), 0.9) == pytest.approx(-math.log(0.2) / 2.0, rel=1e-14)


def test_student_t_quantile_against_root_finder():
    fam = ErrorFamily.student_t(2)
    q = quantile(fam, 0.90)
    oracle = optimize.brentq(lambda v: float(fam.cdf(v)) - 0.90, 0.0, 50.0, xtol=1e-14)
    assert q == pytest.approx(oracle, abs=1e-9)
    # t_2 には閉形式 (2p-1)/√(2p(1-p)) がある
    assert q == pytest.approx(0.8 / math.sqrt(0.18), rel=1e-10)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5, math.nan])
def test_quantile_rejects_levels_outside_unit_interval(bad):
    with pytest.raises(DomainError):
        quantile(ErrorFamily.normal(), bad)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_cdf_inverts_quantile(family):
    t = np.concatenate([np.geomspace(1e-6, 0.5, 40), 1.0 - np.geomspace(1e-6, 0.5, 40)])
    x = family.quantile(t)
    assert np.max(np.abs(family.cdf(x) - t)) < 1e-10


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_cdf_is_nondecreasing(family):
    x = np.linspace(-30.0, 30.0, 2001)
    assert np.all(np.diff(family.cdf(x)) >= 0.0)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_survival_is_complement_of_cdf(family):
    x = np.linspace(-5.0, 5.0, 101)
    assert np.allclose(family.sf(x) + family.cdf(x), 1.0, atol=1e-15)


# ――― 密度とスコアの積分 ―――
@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_density_integrates_to_one(family):
    assert _integrate_line(lambda v: float(family.pdf(v))) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_fisher_information_matches_quadrature(family):
    info = _integrate_line(lambda v: float(family.score(v)) ** 2 * float(family.pdf(v)))
    assert info == pytest.approx(family.fisher_information, abs=1e-7)
    assert math.isfinite(info)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_score_has_zero_mean(family):
    mean = _integrate_line(lambda v: float(family.score(v)) * float(family.pdf(v)))
    assert abs(mean) < 1e-8


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_tail_head_decomposition(family):
    for level in (0.001, 0.2, 0.5, 0.8, 0.999):
        x = quantile(family, level)
        head = _integrate_line(lambda v: float(family.score(v)) ** 2 * float(family.pdf(v)), hi=x)
        tail = tail_functionals(family, x).sigma2
        assert tail + head == pytest.approx(family.fisher_information, abs=1e-7)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_density_equals_tail_integral_of_score(family):
    # ∫_x^∞ ψ_f dF = ∫_x^∞ -f' = f(x)
    for level in (0.001, 0.3, 0.5, 0.7, 0.999):
        x = quantile(family, level)
        tail = _integrate_line(lambda v: float(family.score(v)) * float(family.pdf(v)), lo=x)
        assert tail == pytest.approx(float(family.pdf(x)), abs=1e-7)


# ――― 裾の汎関数 ―――
def test_laplace_tail_above_zero_is_degenerate():
    tf = tail_functionals(ErrorFamily.laplace(1.0), 0.8)
    assert tf.cond_mean == 1.0
    assert tf.cond_var == 0.0


def test_laplace_degeneracy_detector():
    fam = ErrorFamily.laplace(1.3)
    for x in (0.0, 0.01, 1.0, 5.0):
        assert tail_functionals(fam, x).cond_var == 0.0
    for x in (-0.01, -1.0, -5.0):
        assert tail_functionals(fam, x).cond_var > 0.0


def test_normal_conditional_mean_at_zero():
    tf = tail_functionals(ErrorFamily.normal(), 0.0)
    oracle = integrate.quad(lambda y: y * math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi), 0, np.inf)[0] / 0.5
    assert tf.cond_mean == pytest.approx(oracle, rel=1e-10)
    assert tf.cond_mean == pytest.approx(2.0 / math.sqrt(2.0 * math.pi), rel=1e-12)


def test_normal_mills_ratio_is_stable_deep_in_tail():
    # 1 - Φ(x) を引き算で作ると x = 7 では桁落ちする
    tf = tail_functionals(ErrorFamily.normal(), 7.0)
    assert tf.cond_mean == pytest.approx(1.0 / (special.erfcx(7.0 / math.sqrt(2.0)) * math.sqrt(math.pi / 2.0)),
                                         rel=1e-12)
    assert tf.cond_mean == pytest.approx(7.0 + 1 / 7.0 - 2 / 7.0 ** 3 + 10 / 7.0 ** 5, rel=1e-4)


def test_logistic_tail_variance_at_zero():
    # ∫_0^∞ (2F-1)² dF = ∫_{1/2}^1 (2s-1)² ds = 1/6
    tf = tail_functionals(ErrorFamily.logistic(), 0.0)
    oracle = integrate.quad(lambda s: (2 * s - 1) ** 2, 0.5, 1.0)[0]
    assert tf.sigma2 == pytest.approx(oracle, rel=1e-12)
    assert tf.sigma2 == pytest.approx(1.0 / 6.0, rel=1e-12)


@pytest.mark.parametrize("family", FAMILIES, ids=IDS)
def test_tail_functionals_are_consistent(family):
    for x in (-3.0, -0.5, 0.0, 0.5, 3.0):
        tf = tail_functionals(family, x)
        assert 0.0 <= tf.survival <= 1.0
        assert tf.sigma2 >= 0.0
        assert tf.cond_var >= 0.0
        assert tf.sigma2 == pytest.approx(tf.survival * (tf.cond_var + tf.cond_mean ** 2), rel=1e-8, abs=1e-12)
        assert tf.cond_mean * tf.survival == pytest.approx(tf.density_at, rel=1e-8)


def test_tail_overflow_reports_point():
    with pytest.raises(TailOverflowError) as exc:
        tail_functionals(ErrorFamily.normal(), 8.0)
    assert exc.value.point == 8.0


@pytest.mark.parametrize("family", [ErrorFamily.laplace(1.0), ErrorFamily.normal()], ids=["laplace", "normal"])
def test_scale_tail_moments_match_quadrature(family):
    for x in (-1.5, 0.0, 0.9):
        a, b = family.tail_score_moments(x)
        qa = _integrate_line(lambda v: v * float(family.score(v)) ** 2 * float(family.pdf(v)), lo=x)
        qb = _integrate_line(lambda v: v * v * float(family.score(v)) ** 2 * float(family.pdf(v)), lo=x)
        assert float(a) == pytest.approx(qa, abs=1e-9)
        assert float(b) == pytest.approx(qb, abs=1e-9)


# ――― 指定文字列 ―――
@pytest.mark.parametrize("text, kind", [
    ("normal", "normal"),
    (" logistic ", "logistic"),
    ("laplace:1.5", "laplace"),
    ("t:3", "student_t"),
    ("t:1", "student_t"),
])
def test_parse_family(text, kind):
    fam = parse_family(text)
    assert fam.kind == kind
    assert parse_family(fam.spec) == fam


def test_parse_family_parameters():
    assert parse_family("laplace:1.5").alpha == 1.5
    assert parse_family("t:1").k == 1
    assert parse_family(f"laplace:{math.sqrt(2.0)!r}").alpha == math.sqrt(2.0)


@pytest.mark.parametrize("text", ["t:0", "t:-2", "t:1.5", "t:", "laplace", "laplace:-1", "laplace:abc",
                                  "laplace:0", "normal:2", "gamma", ""])
def test_parse_family_rejects_bad_specs(text):
    with pytest.raises(ParseError):
        parse_family(text)


def test_families_are_hashable_values():
    assert ErrorFamily.student_t(3) == parse_family("t:3")
    assert len({ErrorFamily.normal(), parse_family("normal")}) == 1


if __name__ == "__main__":
    pytest.main([__file__])
