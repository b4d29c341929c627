#!/usr/bin/env python3
"""
sup 型統計量と極限分布 sup|b| のテスト
"""

import math
import sys
import os

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.analysis.monte_carlo_runner import monte_carlo_sup_cdf
from src.core.dist_families import ErrorFamily
from src.core.martingale_transform import ProcessPath, evaluate_transform, transform_path
from src.core.residuals import estimated_empirical_process
from src.core.sup_statistics import (
    TestReport,
    build_report,
    critical_value,
    p_value,
    sup_abs_bm_cdf,
    sup_abs_bm_sf,
    sup_statistic,
)
from src.exceptions import DomainError

LEVELS = (0.10, 0.05, 0.025, 0.01)


def _flat_path(n=4):
    pts = np.linspace(-1.0, 1.0, n)
    return ProcessPath(name="w", jump_points=pts, levels=np.zeros(n), left_levels=np.zeros(n),
                       scale=math.sqrt(n), n=n, family_spec="normal")


# ――― sup 統計量 ―――
def test_zero_path_has_zero_sup():
    assert sup_statistic(_flat_path()) == 0.0


def test_sup_of_transform_matches_exact_values_on_dense_grid():
    fam = ErrorFamily.normal()
    e = fam.sample(np.random.default_rng(8), 30)
    path = transform_path(e, fam)
    grid = np.union1d(fam.quantile(np.linspace(0.001, 0.999, 400)), path.jump_points)
    exact = evaluate_transform(e, fam, grid)
    # w_n は跳躍間でも連続に動くが、統計量は順序統計量での値を読む
    on_jumps = np.isin(grid, path.jump_points)
    assert on_jumps.sum() == path.jump_points.size
    assert np.allclose(exact[on_jumps], path.levels, atol=1e-8)
    assert sup_statistic(path) == pytest.approx(float(np.max(np.abs(exact[on_jumps]))), abs=1e-8)
    assert sup_statistic(path) <= float(np.max(np.abs(exact))) + 1e-8


def test_sup_of_empirical_process_converges_on_finer_grids():
    fam = ErrorFamily.normal()
    e = fam.sample(np.random.default_rng(12), 20)
    path = estimated_empirical_process(e, fam)
    coarse_t = np.linspace(0.0, 1.0, 10_001)[1:-1]
    fine_t = np.union1d(coarse_t, np.linspace(0.0, 1.0, 100_001)[1:-1])
    coarse = float(np.max(np.abs(path.evaluate(fam.quantile(coarse_t)))))
    fine = float(np.max(np.abs(path.evaluate(fam.quantile(fine_t)))))
    exact = sup_statistic(path)
    assert coarse <= fine <= exact + 1e-12
    assert exact - fine < 1e-4


def test_sup_statistic_needs_jumps():
    empty = ProcessPath(name="w", jump_points=np.array([]), levels=np.array([]), left_levels=np.array([]),
                        scale=1.0, n=0)
    with pytest.raises(DomainError):
        sup_statistic(empty)


# ――― 極限分布 ―――
def test_sup_law_endpoints():
    assert sup_abs_bm_cdf(0.0) == 0.0
    assert sup_abs_bm_sf(0.0) == 1.0
    assert sup_abs_bm_cdf(math.inf) == 1.0
    assert sup_abs_bm_cdf(8.0) == pytest.approx(1.0, abs=1e-12)


def test_sup_law_is_a_distribution_function():
    a = np.linspace(0.0, 5.0, 1000)
    cdf = sup_abs_bm_cdf(a)
    assert cdf.shape == a.shape
    assert np.all((cdf >= 0.0) & (cdf <= 1.0))
    assert np.all(np.diff(cdf) >= -1e-15)
    assert np.allclose(cdf + sup_abs_bm_sf(a), 1.0, atol=1e-12)


def test_sup_law_series_agree_at_switch_point():
    assert sup_abs_bm_cdf(1.0 - 1e-12) == pytest.approx(sup_abs_bm_cdf(1.0), abs=1e-9)


def test_sup_law_known_quantile():
    assert sup_abs_bm_cdf(2.2414) == pytest.approx(0.95, abs=1e-4)


@pytest.mark.parametrize("bad", [-0.1, math.nan])
def test_sup_law_rejects_negative_argument(bad):
    with pytest.raises(DomainError):
        sup_abs_bm_cdf(bad)


def test_critical_values():
    assert critical_value(0.05) == pytest.approx(2.2414, abs=1e-3)
    cvs = [critical_value(level) for level in LEVELS]
    assert all(a < b for a, b in zip(cvs, cvs[1:]))


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
def test_critical_value_rejects_bad_level(bad):
    with pytest.raises(DomainError):
        critical_value(bad)


def test_p_value_inverts_critical_value():
    assert p_value(0.0) == 1.0
    for level in LEVELS:
        assert p_value(critical_value(level)) == pytest.approx(level, abs=1e-8)
    assert 0.0 < p_value(3.0) < 0.01


@pytest.mark.slow
def test_sup_law_against_simulated_brownian_motion():
    frame = monte_carlo_sup_cdf([1.5, 2.0, 2.2414, 3.0], reps=100_000, steps=10_000, seed=31)
    assert frame["within_band"].all()


# ――― 検定結果 ―――
def test_report_for_transformed_path():
    fam = ErrorFamily.logistic()
    e = fam.sample(np.random.default_rng(21), 50)
    report = build_report(transform_path(e, fam), 0.05, bandwidth=0.04, seed=9)
    assert report.statistic_name == "W"
    assert report.reject == (report.value > report.critical_value)
    assert report.p_value == pytest.approx(p_value(report.value))
    assert report.critical_source == "limiting law"
    keys = [line.split("=", 1)[0] for line in report.to_text().splitlines()]
    assert keys[:10] == ["statistic", "value", "level", "critical_value", "p_value", "reject",
                         "family", "n", "bandwidth", "seed"]


def test_report_for_empirical_process_has_no_p_value():
    fam = ErrorFamily.normal()
    e = fam.sample(np.random.default_rng(22), 50)
    path = estimated_empirical_process(e, fam)
    report = build_report(path, 0.05)
    assert report.statistic_name == "V_hat"
    assert report.p_value is None
    assert report.reject is None
    text = report.to_text()
    assert "p_value=none" in text
    assert "critical_source=empirical null distribution" in text
    assert "note=" in text

    with_cv = build_report(path, 0.05, empirical_critical_value=1e-6)
    assert with_cv.reject is True


def test_report_text_formats_values():
    report = TestReport(statistic_name="W", value=1.25, level=0.05, critical_value=2.5, p_value=0.5,
                        reject=False, family="normal", n=200, bandwidth=0.04, seed=None,
                        extras={"sigma_hat": "1.0"})
    text = report.to_text()
    assert "value=1.25\n" in text
    assert "reject=false\n" in text
    assert "seed=none\n" in text
    assert text.endswith("sigma_hat=1.0\n")


if __name__ == "__main__":
    pytest.main([__file__])
