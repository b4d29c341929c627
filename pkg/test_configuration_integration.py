#!/usr/bin/env python3
"""
設定システム統合のテスト
環境プリセット・カスタム上書き・出力パス・ログ設定・実験モニターを確認
"""

import json
import logging
import sys
import os

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.config import KNOWN_ENVIRONMENTS, setup_logging, validate_config
from src.config_analysis import default_config, get_analysis_config
from src.exceptions import ConfigurationError, DomainError
from src.run_monitor import ExperimentMonitor


def test_default_configuration():
    """デフォルト設定の確認"""
    config = get_analysis_config()
    assert config.environment == "development"
    assert config.statistical.level == 0.05
    assert config.statistical.levels == (0.10, 0.05, 0.025, 0.01)
    assert config.simulation.n == 200
    assert config.simulation.bandwidths == (0.04, 0.08, 0.12)
    assert config.simulation.table_rows == 12
    assert config.numerical.rank_tol == 1e-12
    assert config.numerical.t_clamp < config.numerical.t_max < 1.0


@pytest.mark.parametrize("environment, reps, bridge_reps", [
    ("production", 10000, 2000),
    ("testing", 200, 100),
    ("demo", 100, 50),
    ("development", 2000, 500),
])
def test_environment_presets(environment, reps, bridge_reps):
    """環境別設定の確認"""
    config = get_analysis_config(environment)
    assert environment in KNOWN_ENVIRONMENTS
    assert config.simulation.reps == reps
    assert config.simulation.bridge_reps == bridge_reps


def test_demo_uses_single_bandwidth():
    assert get_analysis_config("demo").simulation.bandwidths == (0.04,)


def test_presets_do_not_leak_into_default():
    """プリセットの適用が既定インスタンスを書き換えない"""
    get_analysis_config("production")
    assert default_config.simulation.reps == 2000
    assert get_analysis_config().simulation.reps == 2000


def test_custom_overrides():
    """カスタム設定の確認（未知のキーは無視）"""
    config = get_analysis_config(custom_overrides={
        "statistical": {"level": 0.01, "unknown_key": 1},
        "simulation": {"n": 500},
        "no_such_section": {"x": 1},
    })
    assert config.statistical.level == 0.01
    assert config.simulation.n == 500
    assert not hasattr(config.statistical, "unknown_key")


def test_level_check():
    config = get_analysis_config()
    assert config.is_valid_level(0.05)
    assert not config.is_valid_level(0.0)
    assert not config.is_valid_level(1.0)


def test_output_paths(tmp_path):
    """出力パス生成の確認（同一設定なら同一パス）"""
    config = get_analysis_config()
    config.output.base_dir = str(tmp_path)
    assert config.output.get_output_path("power_table.tsv") == os.path.join(str(tmp_path), "power_table.tsv")
    assert config.output.get_process_path("w") == os.path.join(str(tmp_path), "w.tsv")
    assert config.output.get_output_path("x.tsv", output_dir="elsewhere") == os.path.join("elsewhere", "x.tsv")


def test_to_dict_is_json_serializable():
    data = get_analysis_config("testing").to_dict()
    assert data["environment"] == "testing"
    assert data["simulation"]["reps"] == 200
    json.dumps(data)


def test_validate_config_accepts_defaults():
    validate_config()


def test_setup_logging_writes_file(tmp_path):
    log_file = str(tmp_path / "logs" / "khmgof.log")
    setup_logging(log_file, level="INFO")
    logging.getLogger("khmgof.test").info("hello")
    root = logging.getLogger()
    for handler in list(root.handlers):
        handler.close()
        root.removeHandler(handler)
    with open(log_file, encoding="utf-8") as f:
        assert "hello" in f.read()


def test_error_hierarchy_exit_codes():
    assert ConfigurationError("x").exit_code == 2
    assert DomainError("x").exit_code == 3
    assert isinstance(DomainError("x"), ValueError)


# ――― 実験モニター ―――
def test_monitor_counts_runs_and_aborts():
    monitor = ExperimentMonitor("unit", total=4, progress_every=2)
    monitor.start()
    monitor.record_replicate()
    monitor.record_replicate()
    monitor.record_abort(3, DomainError("boom"))
    monitor.record_replicate()
    summary = monitor.finish()
    assert summary["replicates_planned"] == 4
    assert summary["replicates_run"] == 4
    assert summary["replicates_aborted"] == 1
    assert summary["abort_fraction"] == pytest.approx(0.25)
    assert summary["aborted_indices"] == [3]
    assert monitor.aborts[0].error_type == "DomainError"

    assert summary["experiment"] == "unit"
    assert monitor.get_session_summary()["replicates_aborted"] == 1


def test_monitor_without_runs_has_zero_abort_fraction():
    assert ExperimentMonitor("empty", total=0).abort_fraction == 0.0


if __name__ == "__main__":
    pytest.main([__file__])
