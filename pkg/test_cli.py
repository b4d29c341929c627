#!/usr/bin/env python3
"""
khmgof CLI と入出力のテスト
終了ステータス、出力ファイル、CSV の解析エラー、経験臨界値表、再実行の再現性
"""

import sys
import os

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.cli import RunConfig, cmd_diagnose, cmd_test, expected_tail_constant, main
from src.core.dist_families import ErrorFamily
from src.core.residuals import Sample
from src.exceptions import ConfigurationError, ParseError
from src.extract.sample_io import (
    CriticalTable,
    iter_header_fields,
    parse_float_list,
    read_sample_csv,
    read_tsv,
    write_sample_csv,
)


def _regression_csv(path, n=200, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 2.0, n)
    y = np.exp(x) + scale * rng.standard_normal(n)
    return write_sample_csv(Sample(x, y), str(path))


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ――― 標本 CSV ―――
def test_sample_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    sample = Sample(rng.standard_normal(50) * 1e-3, rng.standard_normal(50) * 1e5)
    loaded = read_sample_csv(write_sample_csv(sample, str(tmp_path / "s.csv"), header=["seed=1"]))
    assert np.array_equal(loaded.x, sample.x)
    assert np.array_equal(loaded.y, sample.y)


def test_sample_csv_reports_bad_row(tmp_path):
    path = _write(tmp_path / "bad.csv", "x,y\n1,2\n3,abc\n")
    with pytest.raises(ParseError) as exc:
        read_sample_csv(path)
    assert exc.value.line == 3
    assert str(exc.value).startswith("line 3:")


def test_sample_csv_counts_comment_lines(tmp_path):
    path = _write(tmp_path / "bad.csv", "# generated\nx,y\n1,2\nfoo,3\n")
    with pytest.raises(ParseError) as exc:
        read_sample_csv(path)
    assert exc.value.line == 4


def test_sample_csv_requires_header(tmp_path):
    with pytest.raises(ParseError) as exc:
        read_sample_csv(_write(tmp_path / "h.csv", "a,b\n1,2\n"))
    assert exc.value.line == 1
    with pytest.raises(ParseError):
        read_sample_csv(_write(tmp_path / "empty.csv", "x,y\n"))


def test_sample_csv_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        read_sample_csv(str(tmp_path / "nope.csv"))


def test_float_list_parsing():
    assert parse_float_list("0.04, 0.08,0.12") == [0.04, 0.08, 0.12]
    with pytest.raises(ParseError):
        parse_float_list("0.04,x")
    with pytest.raises(ParseError):
        parse_float_list(" , ")


def test_header_fields():
    fields = iter_header_fields(["process=w n=5 family=normal", "config=command=test family=normal"])
    assert fields["process"] == "w"
    assert fields["n"] == "5"
    assert fields["config"] == "command=test family=normal"


# ――― 経験臨界値表 ―――
def test_critical_table_persists(tmp_path):
    path = str(tmp_path / "critical_values.tsv")
    assert len(CriticalTable.load(path)) == 0
    table = CriticalTable()
    table.set("V_hat", 200, 0.04, "normal", 0.05, 1.31, 2000, 7)
    table.set("W", 200, 0.04, "normal", 0.05, 2.2, 2000, 7)
    table.save(path)
    loaded = CriticalTable.load(path)
    assert loaded.lookup("V_hat", 200, 0.04, "normal", 0.05) == 1.31
    assert loaded.lookup("V_hat", 200, 0.08, "normal", 0.05) is None
    with pytest.raises(ConfigurationError):
        loaded.set("W", 200, 0.04, "normal", 0.10, 0.0, 10, 1)


def test_critical_table_refuses_conflicting_value():
    table = CriticalTable()
    table.set("W", 200, 0.04, "normal", 0.05, 2.2, 2000, 7)
    table.set("W", 200, 0.04, "normal", 0.05, 2.2, 2000, 7)
    with pytest.raises(ConfigurationError, match="refusing to overwrite"):
        table.set("W", 200, 0.04, "normal", 0.05, 2.3, 2000, 8)
    assert table.lookup("W", 200, 0.04, "normal", 0.05) == 2.2
    table.set("W", 200, 0.04, "normal", 0.05, 2.3, 4000, 8, replace=True)
    assert table.lookup("W", 200, 0.04, "normal", 0.05) == 2.3
    assert len(table) == 1


# ――― test コマンド ―――
def test_test_command_writes_report_and_paths(tmp_path, capsys):
    csv = _regression_csv(tmp_path / "sample.csv")
    out = tmp_path / "out"
    code = main(["test", "--input", csv, "--family", "normal", "--bandwidth", "0.04", "--out", str(out)])
    assert code == 0
    report = (out / "report.txt").read_text(encoding="utf-8")
    assert report.startswith("# config=command=test input=sample.csv family=normal")
    assert "statistic=W\n" in report
    assert "V_hat_critical_value=none\n" in report
    assert (out / "w.tsv").exists() and (out / "v_hat.tsv").exists()
    header, frame = read_tsv(str(out / "w.tsv"))
    assert iter_header_fields(header)["process"] == "w"
    assert list(frame.columns) == ["x", "value"]
    assert len(frame) == 2 * 200
    assert frame["x"].is_monotonic_increasing
    assert "statistic=W" in capsys.readouterr().out


def test_test_command_with_estimated_scale(tmp_path):
    csv = _regression_csv(tmp_path / "sample.csv", scale=2.0)
    out = tmp_path / "out"
    assert main(["test", "--input", csv, "--scale", "estimate", "--out", str(out)]) == 0
    report = (out / "report.txt").read_text(encoding="utf-8")
    assert "statistic=W_tilde\n" in report
    assert "sigma_hat=" in report
    assert (out / "w_tilde.tsv").exists()


def test_test_command_uses_stored_critical_value(tmp_path):
    csv = _regression_csv(tmp_path / "sample.csv")
    out = tmp_path / "out"
    table = CriticalTable()
    table.set("V_hat", 200, 0.04, "normal", 0.05, 1e-6, 100, 1)
    table.save(str(out / "critical_values.tsv"))
    config = RunConfig(command="test", input_path=csv, output_dir=str(out))
    report = cmd_test(config)
    assert report.extras["V_hat_critical_value"] == repr(1e-6)
    assert report.extras["V_hat_reject"] == "true"


@pytest.mark.parametrize("argv, code", [
    (["test", "--input", "MISSING", "--family", "normal"], 2),
    (["test", "--input", "SMALL", "--family", "normal"], 3),
    (["test", "--input", "SAMPLE", "--family", "t:0"], 2),
    (["test", "--input", "SAMPLE", "--level", "1.5"], 3),
    (["test", "--input", "SAMPLE", "--bandwidth", "-0.1"], 3),
    (["test", "--input", "MALFORMED"], 2),
    (["--env", "staging", "diagnose"], 2),
])
def test_exit_codes(tmp_path, argv, code):
    files = {
        "MISSING": str(tmp_path / "missing.csv"),
        "SMALL": _regression_csv(tmp_path / "small.csv", n=3),
        "SAMPLE": _regression_csv(tmp_path / "sample.csv", n=50),
        "MALFORMED": _write(tmp_path / "malformed.csv", "x,y\n0.1,1.0\n0.2\n"),
    }
    argv = [files.get(a, a) for a in argv] + ["--out", str(tmp_path / "out")] if argv[0] == "test" else argv
    assert main(argv) == code


# ――― simulate コマンド ―――
def test_simulate_is_reproducible(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["simulate", "--n", "30", "--reps", "10", "--bandwidths", "0.3", "--levels", "0.1,0.05",
                "--seed", "7", "--alt-family", "laplace:1", "--alt-weight", "0.5", "--out", str(out)]
        assert main(argv) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert runs[0] == runs[1]
    assert "edf_W_a0.3.tsv" in runs[0]
    assert "edf_V_hat_a0.3.tsv" in runs[0]
    assert "power_table.tsv" in runs[0]
    assert "edf_alt_W_a0.3.tsv" in runs[0]
    assert "edf_alt_V_hat_a0.3.tsv" in runs[0]

    _, power = read_tsv(str(tmp_path / "a" / "power_table.tsv"))
    assert len(power) == 2
    alt_header, alt = read_tsv(str(tmp_path / "a" / "edf_alt_W_a0.3.tsv"))
    assert list(alt.columns) == ["W", "edf"]
    assert alt["edf"].iloc[-1] == 1.0
    assert "alt=0.5*laplace" in iter_header_fields(alt_header)["config"]
    table = CriticalTable.load(str(tmp_path / "a" / "critical_values.tsv"))
    assert len(table) == 4
    assert table.lookup("W", 30, 0.3, "normal", 0.05) is not None


# ――― diagnose コマンド ―――
def test_expected_tail_constants():
    assert expected_tail_constant(ErrorFamily.logistic()) == 4.0
    assert expected_tail_constant(ErrorFamily.laplace(2.0)) == 1.0
    assert expected_tail_constant(ErrorFamily.student_t(3)) == pytest.approx(8.0 / 3.0)


@pytest.mark.parametrize("family, filename", [
    ("normal", "diagnose_normal.tsv"),
    ("logistic", "diagnose_logistic.tsv"),
    ("laplace:1", "diagnose_laplace_1.0.tsv"),
])
def test_diagnose_passes_for_supported_families(tmp_path, family, filename):
    frame = cmd_diagnose(RunConfig(command="diagnose", family=family, output_dir=str(tmp_path)))
    assert frame["passed"].all()
    assert set(frame["check"]) == {"tail_growth", "tail_bounded", "identity"}
    assert [p.name for p in tmp_path.iterdir()] == [filename]
    _, saved = read_tsv(str(tmp_path / filename))
    assert len(saved) == len(frame)


def test_diagnose_flags_degenerate_branch(tmp_path):
    frame = cmd_diagnose(RunConfig(command="diagnose", family="laplace:1", output_dir=str(tmp_path)))
    growth = frame[frame["check"] == "tail_growth"]
    assert (growth["note"] == "degenerate branch").all()
    assert (tmp_path / "diagnose_laplace_1.0.tsv").exists()


def test_diagnose_with_bridge_rows(tmp_path):
    config = RunConfig(command="diagnose", family="logistic", output_dir=str(tmp_path), bridge_check=True,
                       bridge_s=0.99, bridge_reps=50, bridge_grid=1000, seed=3)
    frame = cmd_diagnose(config)
    assert {"bridge_median", "bridge_mean"} <= set(frame["check"])


@pytest.mark.slow
def test_test_command_size_under_null(tmp_path):
    rejects = 0
    for seed in range(100):
        csv = _regression_csv(tmp_path / f"s{seed}.csv", seed=1000 + seed)
        report = cmd_test(RunConfig(command="test", input_path=csv, output_dir=str(tmp_path / f"o{seed}")))
        rejects += int(report.reject)
    assert rejects <= 10


if __name__ == "__main__":
    pytest.main([__file__])
