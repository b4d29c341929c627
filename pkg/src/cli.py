"""
khmgof コマンドラインインターフェース
  test      標本 CSV に対する W_n / W̃_n 検定
  simulate  帰無分布・経験臨界値・検出力表のモンテカルロ実験
  diagnose  Γ の閉形式・恒等式・ブラウン橋の数値診断
"""

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .analysis.monte_carlo_runner import (
    SCALE_MODES,
    BridgeCheckConfig,
    ExperimentConfig,
    MixtureAlternative,
    bridge_divergence_check,
    null_distribution_experiment,
    power_experiment,
    tail_growth_diagnostic,
)
from .config import (
    KHMGOF_ENV,
    KNOWN_ENVIRONMENTS,
    LOG_FILE,
    MAX_WORKERS,
    RESULTS_DIR,
    setup_logging,
    validate_config,
)
from .config_analysis import OutputConfig, get_analysis_config
from .core.dist_families import ErrorFamily, parse_family
from .core.martingale_transform import identity_residual, scale_transform_path, transform_path
from .core.residuals import compute_residuals, estimated_empirical_process, scale_estimate
from .core.sup_statistics import TestReport, build_report, sup_statistic
from .exceptions import ConfigurationError, DomainError, KhmgofError, TailOverflowError
from .extract.sample_io import (
    CriticalTable,
    parse_float_list,
    read_sample_csv,
    write_process_tsv,
    write_text_report,
    write_tsv,
)

logger = logging.getLogger(__name__)

COMMANDS = ("test", "simulate", "diagnose")
CRITICAL_TABLE_NAME = "critical_values.tsv"
IDENTITY_GRID = (0.001, 0.995, 50)
IDENTITY_TOL = 1e-6
# 正規分布の収束は 2 + O(1/x²) と遅く、t = 0.9999 でも約 5% 上に残る
TAIL_LIMIT_RTOL = 0.06


@dataclass
class RunConfig:
    """1 回のコマンド実行の設定"""
    command: str
    input_path: Optional[str] = None
    family: str = "normal"
    bandwidth: float = 0.04
    level: float = 0.05
    scale_mode: str = "known"
    seed: int = 0
    reps: Optional[int] = None
    n: Optional[int] = None
    output_dir: str = RESULTS_DIR
    bandwidths: Tuple[float, ...] = (0.04,)
    levels: Tuple[float, ...] = (0.10, 0.05, 0.025, 0.01)
    alt_family: Optional[str] = None
    alt_weight: float = 0.2
    error_scale: float = 1.0
    workers: int = 1
    bridge_check: bool = False
    bridge_s: float = 1.0 - 1e-4
    bridge_reps: int = 500
    bridge_grid: int = 10000
    environment: str = "development"

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        parse_family(self.family)
        if self.scale_mode not in SCALE_MODES:
            raise ConfigurationError(f"scale mode must be one of {SCALE_MODES} (got {self.scale_mode!r})")
        if not (0.0 < self.level < 1.0):
            raise DomainError(f"level must lie in (0, 1) (got {self.level!r})")
        if self.command == "test":
            if not self.input_path:
                raise ConfigurationError("test requires --input")
            if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
                raise DomainError(f"bandwidth must be positive (got {self.bandwidth!r})")
        if self.command == "simulate":
            if self.reps is None or self.n is None:
                raise ConfigurationError("simulate requires --reps and --n")
            if self.alt_family is not None:
                parse_family(self.alt_family)

    @property
    def output(self) -> OutputConfig:
        return OutputConfig(base_dir=self.output_dir)

    @property
    def critical_table_path(self) -> str:
        return self.output.get_output_path(CRITICAL_TABLE_NAME)

    def canonical(self) -> str:
        family = parse_family(self.family).spec
        if self.command == "test":
            return (f"command=test input={os.path.basename(self.input_path or '')} family={family} "
                    f"bandwidth={self.bandwidth!r} level={self.level!r} scale={self.scale_mode}")
        if self.command == "diagnose":
            text = f"command=diagnose family={family}"
            if self.bridge_check:
                text += f" bridge_s={self.bridge_s!r} bridge_reps={self.bridge_reps} bridge_grid={self.bridge_grid} seed={self.seed}"
            return text
        return f"command=simulate {self.experiment_config().canonical()}"

    def experiment_config(self) -> ExperimentConfig:
        alternative = None
        if self.alt_family is not None:
            alternative = MixtureAlternative(weight=self.alt_weight, contaminant=self.alt_family)
        return ExperimentConfig(n=self.n, reps=self.reps, bandwidths=self.bandwidths, null_family=self.family,
                                alternative=alternative, master_seed=self.seed, levels=self.levels,
                                error_scale=self.error_scale, scale_mode=self.scale_mode, workers=self.workers)


# ――― test ―――
def cmd_test(config: RunConfig) -> TestReport:
    """標本 CSV → 残差 → W_n (known) / W̃_n (estimate) → レポートと経路 TSV"""
    family = parse_family(config.family)
    sample = read_sample_csv(config.input_path)
    min_n = get_analysis_config(config.environment).statistical.min_sample_size
    if sample.n < min_n:
        raise DomainError(f"sample size {sample.n} is below the minimum of {min_n} for a test")

    residuals = compute_residuals(sample, config.bandwidth)
    sigma_hat = None
    try:
        if config.scale_mode == "known":
            standardized = residuals.residuals
            path = transform_path(residuals, family)
        else:
            sigma_hat = scale_estimate(residuals, family)
            standardized = residuals.residuals / sigma_hat
            path = scale_transform_path(residuals, sigma_hat, family)
    except TailOverflowError as e:
        hint = ("reduce the extreme residual or rerun with --scale estimate" if config.scale_mode == "known"
                else "reduce the extreme residual")
        raise TailOverflowError(e.point, f"{e}; {hint}") from e

    report = build_report(path, config.level, bandwidth=config.bandwidth, seed=config.seed)
    if sigma_hat is not None:
        report.extras["sigma_hat"] = repr(sigma_hat)

    v_path = estimated_empirical_process(standardized, family)
    table = CriticalTable.load(config.critical_table_path)
    v_crit = table.lookup("V_hat", sample.n, config.bandwidth, family.spec, config.level)
    v_value = sup_statistic(v_path)
    report.extras["V_hat"] = repr(v_value)
    report.extras["V_hat_critical_value"] = "none" if v_crit is None else repr(v_crit)
    report.extras["V_hat_reject"] = "none" if v_crit is None else str(v_value > v_crit).lower()

    canonical = config.canonical()
    out = config.output
    write_text_report(report.to_text(), out.get_output_path(out.report_name), canonical)
    write_process_tsv(path, out.get_process_path(path.name), canonical)
    write_process_tsv(v_path, out.get_process_path(v_path.name), canonical)
    logger.info(f"✅ {report.statistic_name}={report.value:.4f} p={report.p_value:.4f} reject={report.reject}")
    return report


# ――― simulate ―――
def _edf_file(statistic: str, bandwidth: float, prefix: str = "edf") -> str:
    return f"{prefix}_{statistic}_a{bandwidth!r}.tsv"


def cmd_simulate(config: RunConfig) -> Dict[str, str]:
    """帰無分布（と対立仮説があれば検出力表）を計算し TSV と経験臨界値表を書く"""
    experiment = config.experiment_config()
    null_config = replace(experiment, alternative=None)
    header = [f"config={experiment.canonical()}"]
    out = config.output
    written: Dict[str, str] = {}

    null = null_distribution_experiment(null_config)
    for a in experiment.bandwidths:
        for edf in (null.edf_W[a], null.edf_V[a]):
            written[f"edf_{edf.name}_{a!r}"] = write_tsv(edf.to_frame(), out.get_output_path(_edf_file(edf.name, a)),
                                                         header)
    ks = pd.DataFrame({"bandwidth": list(null.ks_distance_W_to_limit),
                       "ks_distance": list(null.ks_distance_W_to_limit.values())})
    written["ks_distance"] = write_tsv(ks, out.get_output_path("null_ks_distance.tsv"), header)
    written["critical_values"] = write_tsv(null.critical_values, out.get_output_path("null_critical_values.tsv"),
                                           header)
    written["limiting_size"] = write_tsv(null.limiting_size, out.get_output_path("null_limiting_size.tsv"), header)

    table = CriticalTable.load(config.critical_table_path)
    added = table.update_from_frame(null.critical_values, n=experiment.n, family=experiment.null_family,
                                    reps=null.replicates_used, seed=experiment.master_seed)
    written["critical_table"] = table.save(config.critical_table_path)
    logger.info(f"📋 critical table: {added} entries updated ({len(table)} total)")

    if experiment.alternative is not None:
        power = power_experiment(experiment, null_result=null)
        written["power_table"] = write_tsv(power.to_frame(), out.get_output_path("power_table.tsv"), header)
        for a in experiment.bandwidths:
            for edf in (power.edf_W[a], power.edf_V[a]):
                written[f"edf_alt_{edf.name}_{a!r}"] = write_tsv(
                    edf.to_frame(), out.get_output_path(_edf_file(edf.name, a, prefix="edf_alt")), header)
    return written


# ――― diagnose ―――
def expected_tail_constant(family: ErrorFamily) -> float:
    """(1-t)·γᵀΓ_t⁻¹γ の t → 1 での値"""
    if family.kind == "logistic":
        return 4.0
    if family.kind == "laplace":
        return 1.0
    if family.kind == "normal":
        return 2.0
    return 2.0 * (family.k + 1) / family.k


def _check_row(check: str, parameter: str, measured: float, expected: Optional[float], tolerance: Optional[float],
               passed: bool, note: str = "") -> Dict:
    return {"check": check, "parameter": parameter, "measured": measured,
            "expected": np.nan if expected is None else expected,
            "tolerance": np.nan if tolerance is None else tolerance,
            "passed": bool(passed), "note": note}


def cmd_diagnose(config: RunConfig) -> pd.DataFrame:
    """裾の増大・恒等式・（任意で）ブラウン橋の発散チェックの pass/fail 表"""
    family = parse_family(config.family)
    rows: List[Dict] = []

    growth = tail_growth_diagnostic(family)
    limit = expected_tail_constant(family)
    exact = family.kind in ("logistic", "laplace")
    last_t = growth.table["t"].iloc[-1]
    for rec in growth.table.itertuples(index=False):
        note = "degenerate branch" if rec.rank_deficient else ""
        if exact:
            rows.append(_check_row("tail_growth", f"t={rec.t!r}", rec.scaled_norm, limit, 1e-8,
                                   abs(rec.scaled_norm - limit) <= 1e-8, note))
        elif rec.t == last_t:
            rows.append(_check_row("tail_growth", f"t={rec.t!r}", rec.scaled_norm, limit, TAIL_LIMIT_RTOL * limit,
                                   abs(rec.scaled_norm - limit) <= TAIL_LIMIT_RTOL * limit, note))
        else:
            rows.append(_check_row("tail_growth", f"t={rec.t!r}", rec.scaled_norm, None, None,
                                   math.isfinite(rec.scaled_norm), note))
    rows.append(_check_row("tail_bounded", "last three t", float(growth.bounded), 1.0, None, growth.bounded))

    lo, hi, count = IDENTITY_GRID
    x = family.quantile(np.linspace(lo, hi, count))
    residual = np.abs(identity_residual(family, x))
    for k in range(residual.shape[1]):
        worst = float(residual[:, k].max())
        rows.append(_check_row("identity", f"coordinate={k + 1}", worst, 0.0, IDENTITY_TOL, worst < IDENTITY_TOL))

    if config.bridge_check:
        result = bridge_divergence_check(BridgeCheckConfig(s=config.bridge_s, reps=config.bridge_reps,
                                                           grid=config.bridge_grid, seed=config.seed))
        rows.append(_check_row("bridge_median", f"s={config.bridge_s!r}", result.median_ratio, 1.0, None,
                               0.65 <= result.median_ratio <= 1.2, f"iqr={result.iqr!r}"))
        rows.append(_check_row("bridge_mean", f"s={config.bridge_s!r}", result.mean_ratio, result.expected_ratio,
                               0.2, 0.8 <= result.mean_ratio <= 1.2))

    frame = pd.DataFrame(rows, columns=["check", "parameter", "measured", "expected", "tolerance", "passed", "note"])
    name = f"diagnose_{family.spec.replace(':', '_')}.tsv"
    write_tsv(frame, config.output.get_output_path(name), [f"config={config.canonical()}"])
    failed = frame.loc[~frame["passed"], "check"].tolist()
    if failed:
        logger.warning(f"⚠️ diagnose {family.spec}: failed checks {failed}")
    else:
        logger.info(f"✅ diagnose {family.spec}: all {len(frame)} checks passed")
    return frame


# ――― 引数解析 ―――
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="khmgof", description="Distribution-free goodness-of-fit tests "
                                                                "for regression errors")
    parser.add_argument("--env", default=KHMGOF_ENV, help="configuration preset")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test the error distribution of a sample")
    p.add_argument("--input", required=True)
    p.add_argument("--family", default="normal")
    p.add_argument("--bandwidth", type=float, default=0.04)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--scale", choices=SCALE_MODES, default="known")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=RESULTS_DIR)

    p = sub.add_parser("simulate", help="Monte Carlo null distribution and power table")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--alt-family", default=None)
    p.add_argument("--alt-weight", type=float, default=None)
    p.add_argument("--bandwidths", default=None)
    p.add_argument("--levels", default=None)
    p.add_argument("--scale", choices=SCALE_MODES, default="known")
    p.add_argument("--error-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=MAX_WORKERS)
    p.add_argument("--out", default=RESULTS_DIR)

    p = sub.add_parser("diagnose", help="numerical diagnostics for a family")
    p.add_argument("--family", default="normal")
    p.add_argument("--bridge-check", action="store_true")
    p.add_argument("--bridge-s", type=float, default=None)
    p.add_argument("--bridge-reps", type=int, default=None)
    p.add_argument("--bridge-grid", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=RESULTS_DIR)
    return parser


def _pick(value, default):
    return default if value is None else value


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """引数と環境プリセットから RunConfig を組み立てる"""
    if args.env not in KNOWN_ENVIRONMENTS:
        raise ConfigurationError(f"--env must be one of {', '.join(KNOWN_ENVIRONMENTS)} (got {args.env!r})")
    preset = get_analysis_config(args.env)
    sim = preset.simulation
    seed = _pick(getattr(args, "seed", None), sim.master_seed)
    config = RunConfig(command=args.command, seed=seed, output_dir=args.out, environment=args.env,
                       level=preset.statistical.level, levels=tuple(preset.statistical.levels))

    if args.command == "test":
        config.input_path = args.input
        config.family = args.family
        config.bandwidth = args.bandwidth
        config.level = _pick(args.level, preset.statistical.level)
        config.scale_mode = args.scale
    elif args.command == "simulate":
        config.n = _pick(args.n, sim.n)
        config.reps = _pick(args.reps, sim.reps)
        config.family = _pick(args.family, sim.null_family)
        config.alt_family = args.alt_family
        config.alt_weight = _pick(args.alt_weight, sim.alt_weight)
        config.bandwidths = tuple(parse_float_list(args.bandwidths, "bandwidths")) if args.bandwidths \
            else tuple(sim.bandwidths)
        config.levels = tuple(parse_float_list(args.levels, "levels")) if args.levels else config.levels
        config.scale_mode = args.scale
        config.error_scale = args.error_scale
        config.workers = args.workers
    else:
        config.family = args.family
        config.bridge_check = args.bridge_check
        config.bridge_s = _pick(args.bridge_s, sim.bridge_s)
        config.bridge_reps = _pick(args.bridge_reps, sim.bridge_reps)
        config.bridge_grid = _pick(args.bridge_grid, sim.bridge_grid)
    return config


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], object]] = {
    "test": cmd_test,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """終了ステータスを返す（0 成功、2 解析・設定、3 定義域、4 実験失敗）"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        validate_config()
        setup_logging(LOG_FILE)
        config = run_config_from_args(args)
        config.validate()
        os.makedirs(config.output_dir, exist_ok=True)
        logger.info(f"🚀 khmgof {config.command}: {config.canonical()}")
        result = COMMAND_HANDLERS[config.command](config)
        if isinstance(result, TestReport):
            sys.stdout.write(result.to_text())
        return 0
    except KhmgofError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"khmgof: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
