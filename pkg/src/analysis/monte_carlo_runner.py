"""
シード付きモンテカルロ実験
帰無分布の再現・検出力表・ブラウン橋の発散チェック・裾の増大診断

回帰モデルは Y = e^X + σe, X ~ U[0,2] に固定。各レプリケートの乱数列は
(master_seed, replicate_index) から Philox の SeedSequence 分岐で決まるので、
結果は並列度や実行順序に依存しない。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, stats

from ..config_analysis import default_config
from ..core.dist_families import ErrorFamily, parse_family
from ..core.martingale_transform import KernelGrid, gamma_matrix, scale_transform_path, transform_path, weighted_norm
from ..core.residuals import Sample, compute_residuals, estimated_empirical_process, scale_estimate
from ..core.sup_statistics import critical_value, sup_abs_bm_cdf, sup_statistic
from ..exceptions import ConfigurationError, DomainError, ExperimentFailure, KhmgofError
from ..run_monitor import ExperimentMonitor

logger = logging.getLogger(__name__)

SCALE_MODES = ("known", "estimate")
TAIL_GROWTH_POINTS = (0.5, 0.9, 0.99, 0.999, 0.9999)
BRIDGE_PROFILE_POINTS = (0.99, 0.999, 0.9999)

# 離散監視の連続補正 -ζ(1/2)/√(2π)
_CONTINUITY_SHIFT = 0.5826
# 幾何格子の隣接ギャップ比の上限（1-t が e 倍縮む間に約 100 点）
_BRIDGE_GAP_RATIO = 1.01


def replicate_rng(master_seed: int, replicate_index: int) -> np.random.Generator:
    """レプリケート専用の乱数生成器"""
    seq = np.random.SeedSequence(master_seed, spawn_key=(replicate_index,))
    return np.random.Generator(np.random.Philox(seq))


# ――― 実験設定 ―――
@dataclass(frozen=True)
class MixtureAlternative:
    """混合対立仮説 F₁ = (1 - weight) F₀ + weight Ψ"""
    weight: float
    contaminant: str

    def __post_init__(self):
        if not (0.0 <= float(self.weight) <= 1.0):
            raise ConfigurationError(f"mixture weight must lie in [0, 1] (got {self.weight!r})")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "contaminant", parse_family(self.contaminant).spec)

    @property
    def family(self) -> ErrorFamily:
        return parse_family(self.contaminant)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    モンテカルロ実験の設計

    scale_mode が known なら誤差の尺度 error_scale を既知として W_n、
    estimate なら MAD 型の σ̂ で標準化した W̃_n を計算する。
    """
    n: int = default_config.simulation.n
    reps: int = default_config.simulation.reps
    bandwidths: Tuple[float, ...] = (0.04,)
    null_family: str = default_config.simulation.null_family
    alternative: Optional[MixtureAlternative] = None
    master_seed: int = default_config.simulation.master_seed
    levels: Tuple[float, ...] = default_config.statistical.levels
    error_scale: float = 1.0
    scale_mode: str = "known"
    workers: int = 1
    max_abort_fraction: float = default_config.simulation.max_abort_fraction

    def __post_init__(self):
        object.__setattr__(self, "bandwidths", tuple(float(a) for a in self.bandwidths))
        object.__setattr__(self, "levels", tuple(float(lv) for lv in self.levels))
        object.__setattr__(self, "null_family", parse_family(self.null_family).spec)

        errors = []
        if self.n < 1:
            errors.append(f"n must be at least 1 (got {self.n})")
        if self.reps < 1:
            errors.append(f"reps must be at least 1 (got {self.reps})")
        if not self.bandwidths:
            errors.append("at least one bandwidth is required")
        if any(not (math.isfinite(a) and a > 0) for a in self.bandwidths):
            errors.append(f"bandwidths must be positive: {self.bandwidths}")
        # 水準 1 は「常に棄却」の端点として許す
        if any(not (0.0 < lv <= 1.0) for lv in self.levels):
            errors.append(f"levels must lie in (0, 1]: {self.levels}")
        if not (math.isfinite(self.error_scale) and self.error_scale > 0):
            errors.append(f"error_scale must be positive (got {self.error_scale!r})")
        if self.scale_mode not in SCALE_MODES:
            errors.append(f"scale_mode must be one of {SCALE_MODES} (got {self.scale_mode!r})")
        if self.workers < 1:
            errors.append(f"workers must be at least 1 (got {self.workers})")
        if not (0.0 <= self.max_abort_fraction < 1.0):
            errors.append(f"max_abort_fraction must lie in [0, 1) (got {self.max_abort_fraction!r})")
        if self.master_seed < 0:
            errors.append(f"master_seed must be nonnegative (got {self.master_seed})")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def family(self) -> ErrorFamily:
        return parse_family(self.null_family)

    @property
    def statistic_name(self) -> str:
        return "W" if self.scale_mode == "known" else "W_tilde"

    def design_key(self) -> Tuple:
        """帰無分布を共有できる設計の同値類（シード・反復数・対立仮説は含まない）"""
        return (self.n, self.bandwidths, self.null_family, self.error_scale, self.scale_mode)

    def canonical(self) -> str:
        """再実行に十分な正準文字列（workers は結果を変えないので含めない）"""
        alt = "none"
        if self.alternative is not None:
            alt = f"{self.alternative.weight!r}*{self.alternative.contaminant}"
        return " ".join([
            f"n={self.n}",
            f"reps={self.reps}",
            "bandwidths=" + ",".join(repr(a) for a in self.bandwidths),
            f"null={self.null_family}",
            f"alt={alt}",
            f"seed={self.master_seed}",
            "levels=" + ",".join(repr(lv) for lv in self.levels),
            f"error_scale={self.error_scale!r}",
            f"scale_mode={self.scale_mode}",
        ])


# ――― 標本生成 ―――
@dataclass(frozen=True, eq=False)
class ModelDraw:
    """1 レプリケートの標本と、混合成分 Ψ から引いた誤差の目印"""
    sample: Sample
    contaminated: np.ndarray


def replicate_draw(config: ExperimentConfig, replicate_index: int) -> ModelDraw:
    """
    X → 混合の目印 → F₀ の誤差 → Ψ の誤差 の順に引く

    帰無と対立で同じシードを使えば X と F₀ の誤差が共通になる（共通乱数）。
    """
    if not (0 <= replicate_index < config.reps):
        raise ConfigurationError(f"replicate index {replicate_index} outside [0, {config.reps})")
    rng = replicate_rng(config.master_seed, replicate_index)
    n = config.n
    x = rng.uniform(0.0, 2.0, size=n)
    weight = config.alternative.weight if config.alternative is not None else 0.0
    contaminated = rng.random(n) < weight
    errors = config.family.sample(rng, n)
    if config.alternative is not None:
        errors = np.where(contaminated, config.alternative.family.sample(rng, n), errors)
    y = np.exp(x) + config.error_scale * errors
    return ModelDraw(sample=Sample(x, y), contaminated=contaminated)


def sample_model(config: ExperimentConfig, replicate_index: int) -> Sample:
    return replicate_draw(config, replicate_index).sample


def _replicate_statistics(config: ExperimentConfig, replicate_index: int, family: ErrorFamily,
                          kernel: KernelGrid) -> np.ndarray:
    """バンド幅ごとの (V̂_n, W_n or W̃_n)"""
    sample = sample_model(config, replicate_index)
    out = np.empty((len(config.bandwidths), 2))
    for j, a in enumerate(config.bandwidths):
        e = compute_residuals(sample, a).residuals
        if config.scale_mode == "known":
            standardized = e / config.error_scale
            w_path = transform_path(standardized, family, kernel=kernel)
        else:
            sigma_hat = scale_estimate(e, family)
            standardized = e / sigma_hat
            w_path = scale_transform_path(e, sigma_hat, family, kernel=kernel)
        out[j, 0] = sup_statistic(estimated_empirical_process(standardized, family))
        out[j, 1] = sup_statistic(w_path)
    return out


def _run_replicates(config: ExperimentConfig, experiment: str) -> Tuple[np.ndarray, Dict]:
    """
    全レプリケートを実行し (reps, バンド幅数, 2) の配列を返す（中断分は NaN）

    パイプライン例外は該当レプリケートだけを中断して記録する。
    中断率が max_abort_fraction を超えたら実験全体を失敗とする。
    """
    family = config.family
    kernel = KernelGrid.build(family, scale=config.scale_mode == "estimate")
    monitor = ExperimentMonitor(experiment, config.reps,
                                progress_every=default_config.processing.progress_every, logger=logger)
    monitor.start()
    logger.info(f"config: {config.canonical()}")

    def run_one(index: int) -> Optional[np.ndarray]:
        try:
            values = _replicate_statistics(config, index, family, kernel)
        except KhmgofError as e:
            monitor.record_abort(index, e)
            return None
        monitor.record_replicate()
        return values

    results = np.full((config.reps, len(config.bandwidths), 2), np.nan)
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        # map は投入順に結果を返すので、集約は replicate_index 順
        for index, values in enumerate(executor.map(run_one, range(config.reps))):
            if values is not None:
                results[index] = values

    summary = monitor.finish()
    if summary["abort_fraction"] > config.max_abort_fraction:
        raise ExperimentFailure(
            f"{experiment}: {summary['replicates_aborted']} of {config.reps} replicates aborted "
            f"(limit {config.max_abort_fraction:.2%})"
        )
    return results, summary


# ――― 経験分布 ―――
@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """統計量の経験分布関数（右連続の階段関数）"""
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        v = np.sort(v[np.isfinite(v)])
        if v.size == 0:
            raise DomainError(f"empirical distribution {self.name!r} has no finite values")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_steps(self) -> int:
        return int(np.unique(self.values).shape[0])

    def __call__(self, x):
        out = np.searchsorted(self.values, x, side="right") / self.n
        return out if np.ndim(x) else float(out)

    def quantile(self, q: float) -> float:
        """F̂(v) ≥ q となる最小の標本値"""
        if not (0.0 <= q <= 1.0):
            raise DomainError(f"quantile order must lie in [0, 1] (got {q!r})")
        idx = max(math.ceil(q * self.n - 1e-9) - 1, 0)
        return float(self.values[idx])

    def critical_value(self, level: float) -> float:
        """経験臨界値（1 - level 分位点、水準 1 では 0）"""
        if level >= 1.0:
            return 0.0
        return self.quantile(1.0 - level)

    def rejection_rate(self, threshold: float) -> float:
        return float(np.mean(self.values > threshold))

    def to_frame(self) -> pd.DataFrame:
        """跳躍点と累積確率の 2 列"""
        u, c = np.unique(self.values, return_counts=True)
        return pd.DataFrame({self.name: u, "edf": np.cumsum(c) / self.n})


# ――― 帰無分布 ―――
@dataclass
class NullDistributionResult:
    """帰無仮説下の V̂_n・W_n（W̃_n）の経験分布と極限法則との比較"""
    config: ExperimentConfig
    edf_W: Dict[float, EmpiricalDistribution]
    edf_V: Dict[float, EmpiricalDistribution]
    ks_distance_W_to_limit: Dict[float, float]
    critical_values: pd.DataFrame
    limiting_size: pd.DataFrame
    replicates_used: int
    session: Dict = field(default_factory=dict)

    def critical(self, statistic: str, bandwidth: float, level: float) -> float:
        edf = self.edf_V if statistic == "V_hat" else self.edf_W
        return edf[float(bandwidth)].critical_value(level)


def limiting_law_size(w_values: np.ndarray, levels: Sequence[float]) -> pd.DataFrame:
    """極限法則の臨界値での経験棄却率（水準 1 は除く）"""
    w = np.asarray(w_values, dtype=float)
    w = w[np.isfinite(w)]
    rows = []
    for lv in levels:
        if lv >= 1.0:
            continue
        cv = critical_value(lv)
        rate = float(np.mean(w > cv))
        rows.append({
            "level": lv,
            "critical_value": cv,
            "rejection_rate": rate,
            "mc_se": math.sqrt(lv * (1.0 - lv) / w.size),
            "reps": int(w.size),
        })
    return pd.DataFrame(rows, columns=["level", "critical_value", "rejection_rate", "mc_se", "reps"])


def null_distribution_experiment(config: ExperimentConfig) -> NullDistributionResult:
    """
    帰無仮説下で reps 回パイプラインを回す

    V̂_n と W_n は同じレプリケートから計算する。W_n の経験分布と sup|b| の分布との
    Kolmogorov 距離、各水準の経験臨界値、極限臨界値での棄却率を返す。
    """
    if config.alternative is not None:
        raise ConfigurationError("null distribution experiment takes no alternative")
    results, summary = _run_replicates(config, "null_distribution")
    name = config.statistic_name

    edf_W, edf_V, ks = {}, {}, {}
    crit_rows, size_frames = [], []
    for j, a in enumerate(config.bandwidths):
        edf_V[a] = EmpiricalDistribution("V_hat", results[:, j, 0])
        edf_W[a] = EmpiricalDistribution(name, results[:, j, 1])
        ks[a] = float(stats.kstest(edf_W[a].values, sup_abs_bm_cdf).statistic)
        logger.info(f"📊 a={a}: KS distance of {name} to sup|b| law = {ks[a]:.4f}")
        for lv in config.levels:
            crit_rows.append({"statistic": "V_hat", "bandwidth": a, "level": lv,
                              "critical_value": edf_V[a].critical_value(lv)})
            crit_rows.append({"statistic": name, "bandwidth": a, "level": lv,
                              "critical_value": edf_W[a].critical_value(lv)})
        size = limiting_law_size(edf_W[a].values, config.levels)
        size.insert(0, "bandwidth", a)
        size_frames.append(size)

    return NullDistributionResult(
        config=config,
        edf_W=edf_W,
        edf_V=edf_V,
        ks_distance_W_to_limit=ks,
        critical_values=pd.DataFrame(crit_rows, columns=["statistic", "bandwidth", "level", "critical_value"]),
        limiting_size=pd.concat(size_frames, ignore_index=True),
        replicates_used=int(np.isfinite(results[:, 0, 1]).sum()),
        session=summary,
    )


# ――― 検出力 ―――
@dataclass
class PowerRow:
    bandwidth: float
    level: float
    power_V: float
    power_W: float
    se_V: float
    se_W: float
    critical_V: float
    critical_W: float


@dataclass
class PowerTable:
    """(バンド幅, 水準) ごとの V̂_n と W_n の経験検出力と、対立仮説下の統計量の経験分布"""
    rows: List[PowerRow]
    reps: int
    statistic_name: str = "W"
    config_string: str = ""
    edf_W: Dict[float, EmpiricalDistribution] = field(default_factory=dict)
    edf_V: Dict[float, EmpiricalDistribution] = field(default_factory=dict)

    def lookup(self, bandwidth: float, level: float) -> Optional[PowerRow]:
        for row in self.rows:
            if math.isclose(row.bandwidth, bandwidth) and math.isclose(row.level, level):
                return row
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows],
                            columns=["bandwidth", "level", "power_V", "power_W", "se_V", "se_W",
                                     "critical_V", "critical_W"])


def _mc_se(p: float, reps: int) -> float:
    return math.sqrt(p * (1.0 - p) / reps)


def power_experiment(config: ExperimentConfig,
                     null_result: Optional[NullDistributionResult] = None) -> PowerTable:
    """
    混合対立仮説下の経験検出力

    臨界値は同じ設計の帰無分布から取る。null_result が無ければ同じシードで先に
    帰無実験を回す（X と F₀ の誤差は対立側と共通）。
    """
    if config.alternative is None:
        raise ConfigurationError("power experiment needs a mixture alternative")
    null_config = replace(config, alternative=None)
    if null_result is None:
        null_result = null_distribution_experiment(null_config)
    elif null_result.config.design_key() != null_config.design_key():
        raise ConfigurationError("null distribution was computed for a different design")

    results, _ = _run_replicates(config, "power_experiment")
    rows = []
    edf_W, edf_V = {}, {}
    for j, a in enumerate(config.bandwidths):
        v_alt = results[:, j, 0]
        w_alt = results[:, j, 1]
        ok = np.isfinite(v_alt) & np.isfinite(w_alt)
        used = int(ok.sum())
        edf_V[a] = EmpiricalDistribution("V_hat", v_alt[ok])
        edf_W[a] = EmpiricalDistribution(config.statistic_name, w_alt[ok])
        for lv in config.levels:
            cv_v = null_result.critical("V_hat", a, lv)
            cv_w = null_result.critical(config.statistic_name, a, lv)
            p_v = float(np.mean(v_alt[ok] > cv_v))
            p_w = float(np.mean(w_alt[ok] > cv_w))
            rows.append(PowerRow(bandwidth=a, level=lv, power_V=p_v, power_W=p_w,
                                 se_V=_mc_se(p_v, used), se_W=_mc_se(p_w, used),
                                 critical_V=cv_v, critical_W=cv_w))
            logger.info(f"📈 a={a} level={lv}: power V_hat={p_v:.4f} {config.statistic_name}={p_w:.4f}")
    used_total = int(np.isfinite(results[:, 0, 1]).sum())
    return PowerTable(rows=rows, reps=used_total, statistic_name=config.statistic_name,
                      config_string=config.canonical(), edf_W=edf_W, edf_V=edf_V)


# ――― ブラウン橋の発散チェック ―――
@dataclass(frozen=True)
class BridgeCheckConfig:
    """
    ブラウン橋 u の正規化積分 ∫₀ˢ u²/(1-t)² dt / (-ln(1-s)) のシミュレーション設定

    格子は 1 - t_j = (1-s)^{j/(grid-1)} の幾何格子。隣接ギャップ比が 1.01 以下
    （1-t が e 倍縮む間に約 100 点）でなければ設定エラー。
    """
    s: float = default_config.simulation.bridge_s
    reps: int = default_config.simulation.bridge_reps
    grid: int = default_config.simulation.bridge_grid
    seed: int = default_config.simulation.master_seed

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise ConfigurationError(f"bridge evaluation point must lie in (0, 1) (got {self.s!r})")
        if self.reps < 1:
            raise ConfigurationError(f"bridge reps must be at least 1 (got {self.reps})")
        if self.grid < 2:
            raise ConfigurationError(f"bridge grid needs at least 2 points (got {self.grid})")
        needed = math.log(1.0 / (1.0 - self.s)) / math.log(_BRIDGE_GAP_RATIO)
        if self.grid - 1 < needed:
            raise ConfigurationError(
                f"bridge grid of {self.grid} points does not resolve 1-s={1.0 - self.s!r}; "
                f"need at least {math.ceil(needed) + 1}"
            )

    def time_grid(self) -> np.ndarray:
        j = np.arange(self.grid) / (self.grid - 1)
        t = 1.0 - (1.0 - self.s) ** j
        t[0], t[-1] = 0.0, self.s
        return t


@dataclass
class BridgeCheckResult:
    s: float
    median_ratio: float
    iqr: float
    mean_ratio: float
    expected_ratio: float
    ratios: np.ndarray


BridgeSampler = Callable[[np.random.Generator, np.ndarray, int], np.ndarray]


def simulate_bridges(rng: np.random.Generator, t: np.ndarray, reps: int) -> np.ndarray:
    """格子 t（t[0] = 0）上のブラウン橋 u(t) = W(t) - t W(1) を reps 本"""
    dt = np.diff(t)
    increments = rng.standard_normal((reps, dt.shape[0])) * np.sqrt(dt)[None, :]
    w = np.concatenate([np.zeros((reps, 1)), np.cumsum(increments, axis=1)], axis=1)
    w_one = w[:, -1] + math.sqrt(1.0 - t[-1]) * rng.standard_normal(reps)
    return w - t[None, :] * w_one[:, None]


def normalized_bridge_integral(u: np.ndarray, t: np.ndarray) -> np.ndarray:
    """台形則による ∫₀ˢ u²/(1-t)² dt / (-ln(1-s))（s = t[-1]）"""
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    integral = integrate.trapezoid(u ** 2 / (1.0 - t) ** 2, t, axis=-1)
    return integral / -math.log1p(-t[-1])


def compensator_variance(tau: float) -> float:
    """∫₀^τ z/(1+z)² dz = ln(1+τ) + 1/(1+τ) - 1"""
    return math.log1p(tau) + 1.0 / (1.0 + tau) - 1.0


def compensator_variance_quad(tau: float) -> float:
    """compensator_variance の求積による検算"""
    value, _ = integrate.quad(lambda z: z / (1.0 + z) ** 2, 0.0, tau, epsabs=1e-12, epsrel=1e-10, limit=200)
    return value


def expected_bridge_ratio(s: float) -> float:
    """E[∫₀ˢ u²/(1-t)² dt] / (-ln(1-s))、τ = s/(1-s)"""
    if not (0.0 < s < 1.0):
        raise DomainError(f"s must lie in (0, 1) (got {s!r})")
    tau = s / (1.0 - s)
    return compensator_variance(tau) / math.log1p(tau)


def _bridge_ratios(config: BridgeCheckConfig, t: np.ndarray, cuts: Sequence[int],
                   sampler: BridgeSampler, chunk: int = 250) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    ratios = np.empty((len(cuts), config.reps))
    for start in range(0, config.reps, chunk):
        m = min(chunk, config.reps - start)
        u = np.asarray(sampler(rng, t, m), dtype=float)
        for k, cut in enumerate(cuts):
            ratios[k, start:start + m] = normalized_bridge_integral(u[:, :cut + 1], t[:cut + 1])
    return ratios


def _summarize_ratios(s: float, ratios: np.ndarray) -> BridgeCheckResult:
    q1, med, q3 = np.quantile(ratios, [0.25, 0.5, 0.75])
    return BridgeCheckResult(s=s, median_ratio=float(med), iqr=float(q3 - q1),
                             mean_ratio=float(np.mean(ratios)), expected_ratio=expected_bridge_ratio(s),
                             ratios=ratios)


def bridge_divergence_check(config: BridgeCheckConfig,
                            sampler: Optional[BridgeSampler] = None) -> BridgeCheckResult:
    """正規化積分の中央値・四分位範囲・平均（s → 1 で 1 に近づく）"""
    t = config.time_grid()
    ratios = _bridge_ratios(config, t, [t.shape[0] - 1], sampler or simulate_bridges)[0]
    result = _summarize_ratios(config.s, ratios)
    logger.info(f"🌉 bridge s={config.s!r}: median={result.median_ratio:.4f} iqr={result.iqr:.4f} "
                f"mean={result.mean_ratio:.4f} expected={result.expected_ratio:.4f}")
    return result


def bridge_divergence_profile(s_values: Sequence[float] = BRIDGE_PROFILE_POINTS,
                              reps: int = default_config.simulation.bridge_reps,
                              grid: int = default_config.simulation.bridge_grid,
                              seed: int = default_config.simulation.master_seed) -> pd.DataFrame:
    """共通のブラウン橋から複数の s の比を計算する"""
    s_sorted = sorted(float(s) for s in s_values)
    config = BridgeCheckConfig(s=s_sorted[-1], reps=reps, grid=grid, seed=seed)
    t = np.union1d(config.time_grid(), s_sorted)
    cuts = [int(np.searchsorted(t, s)) for s in s_sorted]
    ratios = _bridge_ratios(config, t, cuts, simulate_bridges)
    rows = []
    for s, r in zip(s_sorted, ratios):
        res = _summarize_ratios(s, r)
        rows.append({"s": s, "median_ratio": res.median_ratio, "iqr": res.iqr,
                     "mean_ratio": res.mean_ratio, "expected_ratio": res.expected_ratio})
    return pd.DataFrame(rows, columns=["s", "median_ratio", "iqr", "mean_ratio", "expected_ratio"])


# ――― 裾の増大診断 ―――
@dataclass
class TailGrowthResult:
    family: str
    table: pd.DataFrame
    bounded: bool


def tail_growth_diagnostic(family: ErrorFamily, t_values: Sequence[float] = TAIL_GROWTH_POINTS,
                           growth_tol: float = 1.25) -> TailGrowthResult:
    """
    (1-t)·γᵀΓ_t⁻¹γ の表

    最後の 3 点の最大/最小比が growth_tol 以下なら有界（冪 (1-t)^{-1-2δ} で δ = 0）とみなす。
    """
    rows = []
    for t in t_values:
        g = gamma_matrix(family, t)
        norm = weighted_norm(family, t)
        rows.append({"t": float(t), "weighted_norm": norm, "scaled_norm": (1.0 - t) * norm,
                     "rank_deficient": bool(g.rank_deficient)})
    table = pd.DataFrame(rows, columns=["t", "weighted_norm", "scaled_norm", "rank_deficient"])
    tail = table["scaled_norm"].to_numpy()[-3:]
    bounded = bool(np.all(np.isfinite(tail)) and tail.min() > 0 and tail.max() / tail.min() <= growth_tol)
    return TailGrowthResult(family=family.spec, table=table, bounded=bounded)


# ――― sup|b| のモンテカルロ検算 ―――
def simulate_sup_abs_bm(reps: int = 100000, steps: int = 10000,
                        seed: int = default_config.simulation.master_seed, chunk: int = 500) -> np.ndarray:
    """離散ブラウン運動の max|B| に連続補正 0.5826·√Δ を加えた標本"""
    if reps < 1 or steps < 1:
        raise ConfigurationError("reps and steps must be positive")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dt = 1.0 / steps
    out = np.empty(reps)
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        paths = np.cumsum(rng.standard_normal((m, steps)), axis=1) * math.sqrt(dt)
        out[start:start + m] = np.abs(paths).max(axis=1)
    return out + _CONTINUITY_SHIFT * math.sqrt(dt)


def monte_carlo_sup_cdf(a_values: Sequence[float], reps: int = 100000, steps: int = 10000,
                        seed: int = default_config.simulation.master_seed) -> pd.DataFrame:
    """級数による sup_abs_bm_cdf とモンテカルロ推定の比較表（3σ 帯）"""
    sups = simulate_sup_abs_bm(reps=reps, steps=steps, seed=seed)
    rows = []
    for a in a_values:
        mc = float(np.mean(sups <= a))
        se = math.sqrt(max(mc * (1.0 - mc), 1.0 / reps) / reps)
        series = float(sup_abs_bm_cdf(a))
        rows.append({"a": float(a), "mc_cdf": mc, "mc_se": se, "series_cdf": series,
                     "within_band": abs(mc - series) <= 3.0 * se})
    return pd.DataFrame(rows, columns=["a", "mc_cdf", "mc_se", "series_cdf", "within_band"])
