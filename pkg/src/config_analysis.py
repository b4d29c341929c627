"""
検定・シミュレーション用の設定ファイル
数値許容誤差・水準・シミュレーション規模を全て設定可能にする
"""

import math
import os
from dataclasses import dataclass
from typing import Dict, Optional, Tuple


@dataclass
class NumericalConfig:
    """数値計算設定"""
    quad_epsabs: float = 1e-12
    segment_epsrel: float = 1e-9
    tail_rtol: float = 1e-10
    t_clamp: float = 1.0 - 1e-10
    t_max: float = 1.0 - 1e-12
    rank_tol: float = 1e-12
    cond_max: float = 1e12
    pinv_rtol: float = 1e-12
    series_tol: float = 1e-12
    bisection_xtol: float = 1e-12
    sup_intermediate_points: int = 64
    grid_points_per_decade: int = 8
    grid_decades: int = 12


@dataclass
class StatisticalConfig:
    """統計設定"""
    level: float = 0.05
    levels: Tuple[float, ...] = (0.10, 0.05, 0.025, 0.01)
    min_sample_size: int = 10

    def check_level(self, level: float) -> bool:
        return 0.0 < level < 1.0


@dataclass
class SimulationConfig:
    """シミュレーション設定（検出力表の既定設計）"""
    n: int = 200
    reps: int = 2000
    bandwidths: Tuple[float, ...] = (0.04, 0.08, 0.12)
    null_family: str = "normal"
    alt_family: str = f"laplace:{math.sqrt(2.0)!r}"
    alt_weight: float = 0.2
    master_seed: int = 20080417
    max_abort_fraction: float = 0.01
    bridge_s: float = 1.0 - 1e-4
    bridge_reps: int = 500
    bridge_grid: int = 10000

    @property
    def table_rows(self) -> int:
        """検出力表の行数（バンド幅 × 水準）"""
        return len(self.bandwidths) * len(StatisticalConfig().levels)


@dataclass
class ProcessingConfig:
    """処理設定"""
    max_workers: int = 1
    progress_every: int = 250


@dataclass
class OutputConfig:
    """出力設定"""
    base_dir: str
    process_suffix: str = ".tsv"
    report_name: str = "report.txt"

    def get_output_path(self, filename: str, output_dir: Optional[str] = None) -> str:
        """出力パスを生成（タイムスタンプなし: 同一設定なら同一パス）"""
        return os.path.join(output_dir or self.base_dir, filename)

    def get_process_path(self, process: str, output_dir: Optional[str] = None) -> str:
        return self.get_output_path(f"{process}{self.process_suffix}", output_dir)


class AnalysisConfig:
    """設定の統合クラス"""

    def __init__(self,
                 environment: str = "development",
                 custom_config: Optional[Dict] = None):

        self.environment = environment

        # デフォルト設定
        self._init_default_configs()

        # 環境別設定の適用
        self._apply_environment_configs()

        # カスタム設定の適用
        if custom_config:
            self._apply_custom_config(custom_config)

    def _init_default_configs(self):
        """デフォルト設定の初期化"""
        self.numerical = NumericalConfig()
        self.statistical = StatisticalConfig()
        self.simulation = SimulationConfig()
        self.processing = ProcessingConfig()

        project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.output = OutputConfig(base_dir=os.path.join(project_root, "results"))

    def _apply_environment_configs(self):
        """環境別設定の適用"""

        if self.environment == "production":
            # 本番環境: 検出力表の本計算
            self.simulation.reps = 10000
            self.simulation.bridge_reps = 2000

        elif self.environment == "testing":
            # テスト環境: 高速実行用の設定
            self.simulation.reps = 200
            self.simulation.bridge_reps = 100

        elif self.environment == "demo":
            # デモ環境: 軽量設定
            self.simulation.reps = 100
            self.simulation.bandwidths = (0.04,)
            self.simulation.bridge_reps = 50

    def _apply_custom_config(self, custom_config: Dict):
        """カスタム設定の適用"""

        for section, values in custom_config.items():
            if hasattr(self, section):
                config_obj = getattr(self, section)
                for key, value in values.items():
                    if hasattr(config_obj, key):
                        setattr(config_obj, key, value)

    def is_valid_level(self, level: float) -> bool:
        """検定水準が (0,1) にあるか"""
        return self.statistical.check_level(level)

    def to_dict(self) -> Dict:
        """設定を辞書形式で出力"""
        return {
            'environment': self.environment,
            'numerical': {
                'segment_epsrel': self.numerical.segment_epsrel,
                't_clamp': self.numerical.t_clamp,
                't_max': self.numerical.t_max,
                'rank_tol': self.numerical.rank_tol,
                'cond_max': self.numerical.cond_max,
                'pinv_rtol': self.numerical.pinv_rtol,
            },
            'statistical': {
                'level': self.statistical.level,
                'levels': list(self.statistical.levels),
                'min_sample_size': self.statistical.min_sample_size,
            },
            'simulation': {
                'n': self.simulation.n,
                'reps': self.simulation.reps,
                'bandwidths': list(self.simulation.bandwidths),
                'null_family': self.simulation.null_family,
                'alt_family': self.simulation.alt_family,
                'alt_weight': self.simulation.alt_weight,
                'master_seed': self.simulation.master_seed,
            },
            'processing': {
                'max_workers': self.processing.max_workers,
            },
            'output': {
                'base_dir': self.output.base_dir,
            },
        }


def get_analysis_config(environment: str = "development",
                        custom_overrides: Optional[Dict] = None) -> AnalysisConfig:
    """設定を取得"""
    return AnalysisConfig(environment=environment, custom_config=custom_overrides)


# グローバルインスタンス（デフォルト）
default_config = get_analysis_config()
DEFAULT_NUMERICS = default_config.numerical


if __name__ == "__main__":
    import json

    print("=== デフォルト設定 ===")
    print(json.dumps(get_analysis_config().to_dict(), indent=2, ensure_ascii=False))

    print("\n=== 本番環境設定 ===")
    print(json.dumps(get_analysis_config("production").to_dict(), indent=2, ensure_ascii=False))
