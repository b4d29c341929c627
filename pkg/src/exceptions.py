"""
khmgof の例外階層
CLI はここで定義した exit_code をそのまま終了ステータスに使う
"""

from typing import Optional


class KhmgofError(Exception):
    """全例外の基底"""
    exit_code = 1


class DomainError(KhmgofError, ValueError):
    """定義域外の引数"""
    exit_code = 3


class TailOverflowError(DomainError):
    """F(x) が 1 に近すぎて裾の汎関数が評価できない"""

    def __init__(self, point: float, message: Optional[str] = None):
        self.point = point
        super().__init__(message or f"point {point!r} is too deep in the upper tail (F(x) too close to 1)")


class EmptyWindowError(DomainError):
    """窓 [x-a, x+a] に共変量が一つもない"""

    def __init__(self, x: float, bandwidth: float):
        self.x = x
        self.bandwidth = bandwidth
        super().__init__(f"empty window at x={x!r} with bandwidth a={bandwidth!r}")


class DegenerateSampleError(DomainError):
    """残差が全て等しい (MAD = 0)"""


class IllConditionedError(KhmgofError, ArithmeticError):
    """フルランクと判定された Γ の条件数が上限を超えた"""
    exit_code = 3


class ParseError(KhmgofError, ValueError):
    """入力ファイル・ファミリー指定の解析エラー"""
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(KhmgofError, ValueError):
    """実行設定・実験設定の不整合"""
    exit_code = 2


class ExperimentFailure(KhmgofError, RuntimeError):
    """中断レプリケートが許容割合を超えた"""
    exit_code = 4
