#!/usr/bin/env python3
"""
khmgof パイプライン実行スクリプト
数値診断を通したうえで、3 バンド幅 × 4 水準の検出力表を計算します。
"""
import sys
import os
import subprocess

# プロジェクトルートをパスに追加
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(ROOT)

from src.config_analysis import get_analysis_config

CLI = os.path.join(ROOT, "scripts", "khmgof.py")


def run_step(name, args):
    """各ステップを実行する"""
    print(f"\n{'='*60}")
    print(f"🚀 実行中: {name}")
    print(f"{'='*60}")

    result = subprocess.run([sys.executable, CLI] + args, capture_output=True, text=True)

    if result.returncode == 0:
        print(result.stdout)
        print(f"✅ {name} が正常に完了しました")
    else:
        print(f"❌ {name} でエラーが発生しました (exit {result.returncode}):")
        print(result.stderr)
        return False

    return True


def main():
    """メインパイプライン"""
    print("=== khmgof パイプライン ===")

    env = os.getenv("KHMGOF_ENV", "development")
    sim = get_analysis_config(env).simulation
    bandwidths = ",".join(repr(a) for a in sim.bandwidths)

    steps = [
        ("正規分布の数値診断", ["diagnose", "--family", "normal"]),
        ("ロジスティック分布の数値診断", ["diagnose", "--family", "logistic"]),
        ("ラプラス分布の数値診断とブラウン橋チェック", ["diagnose", "--family", "laplace:1", "--bridge-check"]),
        ("帰無分布と検出力表", [
            "simulate",
            "--n", str(sim.n),
            "--reps", str(sim.reps),
            "--family", sim.null_family,
            "--alt-family", sim.alt_family,
            "--alt-weight", repr(sim.alt_weight),
            "--bandwidths", bandwidths,
            "--seed", str(sim.master_seed),
        ]),
    ]

    # 各ステップを実行
    for name, args in steps:
        if not run_step(name, ["--env", env] + args):
            print("\n⚠️  パイプラインが中断されました")
            sys.exit(1)

    print("\n✨ すべてのステップが完了しました！")
    print("📊 結果は results/ ディレクトリに保存されています")


if __name__ == "__main__":
    main()
