#!/usr/bin/env python3
"""
khmgof コマンドの起動スクリプト
例: python scripts/khmgof.py test --input sample.csv --family normal --bandwidth 0.04
"""
import sys
import os

# プロジェクトルートをパスに追加
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
