import os
import logging
from typing import Optional

from dotenv import load_dotenv

from .exceptions import ConfigurationError

# プロジェクトルートディレクトリを取得
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# .envファイルから環境変数を読み込む
load_dotenv(os.path.join(PROJECT_ROOT, '.env'))

# ――― 実行環境 ―――
KHMGOF_ENV = os.getenv("KHMGOF_ENV", "development")

# ――― ファイルパス設定 ―――
RESULTS_DIR = os.getenv("KHMGOF_RESULTS_DIR", os.path.join(PROJECT_ROOT, "results"))
LOG_FILE = os.path.join(RESULTS_DIR, "khmgof.log")

# ――― 処理設定 ―――
MAX_WORKERS = int(os.getenv("KHMGOF_MAX_WORKERS", "1"))
LOG_LEVEL = os.getenv("KHMGOF_LOG_LEVEL", "INFO")

KNOWN_ENVIRONMENTS = ("development", "production", "testing", "demo")


# ――― 検証 ―――
def validate_config():
    """設定値の整合性を検証"""
    errors = []

    if KHMGOF_ENV not in KNOWN_ENVIRONMENTS:
        errors.append(f"KHMGOF_ENV must be one of {', '.join(KNOWN_ENVIRONMENTS)} (got {KHMGOF_ENV!r}).")

    if MAX_WORKERS < 1:
        errors.append("KHMGOF_MAX_WORKERS must be at least 1.")

    if logging.getLevelName(LOG_LEVEL.upper()) not in (logging.DEBUG, logging.INFO, logging.WARNING,
                                                       logging.ERROR, logging.CRITICAL):
        errors.append(f"KHMGOF_LOG_LEVEL is not a logging level: {LOG_LEVEL!r}.")

    if errors:
        raise ConfigurationError("\n".join(errors))


def setup_logging(log_file: Optional[str] = LOG_FILE, level: Optional[str] = None) -> None:
    """エントリポイント用のログ設定（ファイル + コンソール）"""
    handlers = [logging.StreamHandler()]
    if log_file:
        os.makedirs(os.path.dirname(log_file), exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
