import json
import time
import logging
import threading
from datetime import datetime
from typing import Dict, List, Optional
from dataclasses import dataclass, asdict


@dataclass
class ReplicateAbortLog:
    """中断レプリケートの記録"""
    timestamp: str
    experiment: str
    replicate_index: int
    error_type: str
    message: str


class ExperimentMonitor:
    """モンテカルロ実験の進捗・中断監視クラス"""

    def __init__(self, experiment: str, total: int, progress_every: int = 250,
                 logger: Optional[logging.Logger] = None):
        self.experiment = experiment
        self.total = total
        self.progress_every = max(1, progress_every)
        self.logger = logger or logging.getLogger(__name__)
        self.session_start = datetime.now()
        self._t0 = time.perf_counter()
        self._lock = threading.Lock()
        self.session_usage = {
            "replicates_run": 0,
            "replicates_aborted": 0,
        }
        self.aborts: List[ReplicateAbortLog] = []

    def start(self) -> None:
        self.logger.info(f"🚀 {self.experiment}: {self.total} replicates start")

    def record_replicate(self) -> None:
        """完了したレプリケートを記録"""
        with self._lock:
            self.session_usage["replicates_run"] += 1
            done = self.session_usage["replicates_run"]
        if done % self.progress_every == 0 or done == self.total:
            self.logger.info(f"📊 {self.experiment}: {done}/{self.total} replicates")

    def record_abort(self, replicate_index: int, error: BaseException) -> None:
        """パイプライン例外で中断したレプリケートを記録"""
        entry = ReplicateAbortLog(
            timestamp=datetime.now().isoformat(),
            experiment=self.experiment,
            replicate_index=replicate_index,
            error_type=type(error).__name__,
            message=str(error),
        )
        with self._lock:
            self.session_usage["replicates_run"] += 1
            self.session_usage["replicates_aborted"] += 1
            self.aborts.append(entry)
        self.logger.warning(f"⚠️ REPLICATE_ABORT: {json.dumps(asdict(entry), ensure_ascii=False)}")

    @property
    def abort_fraction(self) -> float:
        with self._lock:
            run = self.session_usage["replicates_run"]
            aborted = self.session_usage["replicates_aborted"]
        return aborted / run if run else 0.0

    def finish(self) -> Dict:
        summary = self.get_session_summary()
        self.logger.info(
            f"✅ {self.experiment}: done in {summary['elapsed_seconds']:.1f}s, "
            f"abort rate {summary['abort_fraction']:.4f}"
        )
        return summary

    def get_session_summary(self) -> Dict:
        """セッションのサマリーを取得"""
        with self._lock:
            usage = dict(self.session_usage)
            aborted_indices = sorted(a.replicate_index for a in self.aborts)
        run = usage["replicates_run"]
        return {
            "experiment": self.experiment,
            "session_start": self.session_start.isoformat(),
            "elapsed_seconds": time.perf_counter() - self._t0,
            "replicates_planned": self.total,
            "replicates_run": run,
            "replicates_aborted": usage["replicates_aborted"],
            "abort_fraction": usage["replicates_aborted"] / run if run else 0.0,
            "aborted_indices": aborted_indices,
        }
