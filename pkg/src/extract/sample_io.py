"""
標本 CSV の読み書きと結果ファイル（# ヘッダ付き TSV）の出力
経験臨界値表 CriticalTable の永続化もここで行う
"""

import io
import logging
import math
import os
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.martingale_transform import ProcessPath
from ..core.residuals import Sample
from ..exceptions import ConfigurationError, ParseError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SAMPLE_COLUMNS = ["x", "y"]
CRITICAL_COLUMNS = ["statistic", "n", "bandwidth", "family", "level", "critical_value", "reps", "seed"]

_PANDAS_LINE = re.compile(r"line (\d+)")


def _ensure_parent(path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def _split_header(text: str) -> Tuple[List[str], str, int]:
    """先頭の # 行を取り除き (ヘッダ行, 本文, 本文の開始行番号-1) を返す"""
    lines = text.splitlines(keepends=True)
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        k += 1
    header = [ln[1:].strip() for ln in lines[:k]]
    return header, "".join(lines[k:]), k


def _parse_float(value, line: int, column: str) -> float:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        raise ParseError(f"missing value in column {column!r}", line)
    text = str(value).strip()
    try:
        out = float(text)
    except ValueError:
        raise ParseError(f"not a decimal number in column {column!r}: {text!r}", line) from None
    if not math.isfinite(out):
        raise ParseError(f"non-finite value in column {column!r}: {text!r}", line)
    return out


# ――― 標本 CSV ―――
def read_sample_csv(path: str) -> Sample:
    """
    ヘッダ `x,y` の CSV を読む（先頭の # 行は無視）

    値は float() でそのまま変換するので、%.17g で書いた値は完全に復元される。
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        _, body, offset = _split_header(f.read())
    if not body.strip():
        raise ParseError("no header line `x,y` found", offset + 1)

    try:
        df = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as e:
        m = _PANDAS_LINE.search(str(e))
        line = int(m.group(1)) + offset if m else None
        raise ParseError(f"malformed row ({e})", line) from None

    columns = [c.strip() for c in df.columns]
    if columns != SAMPLE_COLUMNS:
        raise ParseError(f"header must be `x,y` (got {','.join(columns)!r})", offset + 1)

    x = np.empty(len(df))
    y = np.empty(len(df))
    for i, (xv, yv) in enumerate(zip(df.iloc[:, 0], df.iloc[:, 1])):
        line = offset + i + 2
        x[i] = _parse_float(xv, line, "x")
        y[i] = _parse_float(yv, line, "y")
    if len(df) == 0:
        raise ParseError("file has a header but no data rows", offset + 2)
    logger.info(f"sample loaded: {path} (n={len(df)})")
    return Sample(x, y)


def write_sample_csv(sample: Sample, path: str, header: Sequence[str] = ()) -> str:
    _ensure_parent(path)
    df = pd.DataFrame({"x": sample.x, "y": sample.y})
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


# ――― 結果 TSV ―――
def write_tsv(frame: pd.DataFrame, path: str, header: Sequence[str]) -> str:
    """# ヘッダ行に続けてタブ区切りの表を書く（同じ入力なら同じバイト列）"""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        frame.to_csv(f, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"💾 written: {path}")
    return path


def read_tsv(path: str) -> Tuple[List[str], pd.DataFrame]:
    with open(path, "r", encoding="utf-8") as f:
        header, body, _ = _split_header(f.read())
    return header, pd.read_csv(io.StringIO(body), sep="\t")


def write_process_tsv(path_obj: ProcessPath, path: str, config_string: str) -> str:
    header = [f"process={path_obj.name} n={path_obj.n} family={path_obj.family_spec}",
              f"config={config_string}"]
    return write_tsv(path_obj.to_frame(), path, header)


def write_text_report(text: str, path: str, config_string: str) -> str:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config={config_string}\n")
        f.write(text)
    logger.info(f"💾 written: {path}")
    return path


# ――― 経験臨界値表 ―――
CriticalKey = Tuple[str, int, float, str, float]


@dataclass
class CriticalEntry:
    critical_value: float
    reps: int
    seed: int


class CriticalTable:
    """(statistic, n, bandwidth, family, level) → 経験臨界値"""

    def __init__(self, entries: Optional[Dict[CriticalKey, CriticalEntry]] = None):
        self.entries: Dict[CriticalKey, CriticalEntry] = dict(entries or {})

    def __len__(self) -> int:
        return len(self.entries)

    @staticmethod
    def key(statistic: str, n: int, bandwidth: float, family: str, level: float) -> CriticalKey:
        return (statistic, int(n), float(bandwidth), family, float(level))

    def lookup(self, statistic: str, n: int, bandwidth: float, family: str, level: float) -> Optional[float]:
        entry = self.entries.get(self.key(statistic, n, bandwidth, family, level))
        return None if entry is None else entry.critical_value

    def set(self, statistic: str, n: int, bandwidth: float, family: str, level: float,
            value: float, reps: int, seed: int, replace: bool = False) -> None:
        """既存キーに異なる値を入れるには replace=True が必要"""
        if not (math.isfinite(value) and value > 0):
            raise ConfigurationError(f"critical values must be positive (got {value!r})")
        key = self.key(statistic, n, bandwidth, family, level)
        entry = CriticalEntry(float(value), int(reps), int(seed))
        old = self.entries.get(key)
        if old is not None and old != entry:
            if not replace:
                raise ConfigurationError(
                    f"critical value for {key} already stored as {old.critical_value!r} "
                    f"(reps={old.reps}, seed={old.seed}); refusing to overwrite with {value!r}")
            logger.warning(f"⚠️ critical value for {key} replaced: {old.critical_value!r} -> {value!r} "
                           f"(reps={reps}, seed={seed})")
        self.entries[key] = entry

    def update_from_frame(self, frame: pd.DataFrame, n: int, family: str, reps: int, seed: int) -> int:
        """statistic/bandwidth/level/critical_value 列の表から登録（水準 1 の 0 は登録しない）

        simulate の再実行結果で既存の値を置き換える
        """
        added = 0
        for row in frame.itertuples(index=False):
            if row.level >= 1.0 or row.critical_value <= 0:
                continue
            self.set(row.statistic, n, row.bandwidth, family, row.level, row.critical_value, reps, seed,
                     replace=True)
            added += 1
        return added

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"statistic": k[0], "n": k[1], "bandwidth": k[2], "family": k[3], "level": k[4],
             "critical_value": e.critical_value, "reps": e.reps, "seed": e.seed}
            for k, e in sorted(self.entries.items())
        ]
        return pd.DataFrame(rows, columns=CRITICAL_COLUMNS)

    def save(self, path: str) -> str:
        return write_tsv(self.to_frame(), path, ["critical values from empirical null distributions"])

    @classmethod
    def load(cls, path: str) -> "CriticalTable":
        """ファイルが無ければ空の表"""
        table = cls()
        if not os.path.exists(path):
            return table
        _, frame = read_tsv(path)
        missing = set(CRITICAL_COLUMNS) - set(frame.columns)
        if missing:
            raise ParseError(f"critical table {path} lacks columns {sorted(missing)}")
        for row in frame.itertuples(index=False):
            table.set(str(row.statistic), int(row.n), float(row.bandwidth), str(row.family), float(row.level),
                      float(row.critical_value), int(row.reps), int(row.seed))
        return table


def parse_float_list(text: str, name: str = "list") -> List[float]:
    """`0.04,0.08,0.12` 形式のリスト"""
    items = [s.strip() for s in (text or "").split(",") if s.strip()]
    if not items:
        raise ParseError(f"{name} is empty")
    out = []
    for item in items:
        try:
            out.append(float(item))
        except ValueError:
            raise ParseError(f"{name} entry is not a number: {item!r}") from None
    return out


def iter_header_fields(header: Iterable[str]) -> Dict[str, str]:
    """`key=value` を空白区切りで並べたヘッダ行を辞書にする（config= 行は丸ごと値）"""
    fields: Dict[str, str] = {}
    for line in header:
        if line.startswith("config="):
            fields["config"] = line[len("config="):]
            continue
        for token in line.split():
            if "=" in token:
                key, value = token.split("=", 1)
                fields[key] = value
    return fields
