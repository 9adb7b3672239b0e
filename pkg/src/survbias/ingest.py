"""Parse heterogeneous end-of-day exchange files into the canonical store.

Five-step pipeline: header standardization across format generations,
equity-series filtering, multi-format date parsing, deduplication, and
price-outlier flagging (flagged records are retained, never dropped).

Every dropped row is counted, and the counts partition the input exactly:

    raw_rows == retained + skipped + duplicates + non_equity
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import EmptyFile, FileUnreadable, SchemaUnrecognized
from .store import STORE_COLUMNS

log = logging.getLogger(__name__)

CANONICAL_FIELDS = [
    "DATE", "SYMBOL", "SERIES", "OPEN", "HIGH", "LOW", "CLOSE",
    "TOTTRDQTY", "TOTTRDVAL", "ISIN",
]

# Source-column aliases observed across NSE file generations: the classic
# cm*bhav layout, the sec_bhavdata_full layout, and the UDiFF layout that
# replaced them. Keys are normalized (uppercased, separators removed).
_ALIASES = {
    "DATE": ["DATE", "TIMESTAMP", "DATE1", "TRADDT", "TRADEDATE",
             "TRADINGDATE", "BIZDT"],
    "SYMBOL": ["SYMBOL", "TCKRSYMB"],
    "SERIES": ["SERIES", "SCTYSRS"],
    "OPEN": ["OPEN", "OPNPRIC", "OPENPRICE"],
    "HIGH": ["HIGH", "HGHPRIC", "HIGHPRICE"],
    "LOW": ["LOW", "LWPRIC", "LOWPRICE"],
    "CLOSE": ["CLOSE", "CLSPRIC", "CLOSEPRICE", "CLOSINGPRICE"],
    "TOTTRDQTY": ["TOTTRDQTY", "TTLTRADGVOL", "TTLTRDQNTY",
                  "TOTALTRADEDQUANTITY", "VOLUME"],
    "TOTTRDVAL": ["TOTTRDVAL", "TTLTRFVAL", "TOTALTRADEDVALUE", "TURNOVER"],
    "ISIN": ["ISIN", "ISINCODE"],
}

# Unambiguous formats first; DD/MM/YYYY is tried last and read day-first.
_DATE_FORMATS = ["%d-%b-%Y", "%Y%m%d", "%Y-%m-%d", "%d/%m/%Y"]

_EQUITY_SERIES = "EQ"


def _normalize_header(name: str) -> str:
    return re.sub(r"[^A-Z0-9]", "", str(name).replace("﻿", "").upper())


def detect_schema(raw_header: list[str]) -> dict[str, Optional[str]]:
    """Map source column names onto canonical fields.

    Returns one entry per canonical field; a field with no matching source
    column maps to None. Unknown source columns are ignored.
    Raises SchemaUnrecognized when SYMBOL or CLOSE cannot be located.
    """
    if not raw_header:
        raise SchemaUnrecognized("empty header")
    normalized = {}
    for col in raw_header:
        key = _normalize_header(col)
        if key and key not in normalized:
            normalized[key] = col
    mapping: dict[str, Optional[str]] = {}
    for canon in CANONICAL_FIELDS:
        mapping[canon] = None
        for alias in _ALIASES[canon]:
            if alias in normalized:
                mapping[canon] = normalized[alias]
                break
    if mapping["SYMBOL"] is None or mapping["CLOSE"] is None:
        raise SchemaUnrecognized(
            f"cannot locate SYMBOL/CLOSE in header {list(raw_header)!r}"
        )
    return mapping


_HINT_PATTERNS = [
    (re.compile(r"cm(\d{2}[A-Za-z]{3}\d{4})bhav", re.IGNORECASE), "%d%b%Y"),
    (re.compile(r"(20\d{2}-\d{2}-\d{2})"), "%Y-%m-%d"),
    (re.compile(r"(20\d{2}\d{2}\d{2})"), "%Y%m%d"),
]


def infer_date_hint(filename: str) -> Optional[pd.Timestamp]:
    """Best-effort trade date from a bhavcopy-style file name."""
    stem = Path(filename).name
    for pattern, fmt in _HINT_PATTERNS:
        m = pattern.search(stem)
        if m:
            try:
                return pd.Timestamp(pd.to_datetime(m.group(1), format=fmt))
            except (ValueError, pd.errors.OutOfBoundsDatetime):
                continue
    return None


@dataclass
class RawFile:
    """A raw input file plus what can be known before parsing rows."""

    path: Path
    trade_date_hint: Optional[pd.Timestamp]
    header_fields: list[str]


def scan_raw_file(path: str | Path) -> RawFile:
    """Read just the header of a raw file."""
    path = Path(path)
    try:
        head = pd.read_csv(path, nrows=0, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path}: no header row") from None
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc
    header = [str(c) for c in head.columns]
    if not header:
        raise EmptyFile(f"{path}: no header row")
    return RawFile(path=path, trade_date_hint=infer_date_hint(path.name),
                   header_fields=header)


def parse_dates(values: pd.Series) -> pd.Series:
    """Parse a string column trying each supported date format in order."""
    s = values.astype(str).str.strip()
    s = s.where(values.notna() & (s != ""))
    uniq = pd.Series(s.dropna().unique(), dtype=object)
    parsed = pd.Series(pd.NaT, index=uniq.index, dtype="datetime64[ns]")
    for fmt in _DATE_FORMATS:
        todo = parsed.isna()
        if not todo.any():
            break
        parsed[todo] = pd.to_datetime(uniq[todo], format=fmt, errors="coerce")
    lookup = dict(zip(uniq, parsed))
    return pd.to_datetime(s.map(lookup))


@dataclass
class ParseResult:
    frame: pd.DataFrame
    raw_rows: int
    skipped_rows: int


def parse_file(raw: RawFile, mapping: dict[str, Optional[str]]) -> ParseResult:
    """Parse one raw file into canonical-column records.

    Rows failing date or numeric parsing, with non-positive close, or with
    inconsistent OHLC are skipped and counted, never fatal. The whole file
    is fatal only when it has zero data rows or zero rows parse.
    """
    try:
        df = pd.read_csv(raw.path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{raw.path}: no data rows") from None
    except OSError as exc:
        raise FileUnreadable(f"{raw.path}: {exc}") from exc
    n_raw = len(df)
    if n_raw == 0:
        raise EmptyFile(f"{raw.path}: no data rows")

    def col(name: str) -> pd.Series:
        src = mapping.get(name)
        if src is None or src not in df.columns:
            return pd.Series(np.nan, index=df.index, dtype=object)
        return df[src]

    out = pd.DataFrame(index=df.index)
    out["SYMBOL"] = col("SYMBOL").astype(str).str.strip().str.upper()
    out.loc[col("SYMBOL").isna(), "SYMBOL"] = ""

    series = col("SERIES")
    if mapping.get("SERIES") is None:
        # No series designation: treat the file as equity-only.
        out["SERIES"] = _EQUITY_SERIES
    else:
        out["SERIES"] = series.astype(str).str.strip().str.upper().where(
            series.notna(), "")

    if mapping.get("DATE") is not None:
        out["DATE"] = parse_dates(col("DATE"))
    elif raw.trade_date_hint is not None:
        out["DATE"] = raw.trade_date_hint
    else:
        out["DATE"] = pd.NaT

    for name in ["OPEN", "HIGH", "LOW", "CLOSE", "TOTTRDQTY", "TOTTRDVAL"]:
        out[name] = pd.to_numeric(col(name), errors="coerce")

    isin = col("ISIN")
    out["ISIN"] = isin.astype(str).str.strip().str.upper().where(isin.notna(), "")

    valid = (
        out["DATE"].notna()
        & (out["SYMBOL"] != "")
        & (out["SYMBOL"].str.upper() != "NAN")
        & out["CLOSE"].notna()
        & (out["CLOSE"] > 0)
    )
    qty_absent = mapping.get("TOTTRDQTY") is None
    if qty_absent:
        out["TOTTRDQTY"] = 0.0
    else:
        valid &= out["TOTTRDQTY"].notna() & (out["TOTTRDQTY"] >= 0)
    if mapping.get("TOTTRDVAL") is None:
        # Value column varies by era; close times quantity is the natural
        # stand-in and keeps the non-negativity invariant.
        out["TOTTRDVAL"] = out["CLOSE"] * out["TOTTRDQTY"]
    else:
        valid &= out["TOTTRDVAL"].isna() | (out["TOTTRDVAL"] >= 0)

    ohlc_full = out[["OPEN", "HIGH", "LOW", "CLOSE"]].notna().all(axis=1)
    sane = (
        (out["LOW"] <= out[["OPEN", "CLOSE"]].min(axis=1))
        & (out["HIGH"] >= out[["OPEN", "CLOSE"]].max(axis=1))
    )
    valid &= ~ohlc_full | sane

    kept = out.loc[valid].copy()
    kept["OUTLIER"] = 0
    n_skipped = int(n_raw - len(kept))
    if len(kept) == 0:
        raise EmptyFile(f"{raw.path}: {n_raw} rows, none parseable")
    return ParseResult(frame=kept[STORE_COLUMNS], raw_rows=n_raw,
                       skipped_rows=n_skipped)


def filter_equity(records: pd.DataFrame) -> pd.DataFrame:
    """Keep only SERIES == 'EQ' rows; order preserved."""
    return records.loc[records["SERIES"] == _EQUITY_SERIES]


def dedupe(records: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    """Drop repeated (date, symbol, series) keys; first in file order wins.

    Returns the deduped frame and the number of dropped rows whose close
    disagreed with the kept row (logged as genuine conflicts).
    """
    keys = ["DATE", "SYMBOL", "SERIES"]
    dup_mask = records.duplicated(subset=keys, keep="first")
    if not dup_mask.any():
        return records, 0
    first_close = records.groupby(keys, sort=False)["CLOSE"].transform("first")
    conflicts = int((dup_mask & (records["CLOSE"] != first_close)).sum())
    if conflicts:
        log.warning("dedupe: %d conflicting-value duplicates dropped", conflicts)
    return records.loc[~dup_mask], conflicts


def flag_outliers(records: pd.DataFrame, window: int = 30,
                  threshold: float = 10.0) -> pd.DataFrame:
    """Set OUTLIER where close strays more than `threshold` trailing stds
    from the trailing `window`-observation mean.

    The window covers prior observations only and needs at least two of
    them (sample std is undefined below that). Flagged records are kept;
    the record count never changes.
    """
    df = records.sort_values(["SYMBOL", "DATE"], kind="stable").copy()
    grouped = df.groupby("SYMBOL", sort=False)["CLOSE"]
    trail_mean = grouped.transform(
        lambda s: s.shift(1).rolling(window, min_periods=2).mean())
    trail_std = grouped.transform(
        lambda s: s.shift(1).rolling(window, min_periods=2).std(ddof=1))
    deviation = (df["CLOSE"] - trail_mean).abs()
    flagged = deviation > threshold * trail_std
    df["OUTLIER"] = flagged.fillna(False).astype(int)
    return df


@dataclass
class IngestStats:
    """Retention accounting for one ingest run."""

    files_total: int = 0
    files_parsed: int = 0
    files_failed: dict = field(default_factory=dict)
    raw_rows: int = 0
    retained_rows: int = 0
    skipped_rows: int = 0
    non_equity_rows: int = 0
    duplicate_rows: int = 0
    conflicting_duplicates: int = 0
    outliers_flagged: int = 0
    unique_symbols: int = 0
    trading_days: int = 0
    first_date: Optional[str] = None
    last_date: Optional[str] = None

    def accounting_balanced(self) -> bool:
        return self.raw_rows == (self.retained_rows + self.skipped_rows
                                 + self.duplicate_rows + self.non_equity_rows)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["accounting_balanced"] = self.accounting_balanced()
        return d


def discover_files(data_dir: str | Path) -> list[Path]:
    """All CSV files under a directory, in deterministic name order."""
    data_dir = Path(data_dir)
    files = sorted(p for p in data_dir.iterdir()
                   if p.is_file() and p.suffix.lower() == ".csv")
    return files


def ingest_directory(data_dir: str | Path, window: int = 30,
                     threshold: float = 10.0) -> tuple[pd.DataFrame, IngestStats]:
    """Run the full ingest pipeline over a directory of daily files.

    Individual bad files are recorded and skipped; the run aborts only when
    schema detection fails for more than half of the files.
    """
    files = discover_files(data_dir)
    if not files:
        raise EmptyFile(f"no CSV files found in {data_dir}")

    stats = IngestStats(files_total=len(files))
    parts: list[pd.DataFrame] = []
    schema_failures = 0
    for path in files:
        try:
            raw = scan_raw_file(path)
            mapping = detect_schema(raw.header_fields)
            parsed = parse_file(raw, mapping)
        except SchemaUnrecognized as exc:
            schema_failures += 1
            stats.files_failed[path.name] = f"schema: {exc}"
            continue
        except (EmptyFile, FileUnreadable) as exc:
            stats.files_failed[path.name] = str(exc)
            continue
        stats.files_parsed += 1
        stats.raw_rows += parsed.raw_rows
        stats.skipped_rows += parsed.skipped_rows
        parts.append(parsed.frame)

    if schema_failures * 2 > stats.files_total:
        raise SchemaUnrecognized(
            f"{schema_failures} of {stats.files_total} files have an "
            f"unrecognized schema")
    if not parts:
        raise EmptyFile(f"no parseable rows in any file under {data_dir}")

    combined = pd.concat(parts, ignore_index=True)
    equities = filter_equity(combined)
    stats.non_equity_rows = int(len(combined) - len(equities))

    deduped, conflicts = dedupe(equities)
    stats.duplicate_rows = int(len(equities) - len(deduped))
    stats.conflicting_duplicates = conflicts

    flagged = flag_outliers(deduped, window=window, threshold=threshold)
    final = flagged.sort_values(["DATE", "SYMBOL"], kind="stable").reset_index(drop=True)

    stats.retained_rows = int(len(final))
    stats.outliers_flagged = int(final["OUTLIER"].sum())
    stats.unique_symbols = int(final["SYMBOL"].nunique())
    stats.trading_days = int(final["DATE"].nunique())
    stats.first_date = str(final["DATE"].min().date())
    stats.last_date = str(final["DATE"].max().date())
    assert stats.accounting_balanced(), "retention accounting out of balance"
    return final, stats
