"""Query-log ingestion: parsing, per-user inter-arrival times, screens.

Two input layouts are recognised from the header line:

* AOL-style, tab separated: ``AnonID Query QueryTime ItemRank ClickURL``
  with ``QueryTime`` as ``YYYY-MM-DD HH:MM:SS`` (read as UTC); a record is
  landed iff ``ClickURL`` is non-empty.
* minimal, comma or tab separated: ``user_id,timestamp,landed`` with epoch
  seconds and a 0/1 landed flag.
"""
from __future__ import annotations

import bz2
import calendar
import gzip
import lzma
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

__all__ = [
    "QueryEvent",
    "IatSeries",
    "LogHistogram",
    "ParseResult",
    "open_log",
    "parse_log",
    "read_log",
    "extract_iats",
    "orphan_flags",
    "max_iat_flags",
    "log_histogram",
    "histogram_modes",
]

AOL_HEADER = ("AnonID", "Query", "QueryTime", "ItemRank", "ClickURL")
MINIMAL_HEADER = ("user_id", "timestamp", "landed")


@dataclass(frozen=True, order=True)
class QueryEvent:
    user_id: str
    timestamp: int
    landed: bool


@dataclass(frozen=True)
class IatSeries:
    user_id: str
    iats: np.ndarray = field(repr=False)
    n_zero_iats: int
    n_total_queries: int
    n_landed: int
    # longest gap between consecutive queries of any kind (0 if < 2 queries)
    max_gap: int = 0

    @property
    def n_orphan(self) -> int:
        return self.n_total_queries - self.n_landed


@dataclass(frozen=True)
class LogHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def rows(self):
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            yield float(lo), float(hi), int(c)


@dataclass
class ParseResult:
    events: list
    n_skipped: int = 0
    layout: str = ""


def open_log(path):
    """Open a text log, transparently decompressing .gz, .bz2 and .xz."""
    path = Path(path)
    opener = {".gz": gzip.open, ".bz2": bz2.open, ".xz": lzma.open}.get(path.suffix, open)
    return opener(path, "rt", encoding="utf-8", newline="")


def _parse_aol_time(s: str) -> int:
    return calendar.timegm(time.strptime(s.strip(), "%Y-%m-%d %H:%M:%S"))


def _parse_flag(s: str) -> bool:
    s = s.strip()
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise ValueError(f"bad landed flag {s!r}")


def parse_log(lines) -> ParseResult:
    """Parse an iterable of lines into QueryEvents.

    Malformed records are skipped and counted; an unrecognised header
    raises DomainError.
    """
    it = iter(lines)
    try:
        header = next(it).rstrip("\r\n")
    except StopIteration:
        return ParseResult([], 0, "empty")
    if tuple(header.split("\t")) == AOL_HEADER:
        layout, sep = "aol", "\t"
    elif tuple(c.strip() for c in header.split(",")) == MINIMAL_HEADER:
        layout, sep = "minimal", ","
    elif tuple(c.strip() for c in header.split("\t")) == MINIMAL_HEADER:
        layout, sep = "minimal", "\t"
    else:
        raise DomainError(f"unrecognised log header: {header!r}")

    events = []
    skipped = 0
    for line in it:
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split(sep)
        try:
            if layout == "aol":
                if len(parts) == 3:
                    parts += ["", ""]
                if len(parts) != 5 or not parts[0]:
                    raise ValueError("wrong field count")
                ev = QueryEvent(parts[0], _parse_aol_time(parts[2]), bool(parts[4].strip()))
            else:
                if len(parts) != 3 or not parts[0].strip():
                    raise ValueError("wrong field count")
                ts = int(parts[1])
                if ts < 0:
                    raise ValueError("negative timestamp")
                ev = QueryEvent(parts[0].strip(), ts, _parse_flag(parts[2]))
        except ValueError:
            skipped += 1
            continue
        events.append(ev)
    return ParseResult(events, skipped, layout)


def read_log(path) -> ParseResult:
    with open_log(path) as fh:
        return parse_log(fh)


def extract_iats(events, landed_only: bool = True) -> dict[str, IatSeries]:
    """Per-user inter-arrival times, keyed and ordered by user id.

    Events are sorted per user by timestamp, so input order is irrelevant.
    Zero differences (same-second queries) are dropped and counted.
    """
    by_user = defaultdict(list)
    for ev in events:
        by_user[ev.user_id].append((ev.timestamp, ev.landed))
    out = {}
    for uid in sorted(by_user):
        recs = sorted(by_user[uid])
        all_ts = np.array([t for t, _ in recs], dtype=np.int64)
        n_landed = sum(1 for _, landed in recs if landed)
        ts = np.array([t for t, landed in recs if landed or not landed_only], dtype=np.int64)
        diffs = np.diff(ts)
        max_gap = int(np.diff(all_ts).max()) if all_ts.size > 1 else 0
        out[uid] = IatSeries(
            user_id=uid,
            iats=diffs[diffs > 0],
            n_zero_iats=int(np.sum(diffs == 0)),
            n_total_queries=len(recs),
            n_landed=n_landed,
            max_gap=max_gap,
        )
    return out


def _values(series):
    return series.values() if isinstance(series, dict) else series


def orphan_flags(series, q_threshold: int = 1000, c_threshold: int = 100) -> list[str]:
    """Users with more than ``q_threshold`` queries but fewer than
    ``c_threshold`` landed ones."""
    if q_threshold <= 0 or c_threshold <= 0:
        raise DomainError("thresholds must be positive")
    return sorted(s.user_id for s in _values(series) if s.n_total_queries > q_threshold and s.n_landed < c_threshold)


def max_iat_flags(series, q_threshold: int = 1000, max_iat_threshold: float = 3600.0) -> list[str]:
    """Users with at least ``q_threshold`` queries who never pause for
    ``max_iat_threshold`` seconds (no sleep)."""
    return sorted(
        s.user_id
        for s in _values(series)
        if s.n_total_queries >= q_threshold and s.max_gap < max_iat_threshold
    )


def log_histogram(iats, bins_per_decade: int = 5) -> LogHistogram:
    """Counts in bins equally spaced in log10, starting at 1 s (or lower if
    the data reach below 1 s) and extending past the largest value."""
    if bins_per_decade < 1:
        raise DomainError("bins_per_decade must be >= 1")
    x = np.asarray(iats, dtype=float).ravel()
    if np.any(~(x > 0)):
        raise DomainError("inter-arrival times must be positive")
    b = bins_per_decade
    if x.size == 0:
        edges = 10.0 ** (np.arange(b + 1) / b)
        return LogHistogram(edges, np.zeros(b, dtype=np.int64))
    k_lo = min(0, math.floor(math.log10(x.min()) * b))
    k_hi = math.floor(math.log10(x.max()) * b) + 1
    # nudge for log10 rounding so that edges[0] <= min < max < edges[-1]
    while 10.0 ** (k_lo / b) > x.min():
        k_lo -= 1
    while 10.0 ** (k_hi / b) <= x.max():
        k_hi += 1
    k_hi = max(k_hi, k_lo + 1)
    edges = 10.0 ** (np.arange(k_lo, k_hi + 1) / b)
    idx = np.searchsorted(edges, x, side="right") - 1
    counts = np.bincount(idx, minlength=edges.size - 1)[: edges.size - 1]
    return LogHistogram(edges, counts.astype(np.int64))


def histogram_modes(hist: LogHistogram, min_fraction: float = 0.05, window: int = 2) -> list[float]:
    """Geometric centres of bins that are the maximum within ``window`` bins
    on each side and hold at least ``min_fraction`` of the largest count."""
    c = hist.counts
    centres = np.sqrt(hist.bin_edges[:-1] * hist.bin_edges[1:])
    picked = []
    for i in range(c.size):
        lo, hi = max(0, i - window), min(c.size, i + window + 1)
        if c[i] > 0 and c[i] == c[lo:hi].max() and c[i] >= min_fraction * c.max():
            # a flat top counts once
            if not picked or i - picked[-1] > window:
                picked.append(i)
    return [float(centres[i]) for i in picked]
