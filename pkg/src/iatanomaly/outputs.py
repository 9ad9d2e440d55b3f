"""CSV / JSON writers and readers for the command-line tool.

Floats are written with ``repr`` so that values round-trip exactly and
reruns produce byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError
from .ingest import IatSeries

IATS_HEADER = ["user_id", "iat"]
SUMMARY_HEADER = [
    "user_id",
    "n_total_queries",
    "n_landed",
    "n_orphan",
    "n_zero_iats",
    "n_iats",
    "max_gap",
    "orphan_flag",
    "max_iat_flag",
]
PARAMS_HEADER = [
    "user_id",
    "theta",
    "alpha_in",
    "beta_in",
    "alpha_off",
    "beta_off",
    "r",
    "m",
    "train_loglik",
    "n_iats",
    "n_iterations",
    "converged",
    "collapsed",
    "reason",
]
REPORT_HEADER = ["user_id", "r", "m", "log_density", "rank", "flagged", "reason"]


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def sniff_header(path) -> list[str]:
    from .ingest import open_log

    with open_log(path) as fh:
        first = fh.readline().rstrip("\r\n")
    sep = "\t" if "\t" in first else ","
    return [c.strip() for c in first.split(sep)]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy

    return {
        "iatanomaly": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


# ---------------------------------------------------------------------------
# per-user IAT tables


def write_series(out_dir: Path, series: dict, orphan: set, no_sleep: set) -> None:
    write_csv(
        out_dir / "iats.csv",
        IATS_HEADER,
        ((uid, int(v)) for uid, s in series.items() for v in s.iats),
    )
    write_csv(
        out_dir / "summary.csv",
        SUMMARY_HEADER,
        (
            (
                s.user_id,
                s.n_total_queries,
                s.n_landed,
                s.n_orphan,
                s.n_zero_iats,
                s.iats.size,
                s.max_gap,
                s.user_id in orphan,
                s.user_id in no_sleep,
            )
            for s in series.values()
        ),
    )


def read_iats(path) -> dict[str, np.ndarray]:
    groups = defaultdict(list)
    for row in read_csv(path):
        try:
            groups[row["user_id"]].append(float(row["iat"]))
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad row in {path}: {row}") from exc
    return {uid: np.array(v) for uid, v in sorted(groups.items())}


def read_series(iats_path, summary_path=None) -> dict:
    """Rebuild IatSeries from ``iats.csv``; with ``summary.csv`` the query
    counts (and so the screens) are restored too."""
    iats = read_iats(iats_path)
    if summary_path is None or not Path(summary_path).exists():
        return iats
    out = {}
    for row in read_csv(summary_path):
        uid = row["user_id"]
        out[uid] = IatSeries(
            user_id=uid,
            iats=iats.get(uid, np.array([], dtype=float)),
            n_zero_iats=int(row["n_zero_iats"]),
            n_total_queries=int(row["n_total_queries"]),
            n_landed=int(row["n_landed"]),
            max_gap=int(row["max_gap"]),
        )
    for uid in iats:
        if uid not in out:
            raise DomainError(f"user {uid!r} in {iats_path} is missing from {summary_path}")
    return dict(sorted(out.items()))


def params_rows(user_fits: dict):
    for uid, uf in user_fits.items():
        rep = uf.report
        if rep is None:
            yield (uid,) + (None,) * 12 + (uf.reason,)
            continue
        f = uf.features
        yield (
            (uid,)
            + tuple(rep.params.as_tuple())
            + (
                f.r if f else None,
                f.m if f else None,
                rep.train_loglik,
                rep.n_obs,
                rep.n_iterations,
                rep.converged,
                rep.collapsed,
                uf.reason,
            )
        )


def report_rows(report):
    for rec in report.scored:
        yield (rec.user_id, rec.features.r, rec.features.m, rec.log_density, rec.rank, rec.flagged, None)
    for rec in report.auto_outliers:
        yield (rec.user_id, None, None, None, None, True, rec.auto_outlier_reason)
