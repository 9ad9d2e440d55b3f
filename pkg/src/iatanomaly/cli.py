"""``iatanomaly`` command-line tool.

Subcommands: ingest, fit, gof, detect, simulate. Every run writes a
``<command>_manifest.json`` next to its outputs recording the effective
configuration, seeds, input digests and library versions.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or malformed input, unwritable output), 3 fit failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import outputs as out
from ._parallel import parallel_map
from .anomaly import UserFit, fit_users, group_stage, screen_series, user_seed
from .config import RunConfig
from .errors import ConfigError, DomainError, GroupFitError, IatError
from .gof import MODEL_ORDER, evaluate_models, qq_points, qq_points_sampled
from .ingest import AOL_HEADER, MINIMAL_HEADER, extract_iats, log_histogram, max_iat_flags, orphan_flags, read_log
from .metamodel import UserFeatures
from .mixtures import CamelLogParams, MixtureFitReport
from .simulate import DEFAULT_POPULATION, PopulationSpec, simulate_events, simulate_users

log = logging.getLogger("iatanomaly")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base random seed")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for per-user work")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="iatanomaly", description=__doc__.split("\n\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse a query log into per-user IATs")
    p.add_argument("log_path")
    p.add_argument("--bins-per-decade", type=int, default=None)
    p.add_argument("--all-queries", action="store_true", help="use every query, not only landed ones")
    p.add_argument("--per-user", action="store_true", help="one histogram per user instead of a pooled one")

    p = sub.add_parser("fit", parents=[common], help="fit Camel-Log to every user")
    p.add_argument("iat_path", help="iats.csv written by ingest")

    p = sub.add_parser("gof", parents=[common], help="compare mixture families per user")
    p.add_argument("iat_path", help="iats.csv written by ingest")
    p.add_argument("--qq", action="store_true", help="also write Camel-Log Q-Q points for every user")

    p = sub.add_parser("detect", parents=[common], help="rank users by group-model density")
    p.add_argument("input", help="query log, iats.csv, or camellog_params.csv")

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic query log")
    p.add_argument("params_path", nargs="?", default=None, help="JSON population spec (defaults built in)")
    p.add_argument("--n-users", type=int, required=True)
    p.add_argument("--n-iats", type=int, required=True, help="inter-arrival times per user")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.load(args.config)
        except (OSError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError([f"cannot read config {args.config}: {exc}"]) from exc
    overrides = {}
    for name in ("seed", "threads"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if hasattr(args, "out"):
        overrides["out_dir"] = args.out
    if getattr(args, "bins_per_decade", None) is not None:
        overrides["bins_per_decade"] = args.bins_per_decade
    return dataclasses.replace(cfg, **overrides).validate()


def _config_record(cfg: RunConfig) -> dict:
    # threads and out_dir do not affect results; leaving them out keeps
    # manifests identical across worker counts and output locations
    d = cfg.to_dict()
    d.pop("threads")
    d.pop("out_dir")
    return d


def _prepare_out(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DomainError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"no such file: {path}")
    return path


def _manifest(out_dir: Path, command: str, cfg: RunConfig, inputs, outputs, **extra) -> None:
    record = {
        "command": command,
        "config": _config_record(cfg),
        "seed": cfg.seed,
        "inputs": {Path(p).name: out.file_digest(p) for p in inputs},
        "outputs": sorted(outputs),
        "versions": out.versions(),
    }
    record.update(extra)
    out.write_json(out_dir / f"{command}_manifest.json", record)


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args, cfg: RunConfig) -> int:
    src = _require(args.log_path)
    parsed = read_log(src)
    series = extract_iats(parsed.events, landed_only=not args.all_queries)
    orphan = set(orphan_flags(series, cfg.orphan_query_threshold, cfg.orphan_landed_threshold))
    no_sleep = set(max_iat_flags(series, cfg.max_iat_query_threshold, cfg.max_iat_threshold))
    dest = _prepare_out(cfg)
    out.write_series(dest, series, orphan, no_sleep)
    if args.per_user:
        rows = (
            (uid,) + row
            for uid, s in series.items()
            for row in log_histogram(s.iats, cfg.bins_per_decade).rows()
        )
        out.write_csv(dest / "histogram.csv", ["user_id", "bin_low", "bin_high", "count"], rows)
    else:
        pooled = np.concatenate([s.iats for s in series.values()]) if series else np.array([])
        out.write_csv(dest / "histogram.csv", ["bin_low", "bin_high", "count"], log_histogram(pooled, cfg.bins_per_decade).rows())

    totals = {
        "users": len(series),
        "queries": sum(s.n_total_queries for s in series.values()),
        "landed": sum(s.n_landed for s in series.values()),
        "orphan": sum(s.n_orphan for s in series.values()),
        "zero_iats": sum(s.n_zero_iats for s in series.values()),
        "skipped_lines": parsed.n_skipped,
        "orphan_flagged_users": len(orphan),
        "max_iat_flagged_users": len(no_sleep),
    }
    _manifest(
        dest,
        "ingest",
        cfg,
        [src],
        ["iats.csv", "summary.csv", "histogram.csv"],
        layout=parsed.layout,
        landed_only=not args.all_queries,
        per_user_histogram=args.per_user,
        totals=totals,
    )
    print(" ".join(f"{k}={v}" for k, v in totals.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _load_series(iat_path: Path):
    return out.read_series(iat_path, iat_path.with_name("summary.csv"))


def _skip_map(series, cfg):
    if all(hasattr(s, "n_landed") for s in series.values()):
        return screen_series(series, cfg)
    return {}


def _fit_all(series, cfg) -> dict:
    iat_map = {uid: getattr(s, "iats", s) for uid, s in series.items()}
    return fit_users(iat_map, cfg, _skip_map(series, cfg))


def _report_json(rep: MixtureFitReport) -> dict:
    return {
        "family": rep.params.family,
        "params": dict(zip(("theta", "alpha_in", "beta_in", "alpha_off", "beta_off"), rep.params.as_tuple())),
        "train_loglik": rep.train_loglik,
        "n_iterations": rep.n_iterations,
        "converged": rep.converged,
        "collapsed": rep.collapsed,
        "n_params": rep.n_params,
        "n_obs": rep.n_obs,
        "loglik_trace": list(rep.loglik_trace),
    }


def cmd_fit(args, cfg: RunConfig) -> int:
    src = _require(args.iat_path)
    series = _load_series(src)
    fits = _fit_all(series, cfg)
    dest = _prepare_out(cfg)
    out.write_csv(dest / "camellog_params.csv", out.PARAMS_HEADER, out.params_rows(fits))
    reports = {}
    for uid, uf in fits.items():
        reports[uid] = _report_json(uf.report) if uf.report is not None else {}
        reports[uid]["reason"] = uf.reason
    out.write_json(dest / "fit_reports.json", reports)
    n_ok = sum(uf.features is not None for uf in fits.values())
    inputs = [src] + ([src.with_name("summary.csv")] if src.with_name("summary.csv").exists() else [])
    _manifest(
        dest,
        "fit",
        cfg,
        inputs,
        ["camellog_params.csv", "fit_reports.json"],
        user_seeds="blake2b(f'{seed}:{user_id}')",
        n_users=len(fits),
        n_featurized=n_ok,
        excluded=_reason_counts(fits.values()),
    )
    print(f"users={len(fits)} featurized={n_ok} excluded={len(fits) - n_ok}")
    return EXIT_OK


def _reason_counts(items) -> dict:
    counts = {}
    for it in items:
        reason = getattr(it, "reason", None) or getattr(it, "auto_outlier_reason", None)
        if reason:
            counts[reason] = counts.get(reason, 0) + 1
    return dict(sorted(counts.items()))


# ---------------------------------------------------------------------------
# gof


def _gof_one(job):
    uid, iats, cfg, want_qq = job
    seed = user_seed(cfg.seed, uid)
    try:
        scores = evaluate_models(iats, seed, cfg)
    except IatError as exc:
        return uid, None, str(exc), None
    qq = None
    if want_qq:
        cl = scores[0]
        if cl.params is not None:
            qq = qq_points_sampled(iats, cl.params, seed) if cfg.qq_from_samples else qq_points(iats, cl.params)
    return uid, scores, None, qq


def _win_rate(wins: int, total: int) -> float:
    return wins / total if total else float("nan")


def cmd_gof(args, cfg: RunConfig) -> int:
    src = _require(args.iat_path)
    series = _load_series(src)
    skip = _skip_map(series, cfg)
    jobs = [
        (uid, np.asarray(getattr(s, "iats", s), dtype=float), cfg, args.qq)
        for uid, s in series.items()
        if uid not in skip
    ]
    results = parallel_map(_gof_one, jobs, cfg.threads)
    dest = _prepare_out(cfg)

    rows, qq_rows = [], []
    wins = {"test_loglik_vs_paretomix": 0, "test_loglik_vs_expmix": 0, "bic_vs_paretomix": 0, "bic_vs_expmix": 0}
    compared = 0
    user_errors = {}
    for uid, scores, err, qq in results:
        if scores is None:
            user_errors[uid] = err
            continue
        for s in scores:
            ks = s.ks
            rows.append(
                (
                    uid,
                    s.model_name,
                    s.test_loglik,
                    s.bic,
                    ks.statistic if ks else float("nan"),
                    ks.p_value if ks else float("nan"),
                    s.n_train,
                    s.collapsed,
                    s.error,
                )
            )
        by = {s.model_name: s for s in scores}
        if all(s.error is None for s in scores):
            compared += 1
            cl = by["camellog"]
            for other in ("paretomix", "expmix"):
                wins[f"test_loglik_vs_{other}"] += cl.test_loglik > by[other].test_loglik
                wins[f"bic_vs_{other}"] += cl.bic < by[other].bic
        if qq is not None:
            qq_rows.extend((uid, float(a), float(b)) for a, b in qq)

    out.write_csv(
        dest / "gof_scores.csv",
        ["user_id", "model", "test_loglik", "bic", "ks_statistic", "ks_p_value", "n_train", "collapsed", "error"],
        rows,
    )
    outputs = ["gof_scores.csv", "gof_summary.json"]
    if args.qq:
        out.write_csv(dest / "qq.csv", ["user_id", "data_quantile", "model_quantile"], qq_rows)
        outputs.append("qq.csv")
    summary = {
        "models": list(MODEL_ORDER),
        "users_compared": compared,
        "wins": wins,
        "win_rates": {k: _win_rate(v, compared) for k, v in wins.items()},
        "screened": dict(sorted(skip.items())),
        "user_errors": user_errors,
    }
    out.write_json(dest / "gof_summary.json", summary)
    _manifest(dest, "gof", cfg, [src], outputs, split_seeds="blake2b(f'{seed}:{user_id}')")
    print(
        f"users={compared} "
        + " ".join(f"{k}={_win_rate(v, compared):.3f}" for k, v in wins.items())
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect


def _fits_from_params(path: Path) -> dict:
    """Rebuild per-user fit outcomes from ``camellog_params.csv``."""
    fits = {}
    for row in out.read_csv(path):
        uid = row["user_id"]
        reason = row["reason"] or None
        rep = None
        feats = None
        if row["theta"]:
            params = CamelLogParams.from_values(
                *(float(row[k]) for k in ("theta", "alpha_in", "beta_in", "alpha_off", "beta_off"))
            )
            rep = MixtureFitReport(
                params,
                float(row["train_loglik"]),
                int(row["n_iterations"]),
                row["converged"] == "1",
                5,
                row["collapsed"] == "1",
                int(row["n_iats"]),
            )
            if reason is None:
                feats = UserFeatures(uid, float(row["r"]), float(row["m"]))
        fits[uid] = UserFit(uid, rep, feats, reason)
    return dict(sorted(fits.items()))


def _detect_input_kind(path: Path) -> str:
    header = out.sniff_header(path)
    if header[: len(out.PARAMS_HEADER)] == out.PARAMS_HEADER:
        return "params"
    if header == out.IATS_HEADER:
        return "iats"
    if tuple(header[:3]) == MINIMAL_HEADER or tuple(header[: len(AOL_HEADER)]) == AOL_HEADER:
        return "log"
    raise DomainError(f"cannot tell what kind of file {path} is (header {header})")


def cmd_detect(args, cfg: RunConfig) -> int:
    src = _require(args.input)
    kind = _detect_input_kind(src)
    inputs = [src]
    if kind == "params":
        fits = _fits_from_params(src)
    elif kind == "iats":
        fits = _fit_all(_load_series(src), cfg)
        if src.with_name("summary.csv").exists():
            inputs.append(src.with_name("summary.csv"))
    else:
        fits = _fit_all(extract_iats(read_log(src).events, landed_only=True), cfg)

    report = group_stage(fits, cfg)
    dest = _prepare_out(cfg)
    out.write_csv(dest / "anomaly_report.csv", out.REPORT_HEADER, out.report_rows(report))
    out.write_csv(
        dest / "reference.csv",
        ["rank", "log_density"],
        ((i, float(v)) for i, v in enumerate(report.reference, start=1)),
    )
    _manifest(
        dest,
        "detect",
        cfg,
        inputs,
        ["anomaly_report.csv", "reference.csv"],
        input_kind=kind,
        reference_seed=report.reference_seed,
        metaclick=report.params.as_dict(),
        threshold=report.threshold,
        flag_rule=cfg.flag_rule,
        n_scored=len(report.scored),
        flagged=list(report.flagged),
        excluded=_reason_counts(report.auto_outliers),
        n_clamped=sum(r.clamped for r in report.scored),
    )
    print(
        f"scored={len(report.scored)} flagged={len(report.flagged)} "
        f"auto_outliers={len(report.auto_outliers)} eta={report.params.eta:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, cfg: RunConfig) -> int:
    if args.n_users < 0 or args.n_iats < 1:
        raise UsageError("--n-users must be >= 0 and --n-iats >= 1")
    inputs = []
    if args.params_path:
        spec = PopulationSpec.load(_require(args.params_path))
        inputs.append(Path(args.params_path))
    else:
        spec = DEFAULT_POPULATION
    if args.n_users + spec.planted_count == 0:
        raise UsageError("nothing to simulate")
    users = simulate_users(spec, args.n_users, args.n_iats, cfg.seed)
    events = sorted(simulate_events(spec, users, cfg.seed))
    dest = _prepare_out(cfg)
    out.write_csv(dest / "synthetic_log.csv", list(MINIMAL_HEADER), ((e.user_id, e.timestamp, e.landed) for e in events))
    out.write_csv(
        dest / "truth.csv",
        ["user_id", "planted", "r", "m", "theta", "alpha_in", "beta_in", "alpha_off", "beta_off"],
        ((u.user_id, u.planted, u.r, u.m) + tuple(u.params.as_tuple()) for u in users),
    )
    _manifest(
        dest,
        "simulate",
        cfg,
        inputs,
        ["synthetic_log.csv", "truth.csv"],
        population=spec.to_dict(),
        n_users=args.n_users,
        n_iats=args.n_iats,
    )
    print(f"users={len(users)} planted={spec.planted_count} events={len(events)}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "gof": cmd_gof,
    "detect": cmd_detect,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"iatanomaly: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"iatanomaly: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GroupFitError as exc:
        print(f"iatanomaly: {exc}", file=sys.stderr)
        for uid, status in exc.diagnostics.items():
            log.info("%s: %s", uid, status)
        return EXIT_FIT
    except (IatError, OSError, ValueError, KeyError) as exc:
        print(f"iatanomaly: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
