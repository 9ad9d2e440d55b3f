"""End-to-end anomaly detection over a population of users.

1. fit Camel-Log to each user's landed inter-arrival times,
2. turn each fit into features ``R = theta/(1-theta)``, ``M = ln(alpha_in)``,
3. fit the group-level copula model to all features,
4. score every user by joint log-density and rank least likely first,
   against a reference population simulated from the fitted group model.

Users that cannot be scored by construction (screened by the orphan or
no-sleep rules, too few inter-arrival times, ``theta = 1``, sub-second
in-session median) are reported as automatic outliers without a rank.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .config import RunConfig
from .errors import GroupFitError, IatError, InsufficientDataError
from .ingest import extract_iats, max_iat_flags, orphan_flags
from .metamodel import MetaClickParams, UserFeatures, fit_metaclick, metaclick_logpdf, metaclick_sample
from .mixtures import CamelLogParams, MixtureFitReport, camellog_fit_em

__all__ = [
    "AnomalyRecord",
    "RankWeirdnessReport",
    "UserFit",
    "user_seed",
    "features_from_params",
    "fit_users",
    "score_user",
    "score_features",
    "rank_weirdness",
    "group_stage",
    "run_m3a",
    "run_from_series",
]

REASONS = ("orphan-flag", "max-iat-flag", "insufficient-data", "theta-one", "theta-zero", "sub-second-median")


@dataclass(frozen=True)
class AnomalyRecord:
    user_id: str
    features: UserFeatures | None
    log_density: float = float("nan")
    rank: int | None = None
    auto_outlier_reason: str | None = None
    flagged: bool = False
    clamped: bool = False


@dataclass(frozen=True)
class RankWeirdnessReport:
    scored: tuple
    reference: np.ndarray = field(repr=False)
    flagged: tuple
    threshold: float
    params: MetaClickParams
    reference_seed: int
    auto_outliers: tuple = ()
    fits: dict = field(default_factory=dict, repr=False)

    def records(self):
        """Scored users (least likely first) followed by automatic outliers."""
        return list(self.scored) + list(self.auto_outliers)


@dataclass(frozen=True)
class UserFit:
    user_id: str
    report: MixtureFitReport | None
    features: UserFeatures | None
    reason: str | None


def user_seed(base_seed: int, user_id: str) -> int:
    """Stable per-user seed, independent of process, ordering and workers."""
    digest = hashlib.blake2b(f"{base_seed}:{user_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def features_from_params(user_id: str, params: CamelLogParams):
    """Returns ``(UserFeatures or None, reason or None)``."""
    theta = params.theta
    if theta >= 1.0:
        return None, "theta-one"
    if theta <= 0.0:
        return None, "theta-zero"
    m = math.log(params.in_component.alpha)
    if m <= 0.0:
        return None, "sub-second-median"
    return UserFeatures(user_id, theta / (1.0 - theta), m), None


def _fit_one(args):
    uid, iats, em, seed = args
    try:
        rep = camellog_fit_em(iats, em, seed=user_seed(seed, uid))
    except InsufficientDataError:
        return UserFit(uid, None, None, "insufficient-data")
    feats, reason = features_from_params(uid, rep.params)
    return UserFit(uid, rep, feats, reason)


def fit_users(iat_map: dict, config: RunConfig, skip: dict | None = None) -> dict[str, UserFit]:
    """Fit every user in ``iat_map`` (user id -> IAT array), in user-id order.

    ``skip`` maps user ids to a screening reason; those users are not fitted.
    The result does not depend on ``config.threads``.
    """
    skip = skip or {}
    out = {uid: UserFit(uid, None, None, skip[uid]) for uid in sorted(skip) if uid in iat_map}
    jobs = [(uid, np.asarray(iat_map[uid], dtype=float), config.em, config.seed) for uid in sorted(iat_map) if uid not in skip]
    for res in parallel_map(_fit_one, jobs, config.threads):
        out[res.user_id] = res
    return dict(sorted(out.items()))


def score_user(features: UserFeatures, p: MetaClickParams) -> float:
    """Joint log-density of a user's (R, M); lower means weirder."""
    return float(metaclick_logpdf(features.r, features.m, p))


def score_features(features, p: MetaClickParams):
    r = np.array([f.r for f in features], dtype=float)
    m = np.array([f.m for f in features], dtype=float)
    return metaclick_logpdf(r, m, p, return_flags=True)


def _sort_key(rec: AnomalyRecord):
    return (rec.log_density, rec.user_id)


def rank_weirdness(
    scored,
    reference_seed: int,
    p: MetaClickParams,
    config: RunConfig | None = None,
    auto_outliers=(),
    fits=None,
) -> RankWeirdnessReport:
    """Rank users least likely first and flag those below the reference.

    The reference is a population of the same size drawn from ``p``. The
    default ``reference-min`` rule flags users whose log-density is below
    the lowest log-density seen across ``config.reference_replicates``
    such populations (the first of which is the plotted reference);
    ``reference-quantile`` uses the ``flag_quantile`` quantile of the
    pooled replicates instead.
    """
    cfg = config or RunConfig()
    scored = list(scored)
    if not scored:
        raise InsufficientDataError("nothing to rank")
    ordered = sorted(scored, key=_sort_key)
    n = len(ordered)

    pools = []
    seeds = np.random.SeedSequence(reference_seed).spawn(cfg.reference_replicates - 1)
    for i in range(cfg.reference_replicates):
        seed = reference_seed if i == 0 else np.random.default_rng(seeds[i - 1])
        sim = metaclick_sample(n, p, seed)
        pools.append(np.sort(score_features(sim, p)[0]))
    reference = pools[0]
    pooled = np.concatenate(pools)
    if cfg.flag_rule == "reference-min":
        threshold = float(pooled.min())
    else:
        threshold = float(np.quantile(pooled, cfg.flag_quantile))

    records = []
    flagged = []
    for i, rec in enumerate(ordered, start=1):
        is_flag = rec.log_density < threshold
        if is_flag:
            flagged.append(rec.user_id)
        records.append(
            AnomalyRecord(rec.user_id, rec.features, rec.log_density, i, None, is_flag, rec.clamped)
        )
    return RankWeirdnessReport(
        scored=tuple(records),
        reference=reference,
        flagged=tuple(flagged),
        threshold=threshold,
        params=p,
        reference_seed=reference_seed,
        auto_outliers=tuple(sorted(auto_outliers, key=lambda r: r.user_id)),
        fits=dict(fits or {}),
    )


def reference_seed_for(config: RunConfig) -> int:
    return user_seed(config.seed, "__reference__")


def group_stage(user_fits: dict, config: RunConfig) -> RankWeirdnessReport:
    """Group fit, scoring and ranking from per-user fits."""
    features = [uf.features for uf in user_fits.values() if uf.features is not None]
    auto = [
        AnomalyRecord(uf.user_id, None, auto_outlier_reason=uf.reason)
        for uf in user_fits.values()
        if uf.features is None
    ]
    try:
        params = fit_metaclick(features, min_users=config.min_group_users)
    except IatError as exc:
        diag = {uf.user_id: (uf.reason or "ok") for uf in user_fits.values()}
        raise GroupFitError(f"group fit failed: {exc}", diag) from exc
    dens, clamped = score_features(features, params)
    scored = [
        AnomalyRecord(f.user_id, f, float(d), clamped=bool(c)) for f, d, c in zip(features, dens, clamped)
    ]
    fits = {uid: uf.report for uid, uf in user_fits.items() if uf.report is not None}
    return rank_weirdness(scored, reference_seed_for(config), params, config, auto, fits)


def screen_series(series: dict, config: RunConfig) -> dict:
    reasons = {}
    for uid in max_iat_flags(series, config.max_iat_query_threshold, config.max_iat_threshold):
        reasons[uid] = "max-iat-flag"
    for uid in orphan_flags(series, config.orphan_query_threshold, config.orphan_landed_threshold):
        reasons[uid] = "orphan-flag"
    return reasons


def run_from_series(series: dict, config: RunConfig, skip: dict | None = None) -> RankWeirdnessReport:
    """Pipeline from per-user IAT series (``IatSeries`` or plain arrays)."""
    iat_map = {uid: getattr(s, "iats", s) for uid, s in series.items()}
    if skip is None:
        skip = screen_series(series, config) if all(hasattr(s, "n_landed") for s in series.values()) else {}
    return group_stage(fit_users(iat_map, config, skip), config)


def run_m3a(events, config: RunConfig | None = None) -> RankWeirdnessReport:
    """Events in, ranked report out; deterministic given ``config.seed``."""
    cfg = (config or RunConfig()).validate()
    series = extract_iats(events, landed_only=True)
    return run_from_series(series, cfg)
