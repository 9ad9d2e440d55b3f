"""Inter-arrival time models and population-level anomaly ranking."""
__version__ = "0.1.0"

from .anomaly import AnomalyRecord, RankWeirdnessReport, rank_weirdness, run_m3a, score_user
from .config import EmConfig, RunConfig
from .dists import (
    ExponentialParams,
    LogLogisticParams,
    ParetoParams,
    ll_cdf,
    ll_fit_mle,
    ll_pdf,
    ll_quantile,
    ll_sample,
    odds_ratio,
)
from .errors import (
    ConfigError,
    DegenerateFitError,
    DomainError,
    GroupFitError,
    IatError,
    InsufficientDataError,
    SingularityError,
)
from .gof import evaluate_models, ks_one_sample, ks_two_sample, qq_points
from .ingest import IatSeries, QueryEvent, extract_iats, log_histogram, orphan_flags, parse_log, read_log
from .metamodel import MetaClickParams, UserFeatures, fit_metaclick, kendall_tau, metaclick_logpdf, metaclick_sample
from .mixtures import CamelLogParams, MixtureFitReport, camellog_fit_em, camellog_pdf, camellog_sample

__all__ = [
    "__version__",
    "AnomalyRecord",
    "CamelLogParams",
    "ConfigError",
    "DegenerateFitError",
    "DomainError",
    "EmConfig",
    "ExponentialParams",
    "GroupFitError",
    "IatError",
    "IatSeries",
    "InsufficientDataError",
    "LogLogisticParams",
    "MetaClickParams",
    "MixtureFitReport",
    "ParetoParams",
    "QueryEvent",
    "RankWeirdnessReport",
    "RunConfig",
    "SingularityError",
    "UserFeatures",
    "camellog_fit_em",
    "camellog_pdf",
    "camellog_sample",
    "evaluate_models",
    "extract_iats",
    "fit_metaclick",
    "kendall_tau",
    "ks_one_sample",
    "ks_two_sample",
    "ll_cdf",
    "ll_fit_mle",
    "ll_pdf",
    "ll_quantile",
    "ll_sample",
    "log_histogram",
    "metaclick_logpdf",
    "metaclick_sample",
    "odds_ratio",
    "orphan_flags",
    "parse_log",
    "qq_points",
    "rank_weirdness",
    "read_log",
    "run_m3a",
    "score_user",
]
