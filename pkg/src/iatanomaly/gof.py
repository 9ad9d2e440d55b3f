"""Goodness of fit and model selection.

K-S p-values use the asymptotic Kolmogorov distribution. When the reference
CDF was fitted on a training split the p-value is reported as-is, without a
correction for estimated parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import DomainError, IatError
from .mixtures import FAMILIES, fit_family, loglikelihood, mixture_cdf, mixture_quantile, mixture_sample

__all__ = [
    "KsResult",
    "GofScore",
    "kolmogorov_sf",
    "ks_one_sample",
    "ks_two_sample",
    "bic",
    "split_train_test",
    "evaluate_models",
    "qq_points",
    "qq_points_sampled",
    "MODEL_ORDER",
]

MODEL_ORDER = ("camellog", "expmix", "paretomix")


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n_effective: float


@dataclass(frozen=True)
class GofScore:
    model_name: str
    test_loglik: float
    bic: float
    ks: KsResult | None
    train_loglik: float = float("nan")
    n_train: int = 0
    n_params: int = 0
    params: object = None
    collapsed: bool = False
    error: str | None = None


def kolmogorov_sf(lam: float, term_tol: float = 1e-12) -> float:
    """``Q(lam) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)``.

    The alternating series is cut when a term drops below ``term_tol``.
    """
    if lam <= 0:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < term_tol:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_one_sample(data, cdf) -> KsResult:
    """``D_n = sup |F_n - F|``, checked on both sides of every step."""
    x = np.sort(np.asarray(data, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("K-S test of empty data")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    d = min(1.0, max(0.0, d))
    return KsResult(d, kolmogorov_sf(math.sqrt(n) * d), float(n))


def ks_two_sample(a, b) -> KsResult:
    """Largest gap between the two empirical CDFs over all pooled points."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("K-S test of empty data")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    n_eff = a.size * b.size / (a.size + b.size)
    return KsResult(d, kolmogorov_sf(math.sqrt(n_eff) * d), float(n_eff))


def bic(train_loglik: float, k: int, n: int) -> float:
    """``-2 L + k ln n``; lower is preferred."""
    if n < 1 or k < 1:
        raise DomainError("BIC needs n >= 1 and k >= 1")
    return -2.0 * train_loglik + k * math.log(n)


def split_train_test(data, train_fraction: float, seed):
    x = np.asarray(data, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    perm = rng.permutation(x.size)
    n_train = int(round(train_fraction * x.size))
    return x[perm[:n_train]], x[perm[n_train:]]


def evaluate_models(data, split_seed, config: RunConfig | None = None, models=MODEL_ORDER) -> list[GofScore]:
    """Fit each mixture family on a random training split and score it on
    the held-out split (test log-likelihood, one-sample K-S) and on the
    training split (BIC). A family whose fit fails is reported with
    ``error`` set and NaN scores; the others are unaffected.
    """
    cfg = config or RunConfig()
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 2 * cfg.em.min_fit_size:
        raise DomainError(f"need at least {2 * cfg.em.min_fit_size} inter-arrival times for a train/test split")
    train, test = split_train_test(x, cfg.train_fraction, split_seed)
    out = []
    for name in models:
        try:
            rep = fit_family(name, train, cfg.em, seed=split_seed)
        except IatError as exc:
            nan = float("nan")
            out.append(GofScore(name, nan, nan, None, n_train=train.size, n_params=FAMILIES[name].n_params, error=str(exc)))
            continue
        params = rep.params
        out.append(
            GofScore(
                model_name=name,
                test_loglik=loglikelihood(params, test, floor=cfg.pareto_floor),
                bic=bic(rep.train_loglik, rep.n_params, train.size),
                ks=ks_one_sample(test, lambda t, p=params: mixture_cdf(t, p)),
                train_loglik=rep.train_loglik,
                n_train=train.size,
                n_params=rep.n_params,
                params=params,
                collapsed=rep.collapsed,
            )
        )
    return out


def qq_points(data, quantile_fn) -> np.ndarray:
    """Pairs ``(sorted data[i], quantile_fn((i - 0.5) / n))`` as an (n, 2) array.

    ``quantile_fn`` may also be a fitted mixture parameter record.
    """
    x = np.sort(np.asarray(data, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise DomainError("Q-Q plot needs at least two points")
    if not callable(quantile_fn):
        params = quantile_fn
        quantile_fn = lambda u: mixture_quantile(u, params)  # noqa: E731
    u = (np.arange(1, n + 1) - 0.5) / n
    return np.column_stack([x, np.asarray(quantile_fn(u), dtype=float)])


def qq_points_sampled(data, params, seed) -> np.ndarray:
    """Sample-versus-sample Q-Q: sorted data against a sorted model draw of
    equal size."""
    x = np.sort(np.asarray(data, dtype=float).ravel())
    if x.size < 2:
        raise DomainError("Q-Q plot needs at least two points")
    sim = np.sort(mixture_sample(x.size, params, seed))
    return np.column_stack([x, sim])
