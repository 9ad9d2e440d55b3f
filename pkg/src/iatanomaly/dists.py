"""Univariate building blocks: log-logistic, exponential and Pareto.

All functions are vectorised over their first argument. Parameters are
validated once, when the parameter record is constructed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateFitError, DomainError, SingularityError

__all__ = [
    "LogLogisticParams",
    "ExponentialParams",
    "ParetoParams",
    "ll_cdf",
    "ll_pdf",
    "ll_logpdf",
    "ll_quantile",
    "ll_sample",
    "ll_loglik",
    "ll_fit_mle",
    "odds_ratio",
    "exp_logpdf",
    "exp_cdf",
    "exp_quantile",
    "exp_sample",
    "exp_fit",
    "pareto_logpdf",
    "pareto_cdf",
    "pareto_quantile",
    "pareto_sample",
    "pareto_fit",
    "as_rng",
    "weighted_median",
]

_LL_MAX_ITER = 200
_LL_REL_TOL = 1e-10
_BETA_LIMIT = 1e8


def _check_positive_finite(**values):
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class LogLogisticParams:
    """Log-logistic law. ``alpha`` is the median, ``beta`` the shape."""

    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        _check_positive_finite(alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True)
class ExponentialParams:
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))
        _check_positive_finite(rate=self.rate)


@dataclass(frozen=True)
class ParetoParams:
    """Pareto type I: ``P(T > t) = (xmin / t) ** shape`` for ``t >= xmin``."""

    xmin: float
    shape: float

    def __post_init__(self):
        object.__setattr__(self, "xmin", float(self.xmin))
        object.__setattr__(self, "shape", float(self.shape))
        _check_positive_finite(xmin=self.xmin, shape=self.shape)


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    # open interval (0, 1) so every quantile function is finite
    return rng.uniform(np.finfo(float).tiny, 1.0, size=n)


def _check_n(n):
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    return int(n)


# ---------------------------------------------------------------------------
# log-logistic


def _nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t >= 0)):
        raise DomainError("t must be >= 0")
    return t


def ll_cdf(t, p: LogLogisticParams):
    """``1 / (1 + (t/alpha)^-beta)``, evaluated as a logistic in log t."""
    t = _nonneg(t)
    with np.errstate(divide="ignore"):
        z = p.beta * (np.log(t) - math.log(p.alpha))
    return expit(z)


def ll_logpdf(t, p: LogLogisticParams):
    """Log density; ``t`` must be strictly positive."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("log-density requires t > 0")
    logt = np.log(t)
    z = p.beta * (logt - math.log(p.alpha))
    return math.log(p.beta) - logt + z - 2.0 * np.logaddexp(0.0, z)


def ll_pdf(t, p: LogLogisticParams):
    """Density ``(b/a)(t/a)^(b-1) / (1 + (t/a)^b)^2``.

    At ``t = 0`` the density is ``1/alpha`` when ``beta == 1``, zero when
    ``beta > 1`` and unbounded when ``beta < 1`` (raises SingularityError).
    """
    t = _nonneg(t)
    zero = t == 0
    if np.any(zero):
        if p.beta < 1:
            raise SingularityError(f"log-logistic density is infinite at t=0 for beta={p.beta}")
        at_zero = 1.0 / p.alpha if p.beta == 1 else 0.0
        out = np.full(t.shape, at_zero)
        pos = ~zero
        out[pos] = np.exp(ll_logpdf(t[pos], p))
        return out if out.ndim else float(out)
    return np.exp(ll_logpdf(t, p))


def ll_quantile(u, p: LogLogisticParams):
    """Inverse CDF ``alpha * (u/(1-u))^(1/beta)`` on the open unit interval."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return p.alpha * np.exp((np.log(u) - np.log1p(-u)) / p.beta)


def ll_sample(n: int, p: LogLogisticParams, seed) -> np.ndarray:
    n = _check_n(n)
    return ll_quantile(_uniforms(as_rng(seed), n), p)


def odds_ratio(t, p: LogLogisticParams):
    """``F(t) / (1 - F(t)) = (t/alpha)^beta``."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("odds ratio requires t > 0")
    return np.exp(p.beta * (np.log(t) - math.log(p.alpha)))


def ll_loglik(data, p: LogLogisticParams, weights=None) -> float:
    lp = ll_logpdf(data, p)
    if weights is None:
        return float(np.sum(lp))
    return float(np.dot(np.asarray(weights, dtype=float), lp))


def weighted_median(x, w) -> float:
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    idx = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(x[order][min(idx, len(x) - 1)])


def _prepare_weighted(data, weights, name="data"):
    x = np.asarray(data, dtype=float).ravel()
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape:
            raise DomainError("weights must have the same length as the data")
        if np.any(~(w >= 0)) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and non-negative")
    if np.any(~(x > 0)) or not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be positive and finite")
    total = w.sum()
    if not total > 0:
        raise DomainError("weights must have a positive sum")
    return x, w


def _ll_objective(y, w, mu, b):
    """Mean weighted log-likelihood of log-data ``y`` and its derivatives
    with respect to (mu = log alpha, b = log beta)."""
    if b > math.log(_BETA_LIMIT) + 1.0:
        return -np.inf, np.zeros(2), -np.eye(2)
    beta = math.exp(b)
    z = beta * (y - mu)
    s = expit(z)
    q = s * (1.0 - s)
    f = b + np.dot(w, z - 2.0 * np.logaddexp(0.0, z)) - np.dot(w, y)
    one_m2s = 1.0 - 2.0 * s
    g = np.array([-beta * np.dot(w, one_m2s), 1.0 + np.dot(w, z * one_m2s)])
    h_mm = -2.0 * beta * beta * np.dot(w, q)
    h_mb = np.dot(w, -beta * one_m2s + 2.0 * beta * z * q)
    h_bb = np.dot(w, z * one_m2s - 2.0 * z * z * q)
    return f, g, np.array([[h_mm, h_mb], [h_mb, h_bb]])


def ll_fit_mle(data, weights=None, init: LogLogisticParams | None = None) -> LogLogisticParams:
    """Weighted maximum-likelihood fit of a log-logistic law.

    The search runs in ``(log alpha, log beta)`` with damped Newton steps
    and backtracking, so every accepted step increases the likelihood.
    ``init`` warm-starts the search (EM passes the previous M-step).

    Raises
    ------
    DegenerateFitError
        Fewer than two distinct values carry positive weight, or the shape
        diverges.
    """
    x, w = _prepare_weighted(data, weights)
    live = w > 0
    if np.unique(x[live]).size < 2:
        raise DegenerateFitError("log-logistic fit needs at least two distinct values")
    w = w / w.sum()
    y = np.log(x)

    if init is None:
        mean = float(np.dot(w, y))
        sd = math.sqrt(float(np.dot(w, (y - mean) ** 2)))
        mu = math.log(weighted_median(x, w))
        b = math.log(math.pi / (math.sqrt(3.0) * sd))
    else:
        mu, b = math.log(init.alpha), math.log(init.beta)

    f, g, h = _ll_objective(y, w, mu, b)
    for _ in range(_LL_MAX_ITER):
        # Newton direction when the Hessian is negative definite,
        # otherwise a scaled gradient step.
        if h[0, 0] < 0 and np.linalg.det(h) > 0:
            step = -np.linalg.solve(h, g)
        else:
            step = g / max(1.0, float(np.abs(g).max()))
        # at most a factor e^2 per step in alpha or beta
        scale = min(1.0, 2.0 / max(float(np.abs(step).max()), 1e-300))
        for _ in range(60):
            mu_new, b_new = mu + scale * step[0], b + scale * step[1]
            f_new, g_new, h_new = _ll_objective(y, w, mu_new, b_new)
            if f_new >= f:
                break
            scale *= 0.5
        else:
            break
        change = f_new - f
        mu, b, f, g, h = mu_new, b_new, f_new, g_new, h_new
        if b > math.log(_BETA_LIMIT):
            raise DegenerateFitError("log-logistic shape diverged; data is (nearly) constant")
        if change <= _LL_REL_TOL * max(abs(f), 1.0):
            break
    return LogLogisticParams(math.exp(mu), math.exp(b))


# ---------------------------------------------------------------------------
# exponential


def exp_logpdf(t, p: ExponentialParams):
    t = _nonneg(t)
    return math.log(p.rate) - p.rate * t


def exp_cdf(t, p: ExponentialParams):
    return -np.expm1(-p.rate * _nonneg(t))


def exp_quantile(u, p: ExponentialParams):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return -np.log1p(-u) / p.rate


def exp_sample(n: int, p: ExponentialParams, seed) -> np.ndarray:
    return exp_quantile(_uniforms(as_rng(seed), _check_n(n)), p)


def exp_fit(data, weights=None) -> ExponentialParams:
    """Closed form: weighted count over weighted sum."""
    x, w = _prepare_weighted(data, weights)
    return ExponentialParams(w.sum() / np.dot(w, x))


# ---------------------------------------------------------------------------
# Pareto


def pareto_logpdf(t, p: ParetoParams):
    """Log density; ``-inf`` below ``xmin`` where the law has no mass."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("log-density requires t > 0")
    inside = t >= p.xmin
    out = math.log(p.shape) + p.shape * math.log(p.xmin) - (p.shape + 1.0) * np.log(t)
    return np.where(inside, out, -np.inf)


def pareto_cdf(t, p: ParetoParams):
    t = _nonneg(t)
    with np.errstate(divide="ignore"):
        out = -np.expm1(p.shape * (math.log(p.xmin) - np.log(t)))
    return np.where(t >= p.xmin, out, 0.0)


def pareto_quantile(u, p: ParetoParams):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return p.xmin * np.exp(-np.log1p(-u) / p.shape)


def pareto_sample(n: int, p: ParetoParams, seed) -> np.ndarray:
    return pareto_quantile(_uniforms(as_rng(seed), _check_n(n)), p)


def pareto_fit(data, weights=None, xmin: float | None = None) -> ParetoParams:
    """Weighted shape MLE with ``xmin`` held fixed (default: data minimum)."""
    x, w = _prepare_weighted(data, weights)
    if xmin is None:
        xmin = float(x.min())
    if np.any(x < xmin):
        raise DomainError(f"Pareto data must be >= xmin={xmin}")
    denom = float(np.dot(w, np.log(x / xmin)))
    if not denom > 0:
        raise DegenerateFitError("Pareto shape is unidentified: all weighted data sit at xmin")
    return ParetoParams(xmin, w.sum() / denom)
