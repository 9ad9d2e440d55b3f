"""Group-level model of per-user (R, M) pairs.

``R = theta / (1 - theta)`` and ``M = log(alpha_in)`` (natural log, alpha in
seconds) each follow a log-logistic marginal; a Gumbel copula couples them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import dists
from .dists import LogLogisticParams
from .errors import DegenerateFitError, DomainError, InsufficientDataError

__all__ = [
    "UserFeatures",
    "MetaClickParams",
    "NegativeDependenceWarning",
    "gumbel_copula_cdf",
    "gumbel_copula_logdensity",
    "metaclick_cdf",
    "metaclick_logpdf",
    "kendall_tau",
    "kendall_tau_direct",
    "fit_metaclick",
    "metaclick_sample",
    "positive_stable_sample",
    "sample_copula",
    "eta_from_tau",
]

U_CLAMP = 1e-15
_DIRECT_TAU_MAX = 20000


class NegativeDependenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class UserFeatures:
    user_id: str
    r: float
    m: float


@dataclass(frozen=True)
class MetaClickParams:
    eta: float
    r_marginal: LogLogisticParams
    m_marginal: LogLogisticParams

    def __post_init__(self):
        object.__setattr__(self, "eta", float(self.eta))
        if not (math.isfinite(self.eta) and self.eta >= 1.0):
            raise DomainError(f"eta must be >= 1, got {self.eta!r}")

    @classmethod
    def from_values(cls, eta, alpha_r, beta_r, alpha_m, beta_m):
        return cls(eta, LogLogisticParams(alpha_r, beta_r), LogLogisticParams(alpha_m, beta_m))

    def as_dict(self):
        return {
            "eta": self.eta,
            "alpha_r": self.r_marginal.alpha,
            "beta_r": self.r_marginal.beta,
            "alpha_m": self.m_marginal.alpha,
            "beta_m": self.m_marginal.beta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls.from_values(d["eta"], d["alpha_r"], d["beta_r"], d["alpha_m"], d["beta_m"])


def _check_eta(eta):
    if not (math.isfinite(eta) and eta >= 1.0):
        raise DomainError(f"eta must be >= 1, got {eta!r}")


def _gumbel_from_neglogs(lx, ly, eta):
    """``A = (x^eta + y^eta)^(1/eta)`` from ``lx = log x``, ``ly = log y``.

    Working with logs keeps ``x^eta`` from overflowing near u = 0.
    """
    return np.exp(np.logaddexp(eta * lx, eta * ly) / eta)


def gumbel_copula_cdf(u, v, eta: float):
    """``exp(-[(-log u)^eta + (-log v)^eta]^(1/eta))``."""
    _check_eta(eta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~((u >= 0) & (u <= 1))) or np.any(~((v >= 0) & (v <= 1))):
        raise DomainError("copula arguments must lie in [0, 1]")
    uc = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
    vc = np.clip(v, U_CLAMP, 1.0 - U_CLAMP)
    a = _gumbel_from_neglogs(np.log(-np.log(uc)), np.log(-np.log(vc)), eta)
    out = np.exp(-a)
    # exact boundary values
    out = np.where(u == 1.0, v, out)
    out = np.where(v == 1.0, u, out)
    out = np.where((u == 0.0) | (v == 0.0), 0.0, out)
    return out


def _log_copula_density(lx, ly, eta):
    """log c(u, v) written in terms of ``x = -log u``, ``y = -log v``.

    c = C(u,v) (x y)^(eta-1) / (u v) * A^(1-2 eta) * (A + eta - 1)
    """
    a = _gumbel_from_neglogs(lx, ly, eta)
    x, y = np.exp(lx), np.exp(ly)
    return -a + (eta - 1.0) * (lx + ly) + x + y + (1.0 - 2.0 * eta) * np.log(a) + np.log(a + eta - 1.0)


def gumbel_copula_logdensity(u, v, eta: float):
    """Log of the mixed partial ``d^2 C / du dv`` on the open unit square."""
    _check_eta(eta)
    u = np.clip(np.asarray(u, dtype=float), U_CLAMP, 1.0 - U_CLAMP)
    v = np.clip(np.asarray(v, dtype=float), U_CLAMP, 1.0 - U_CLAMP)
    return _log_copula_density(np.log(-np.log(u)), np.log(-np.log(v)), eta)


def _log_neglog_cdf(t, p: LogLogisticParams):
    """``log(-log F(t)) = log(log(1 + (t/alpha)^-beta))`` without cancellation."""
    w = -p.beta * (np.log(t) - math.log(p.alpha))  # log of (t/alpha)^-beta
    sp = np.logaddexp(0.0, w)
    with np.errstate(divide="ignore"):
        # softplus(w) ~ exp(w) for very negative w; its log is then ~ w
        return np.where(w < -30.0, w + np.log1p(-0.5 * np.exp(np.minimum(w, -30.0))), np.log(sp))


def metaclick_cdf(r, m, p: MetaClickParams):
    """Joint CDF: the Gumbel copula applied to the two log-logistic CDFs."""
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(~(r > 0)) or np.any(~(m > 0)):
        raise DomainError("r and m must be positive")
    a = _gumbel_from_neglogs(_log_neglog_cdf(r, p.r_marginal), _log_neglog_cdf(m, p.m_marginal), p.eta)
    return np.exp(-a)


def metaclick_logpdf(r, m, p: MetaClickParams, return_flags: bool = False):
    """Joint log-density ``log c(F_R(r), F_M(m)) + log f_R(r) + log f_M(m)``.

    Copula arguments are clamped to ``[1e-15, 1 - 1e-15]``; with
    ``return_flags`` a boolean array marks the points where clamping bit.
    """
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(~(r > 0)) or np.any(~(m > 0)):
        raise DomainError("r and m must be positive")
    marg = dists.ll_logpdf(r, p.r_marginal) + dists.ll_logpdf(m, p.m_marginal)
    if p.eta == 1.0:
        out = marg
        flags = np.zeros(np.broadcast(r, m).shape, dtype=bool)
    else:
        lx = _log_neglog_cdf(r, p.r_marginal)
        ly = _log_neglog_cdf(m, p.m_marginal)
        # -log(1 - 1e-15) ~ 1e-15 and -log(1e-15) ~ 34.5 bound x and y
        lo, hi = math.log(-math.log1p(-U_CLAMP)), math.log(-math.log(U_CLAMP))
        flags = (lx < lo) | (lx > hi) | (ly < lo) | (ly > hi)
        out = _log_copula_density(np.clip(lx, lo, hi), np.clip(ly, lo, hi), p.eta) + marg
    if return_flags:
        return out, flags
    return out


def kendall_tau_direct(x, y) -> float:
    """Pair-count Kendall tau, O(n^2): ties count as neither kind of pair."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2 or y.size != n:
        raise DomainError("Kendall tau needs at least two (x, y) pairs")
    s = 0
    for i in range(n - 1):
        s += int(np.sum(np.sign(x[i + 1 :] - x[i]) * np.sign(y[i + 1 :] - y[i])))
    return s / (0.5 * n * (n - 1))


def _tau_fast(x, y) -> float:
    # scipy's tau-b rescaled to the pair-count (tau-a) denominator
    from scipy.stats import kendalltau

    n = x.size
    n0 = n * (n - 1) / 2
    _, cx = np.unique(x, return_counts=True)
    _, cy = np.unique(y, return_counts=True)
    n1 = float(np.sum(cx * (cx - 1)) / 2)
    n2 = float(np.sum(cy * (cy - 1)) / 2)
    tau_b = kendalltau(x, y, variant="b").statistic
    if not math.isfinite(tau_b):
        return 0.0
    return float(tau_b * math.sqrt((n0 - n1) * (n0 - n2)) / n0)


def kendall_tau(pairs_or_x, y=None) -> float:
    """Kendall tau over ``(x, y)`` pairs.

    Accepts a sequence of pairs or two equal-length sequences. Uses the
    direct pair count up to 20 000 pairs, scipy's O(n log n) count above.
    """
    if y is None:
        arr = np.asarray(pairs_or_x, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DomainError("expected a sequence of (x, y) pairs")
        x, y = arr[:, 0], arr[:, 1]
    else:
        x, y = np.asarray(pairs_or_x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise DomainError("Kendall tau needs at least two (x, y) pairs")
    if x.size <= _DIRECT_TAU_MAX:
        return kendall_tau_direct(x, y)
    return _tau_fast(x, y)


def eta_from_tau(tau: float) -> float:
    """Gumbel relation ``eta = 1 / (1 - tau)``."""
    return 1.0 / (1.0 - tau)


def fit_metaclick(features, min_users: int = 30) -> MetaClickParams:
    """Marginals by log-logistic MLE, ``eta`` from Kendall tau.

    Negative dependence cannot be represented by the Gumbel family; the fit
    then returns ``eta = 1`` and emits NegativeDependenceWarning.
    """
    r = np.array([f.r for f in features], dtype=float)
    m = np.array([f.m for f in features], dtype=float)
    if r.size < min_users:
        raise InsufficientDataError(f"group fit needs at least {min_users} users, got {r.size}")
    if np.any(~(r > 0)) or np.any(~(m > 0)) or not (np.all(np.isfinite(r)) and np.all(np.isfinite(m))):
        raise DomainError("features must have finite, positive r and m")
    tau = kendall_tau(r, m)
    if tau >= 1.0:
        raise DegenerateFitError("Kendall tau is 1: (r, m) are comonotone, eta is unbounded")
    if tau < 0:
        warnings.warn(
            f"negative Kendall tau {tau:.4f}; Gumbel copula clamped to independence",
            NegativeDependenceWarning,
            stacklevel=2,
        )
        eta = 1.0
    else:
        eta = eta_from_tau(tau)
    return MetaClickParams(eta, dists.ll_fit_mle(r), dists.ll_fit_mle(m))


def positive_stable_sample(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Positive stable variates with Laplace transform ``exp(-s^alpha)``.

    Kanter's representation, valid for ``0 < alpha < 1``.
    """
    theta = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    a = (
        np.sin(alpha * theta) ** (alpha / (1.0 - alpha))
        * np.sin((1.0 - alpha) * theta)
        / np.sin(theta) ** (1.0 / (1.0 - alpha))
    )
    return (a / w) ** ((1.0 - alpha) / alpha)


def sample_copula(n: int, eta: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Marshall-Olkin draw of (u, v) from the Gumbel copula."""
    _check_eta(eta)
    rng = dists.as_rng(seed)
    n = dists._check_n(n)
    if eta == 1.0:
        u, v = rng.random(n), rng.random(n)
    else:
        s = positive_stable_sample(1.0 / eta, n, rng)
        e = rng.exponential(1.0, (2, n))
        u, v = np.exp(-((e / s) ** (1.0 / eta)))
    lo, hi = U_CLAMP, 1.0 - U_CLAMP
    return np.clip(u, lo, hi), np.clip(v, lo, hi)


def metaclick_sample(n: int, p: MetaClickParams, seed, prefix: str = "sim") -> list[UserFeatures]:
    u, v = sample_copula(n, p.eta, seed)
    r = dists.ll_quantile(u, p.r_marginal)
    m = dists.ll_quantile(v, p.m_marginal)
    width = len(str(n - 1))
    return [UserFeatures(f"{prefix}{i:0{width}d}", float(ri), float(mi)) for i, (ri, mi) in enumerate(zip(r, m))]
