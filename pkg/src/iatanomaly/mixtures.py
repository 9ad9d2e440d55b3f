"""Two-component mixtures over inter-arrival times and their EM fits.

Three families share one EM skeleton:

* Camel-Log: two log-logistic components (5 free parameters),
* exponential mixture (3 free parameters),
* Pareto mixture with a shared, fixed ``xmin`` (3 free parameters).

Every parameter record is stored in canonical order: the ``in_component``
(in-session) has the smaller median. Constructing a record with the
components swapped relabels it and replaces ``theta`` by ``1 - theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dists
from .config import EmConfig
from .dists import ExponentialParams, LogLogisticParams, ParetoParams
from .errors import DegenerateFitError, DomainError, InsufficientDataError

__all__ = [
    "CamelLogParams",
    "ExpMixtureParams",
    "ParetoMixtureParams",
    "MixtureFitReport",
    "camellog_pdf",
    "camellog_sample",
    "camellog_fit_em",
    "expmix_fit_em",
    "paretomix_fit_em",
    "fit_family",
    "mixture_logpdf",
    "mixture_pdf",
    "mixture_cdf",
    "mixture_quantile",
    "mixture_sample",
    "loglikelihood",
    "FAMILIES",
]


def _median(comp) -> float:
    if isinstance(comp, LogLogisticParams):
        return comp.alpha
    if isinstance(comp, ExponentialParams):
        return math.log(2.0) / comp.rate
    return comp.xmin * 2.0 ** (1.0 / comp.shape)


@dataclass(frozen=True)
class _TwoComponent:
    theta: float
    in_component: object
    off_component: object

    def __post_init__(self):
        theta = float(self.theta)
        if not (0.0 <= theta <= 1.0):
            raise DomainError(f"theta must lie in [0, 1], got {theta!r}")
        object.__setattr__(self, "theta", theta)
        if _median(self.in_component) > _median(self.off_component):
            object.__setattr__(self, "theta", 1.0 - theta)
            a, b = self.in_component, self.off_component
            object.__setattr__(self, "in_component", b)
            object.__setattr__(self, "off_component", a)


@dataclass(frozen=True)
class CamelLogParams(_TwoComponent):
    in_component: LogLogisticParams
    off_component: LogLogisticParams
    family = "camellog"

    @classmethod
    def from_values(cls, theta, alpha_in, beta_in, alpha_off, beta_off):
        return cls(theta, LogLogisticParams(alpha_in, beta_in), LogLogisticParams(alpha_off, beta_off))

    def as_tuple(self):
        a, b = self.in_component, self.off_component
        return (self.theta, a.alpha, a.beta, b.alpha, b.beta)


@dataclass(frozen=True)
class ExpMixtureParams(_TwoComponent):
    in_component: ExponentialParams
    off_component: ExponentialParams
    family = "expmix"

    def as_tuple(self):
        return (self.theta, self.in_component.rate, self.off_component.rate)


@dataclass(frozen=True)
class ParetoMixtureParams(_TwoComponent):
    in_component: ParetoParams
    off_component: ParetoParams
    family = "paretomix"

    def __post_init__(self):
        super().__post_init__()
        if self.in_component.xmin != self.off_component.xmin:
            raise DomainError("Pareto mixture components must share xmin")

    def as_tuple(self):
        return (self.theta, self.in_component.shape, self.off_component.shape)


@dataclass(frozen=True)
class MixtureFitReport:
    params: _TwoComponent
    train_loglik: float
    n_iterations: int
    converged: bool
    n_params: int
    collapsed: bool = False
    n_obs: int = 0
    loglik_trace: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# per-family primitives


@dataclass(frozen=True)
class _Family:
    name: str
    params_cls: type
    n_params: int
    n_params_single: int
    logpdf: object
    cdf: object
    quantile: object


def _pareto_fit_fixed(x, w, xmin):
    return dists.pareto_fit(x, w, xmin=xmin)


FAMILIES = {
    "camellog": _Family("camellog", CamelLogParams, 5, 2, dists.ll_logpdf, dists.ll_cdf, dists.ll_quantile),
    "expmix": _Family("expmix", ExpMixtureParams, 3, 1, dists.exp_logpdf, dists.exp_cdf, dists.exp_quantile),
    "paretomix": _Family(
        "paretomix", ParetoMixtureParams, 3, 1, dists.pareto_logpdf, dists.pareto_cdf, dists.pareto_quantile
    ),
}


def _family_of(p) -> _Family:
    return FAMILIES[p.family]


# ---------------------------------------------------------------------------
# density, CDF, quantile, sampling


def _component_terms(t, p):
    fam = _family_of(p)
    with np.errstate(divide="ignore"):
        la = math.log(p.theta) if p.theta > 0 else -np.inf
        lb = math.log1p(-p.theta) if p.theta < 1 else -np.inf
    lp_in = fam.logpdf(t, p.in_component) if p.theta > 0 else np.full(np.shape(t), -np.inf)
    lp_off = fam.logpdf(t, p.off_component) if p.theta < 1 else np.full(np.shape(t), -np.inf)
    return la + lp_in, lb + lp_off


def mixture_logpdf(t, p):
    t = np.asarray(t, dtype=float)
    a, b = _component_terms(t, p)
    return np.logaddexp(a, b)


def mixture_pdf(t, p):
    if isinstance(p, CamelLogParams):
        return camellog_pdf(t, p)
    return np.exp(mixture_logpdf(t, p))


def camellog_pdf(t, p: CamelLogParams):
    """``theta * f_in(t) + (1 - theta) * f_off(t)``."""
    return p.theta * dists.ll_pdf(t, p.in_component) + (1.0 - p.theta) * dists.ll_pdf(t, p.off_component)


def mixture_cdf(t, p):
    fam = _family_of(p)
    return p.theta * fam.cdf(t, p.in_component) + (1.0 - p.theta) * fam.cdf(t, p.off_component)


def mixture_quantile(u, p):
    """Numerical inverse of the mixture CDF (bisection in log t).

    The mixture quantile is bracketed by the two component quantiles.
    """
    fam = _family_of(p)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    if p.theta == 1.0:
        return fam.quantile(u, p.in_component)
    if p.theta == 0.0:
        return fam.quantile(u, p.off_component)
    qa = np.log(fam.quantile(u, p.in_component))
    qb = np.log(fam.quantile(u, p.off_component))
    lo, hi = np.minimum(qa, qb), np.maximum(qa, qb)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = mixture_cdf(np.exp(mid), p) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
    return np.exp(0.5 * (lo + hi))


def mixture_sample(n: int, p, seed) -> np.ndarray:
    """Pick a component with probability ``theta``, then invert its CDF."""
    fam = _family_of(p)
    rng = dists.as_rng(seed)
    n = dists._check_n(n)
    pick_in = rng.random(n) < p.theta
    u = dists._uniforms(rng, n)
    return np.where(pick_in, fam.quantile(u, p.in_component), fam.quantile(u, p.off_component))


def camellog_sample(n: int, p: CamelLogParams, seed) -> np.ndarray:
    return mixture_sample(n, p, seed)


def loglikelihood(model, data, floor: float = -745.0) -> float:
    """Sum of log densities of ``data`` under a fitted mixture.

    Points outside a Pareto mixture's support score ``floor`` instead of
    ``-inf``.
    """
    params = model.params if isinstance(model, MixtureFitReport) else model
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("log-likelihood of empty data")
    lp = mixture_logpdf(x, params)
    if isinstance(params, ParetoMixtureParams):
        lp = np.where(np.isneginf(lp), floor, lp)
    return float(np.sum(lp))


# ---------------------------------------------------------------------------
# EM


def _two_means_log(y: np.ndarray):
    """1-D 2-means on log data; returns a boolean mask of the lower cluster."""
    c_lo, c_hi = np.quantile(y, [0.25, 0.75])
    if c_lo == c_hi:
        lower = y <= np.median(y)
    else:
        lower = None
        for _ in range(100):
            new = np.abs(y - c_lo) <= np.abs(y - c_hi)
            if lower is not None and np.array_equal(new, lower):
                break
            lower = new
            if lower.all() or not lower.any():
                break
            c_lo, c_hi = y[lower].mean(), y[~lower].mean()
    if lower.all() or not lower.any():
        lower = y <= np.median(y)
        if lower.all():
            lower = y < y.max()
    return lower


def _init_components(fam: _Family, x: np.ndarray, y: np.ndarray, lower: np.ndarray):
    theta = float(lower.mean())
    comps = []
    overall_sd = float(y.std()) or 1.0
    for mask in (lower, ~lower):
        xs, ys = x[mask], y[mask]
        if fam.name == "camellog":
            sd = float(ys.std())
            if sd <= 1e-3 * overall_sd:
                sd = 0.5 * overall_sd
            comps.append(LogLogisticParams(float(np.median(xs)), math.pi / (math.sqrt(3.0) * sd)))
        elif fam.name == "expmix":
            comps.append(ExponentialParams(1.0 / float(xs.mean())))
        else:
            xmin = float(x.min())
            denom = float(np.mean(np.log(xs / xmin)))
            comps.append(ParetoParams(xmin, 1.0 / denom if denom > 0 else 1.0))
    return theta, comps[0], comps[1]


def _jitter(fam: _Family, theta, a, b, rng: np.random.Generator, scale: float):
    theta = float(np.clip(theta + rng.normal(0.0, 0.2 * scale), 0.05, 0.95))

    def jit(c):
        if fam.name == "camellog":
            return LogLogisticParams(c.alpha * math.exp(rng.normal(0, scale)), c.beta * math.exp(rng.normal(0, scale / 2)))
        if fam.name == "expmix":
            return ExponentialParams(c.rate * math.exp(rng.normal(0, scale)))
        return ParetoParams(c.xmin, c.shape * math.exp(rng.normal(0, scale / 2)))

    return theta, jit(a), jit(b)


def _restart_start(fam: _Family, x, y, theta0: float, k: int, rng: np.random.Generator, scale: float):
    """Start for restart ``k >= 1``: split ``log t`` at a fraction pushed from
    ``theta0`` toward the nearer extreme (halving the distance each restart),
    so that small second components are reachable, then jitter."""
    edge = 0.99 if theta0 >= 0.5 else 0.01
    q = theta0 + (edge - theta0) * (1.0 - 0.5**k)
    lower = y <= np.quantile(y, q)
    if lower.all() or not lower.any():
        lower = _two_means_log(y)
    theta, a, b = _init_components(fam, x, y, lower)
    _, a, b = _jitter(fam, theta, a, b, rng, scale)
    return theta, a, b


def _mstep(fam: _Family, x, gamma, comp, xmin):
    if fam.name == "camellog":
        return dists.ll_fit_mle(x, gamma, init=comp)
    if fam.name == "expmix":
        return dists.exp_fit(x, gamma)
    return _pareto_fit_fixed(x, gamma, xmin)


def _estep(fam, x, theta, a, b):
    la = math.log(theta) + fam.logpdf(x, a)
    lb = math.log1p(-theta) + fam.logpdf(x, b)
    lse = np.logaddexp(la, lb)
    return float(lse.sum()), np.exp(la - lse)


def _run_em(fam: _Family, x, theta, a, b, cfg: EmConfig):
    """Returns (theta, a, b, trace, converged, collapsed)."""
    xmin = float(x.min())
    ll, gamma = _estep(fam, x, theta, a, b)
    trace = [ll]
    for _ in range(cfg.max_iter):
        theta = float(gamma.mean())
        if theta < cfg.collapse_weight or 1.0 - theta < cfg.collapse_weight:
            return theta, a, b, trace, False, True
        try:
            a = _mstep(fam, x, gamma, a, xmin)
            b = _mstep(fam, x, 1.0 - gamma, b, xmin)
        except DegenerateFitError:
            return theta, a, b, trace, False, True
        new_ll, gamma = _estep(fam, x, theta, a, b)
        trace.append(new_ll)
        if abs(new_ll - ll) < cfg.tol * abs(ll):
            return theta, a, b, trace, True, False
        ll = new_ll
    return theta, a, b, trace, False, False


def _single_fit(fam: _Family, x):
    if fam.name == "camellog":
        return dists.ll_fit_mle(x)
    if fam.name == "expmix":
        return dists.exp_fit(x)
    return dists.pareto_fit(x)


def _check_data(data, cfg: EmConfig):
    x = np.asarray(data, dtype=float).ravel()
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("inter-arrival times must be positive and finite")
    if x.size < cfg.min_fit_size:
        raise InsufficientDataError(f"need at least {cfg.min_fit_size} inter-arrival times, got {x.size}")
    if np.unique(x).size < 2:
        raise InsufficientDataError("need at least two distinct inter-arrival times")
    return x


def fit_family(family: str, data, config: EmConfig | None = None, seed=None) -> MixtureFitReport:
    """EM fit of one mixture family.

    Restart 0 starts from a 2-means split of ``log t``; further restarts
    jitter that start. The best final log-likelihood wins. A fit whose
    weaker component falls below ``collapse_weight``, or (with
    ``merge_check``) whose single-component BIC is no worse than the
    mixture BIC, is reported as collapsed: ``theta = 1`` with both
    components equal to the single-component fit.
    """
    cfg = config or EmConfig()
    fam = FAMILIES[family]
    x = _check_data(data, cfg)
    y = np.log(x)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    theta0, a0, b0 = _init_components(fam, x, y, _two_means_log(y))

    best = None
    total_iter = 0
    for restart in range(cfg.restarts):
        if restart == 0:
            start = (theta0, a0, b0)
        else:
            start = _restart_start(fam, x, y, theta0, restart, rng, cfg.jitter)
        try:
            out = _run_em(fam, x, *start, cfg)
        except DegenerateFitError:
            continue
        total_iter += len(out[3]) - 1
        if out[5]:
            continue
        if best is None or out[3][-1] > best[3][-1]:
            best = out

    n = x.size
    if best is not None:
        theta, a, b, trace, converged, _ = best
        params = fam.params_cls(theta, a, b)
        mix_ll = loglikelihood(params, x)
        collapsed = False
        if cfg.merge_check:
            single = _single_fit(fam, x)
            single_params = fam.params_cls(1.0, single, single)
            single_ll = loglikelihood(single_params, x)
            if -2 * single_ll + fam.n_params_single * math.log(n) <= -2 * mix_ll + fam.n_params * math.log(n):
                params, mix_ll, collapsed, converged = single_params, single_ll, True, False
    else:
        single = _single_fit(fam, x)
        params = fam.params_cls(1.0, single, single)
        mix_ll = loglikelihood(params, x)
        trace, converged, collapsed = (mix_ll,), False, True

    return MixtureFitReport(
        params=params,
        train_loglik=mix_ll,
        n_iterations=max(1, len(trace) - 1),
        converged=converged,
        n_params=fam.n_params,
        collapsed=collapsed,
        n_obs=n,
        loglik_trace=tuple(trace),
    )


def camellog_fit_em(data, config: EmConfig | None = None, seed=None) -> MixtureFitReport:
    return fit_family("camellog", data, config, seed)


def expmix_fit_em(data, config: EmConfig | None = None, seed=None) -> MixtureFitReport:
    return fit_family("expmix", data, config, seed)


def paretomix_fit_em(data, config: EmConfig | None = None, seed=None) -> MixtureFitReport:
    return fit_family("paretomix", data, config, seed)
