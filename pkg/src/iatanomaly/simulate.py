"""Synthetic user populations with known ground truth.

Each user's (R, M) comes from the group model; ``theta = R / (1 + R)`` and
``alpha_in = exp(M)``. The remaining Camel-Log parameters are shared by all
users. Planted users get ``R`` near ``planted_r`` and a typical ``M``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dists import LogLogisticParams
from .errors import ConfigError
from .ingest import QueryEvent
from .metamodel import MetaClickParams, metaclick_sample
from .mixtures import CamelLogParams, camellog_sample

__all__ = ["PopulationSpec", "SyntheticUser", "simulate_users", "simulate_events", "DEFAULT_POPULATION"]

START_TIME = 1141171200  # 2006-03-01 00:00:00 UTC


@dataclass(frozen=True)
class PopulationSpec:
    eta: float = 1.12
    alpha_r: float = 3.25
    beta_r: float = 7.0
    alpha_m: float = math.log(300.0)
    beta_m: float = 20.0
    beta_in: float = 2.0
    alpha_off: float = 25200.0
    beta_off: float = 2.0
    planted_count: int = 0
    planted_r: float = 30.0
    # log-sd of the multiplicative jitter around planted_r
    planted_r_spread: float = 0.05
    orphan_fraction: float = 0.0
    start_time: int = START_TIME

    @property
    def metaclick(self) -> MetaClickParams:
        return MetaClickParams.from_values(self.eta, self.alpha_r, self.beta_r, self.alpha_m, self.beta_m)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(d) - known)
        if bad:
            raise ConfigError([f"unknown field {k}" for k in bad])
        try:
            spec = cls(**d)
            spec.metaclick
            LogLogisticParams(spec.alpha_off, spec.beta_off)
            LogLogisticParams(1.0, spec.beta_in)
        except (TypeError, ValueError) as exc:
            raise ConfigError([str(exc)]) from exc
        if not (0 <= spec.orphan_fraction < 1):
            raise ConfigError(["orphan_fraction must lie in [0, 1)"])
        if spec.planted_count < 0 or not spec.planted_r > 0:
            raise ConfigError(["planted_count must be >= 0 and planted_r > 0"])
        return spec

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_POPULATION = PopulationSpec()


@dataclass(frozen=True)
class SyntheticUser:
    user_id: str
    params: CamelLogParams
    r: float
    m: float
    planted: bool = False
    iats: np.ndarray = field(default=None, repr=False)


def simulate_users(spec: PopulationSpec, n_users: int, n_iats: int, seed: int) -> list[SyntheticUser]:
    """``n_users`` null users plus ``spec.planted_count`` planted ones.

    Planted users are interleaved at random positions among the ids, so an
    id carries no hint of the ground truth.
    """
    ss = np.random.SeedSequence(seed)
    feat_seed, plant_seed, order_seed, iat_seed = ss.spawn(4)
    null = metaclick_sample(n_users, spec.metaclick, np.random.default_rng(feat_seed)) if n_users else []
    rows = [(f.r, f.m, False) for f in null]
    if spec.planted_count:
        rng = np.random.default_rng(plant_seed)
        r = spec.planted_r * np.exp(rng.normal(0.0, spec.planted_r_spread, spec.planted_count))
        rows += [(float(ri), spec.alpha_m, True) for ri in r]
    perm = np.random.default_rng(order_seed).permutation(len(rows))
    width = max(4, len(str(len(rows))))
    iat_seeds = iat_seed.spawn(len(rows))
    users = []
    for k, j in enumerate(perm):
        r, m, planted = rows[j]
        theta = r / (1.0 + r)
        params = CamelLogParams(
            theta, LogLogisticParams(math.exp(m), spec.beta_in), LogLogisticParams(spec.alpha_off, spec.beta_off)
        )
        iats = camellog_sample(n_iats, params, np.random.default_rng(iat_seeds[k])) if n_iats else None
        users.append(SyntheticUser(f"u{k:0{width}d}", params, r, m, planted, iats))
    return users


def simulate_events(spec: PopulationSpec, users: list[SyntheticUser], seed: int) -> list[QueryEvent]:
    """Landed events at 1 s resolution from each user's IATs, with orphan
    queries sprinkled between them when ``orphan_fraction > 0``."""
    rng = np.random.default_rng(seed)
    events = []
    for u in users:
        ts = spec.start_time + np.floor(np.concatenate([[0.0], np.cumsum(u.iats)])).astype(np.int64)
        events.extend(QueryEvent(u.user_id, int(t), True) for t in ts)
        if spec.orphan_fraction > 0:
            n_orphan = int(rng.binomial(ts.size, spec.orphan_fraction / (1 - spec.orphan_fraction)))
            if n_orphan:
                ots = rng.integers(ts[0], ts[-1] + 1, n_orphan)
                events.extend(QueryEvent(u.user_id, int(t), False) for t in ots)
    return events
