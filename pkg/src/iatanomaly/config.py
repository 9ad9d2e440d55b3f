"""Run configuration: plain dataclasses that round-trip through JSON."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

FLAG_RULES = ("reference-min", "reference-quantile")


def _typed_fields(klass, data: dict, prefix: str, problems: list) -> dict:
    """Keep fields whose JSON value matches the declared type; record the rest."""
    declared = {f.name: type(f.default) for f in fields(klass) if f.name != "em"}
    out = {}
    for key, value in data.items():
        if key not in declared:
            problems.append(f"unknown field {prefix}{key}")
            continue
        want = declared[key]
        ok = isinstance(value, want) and not (want is not bool and isinstance(value, bool))
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value, ok = float(value), True
        if ok:
            out[key] = value
        else:
            problems.append(f"{prefix}{key} must be of type {want.__name__}")
    return out


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-8
    max_iter: int = 500
    restarts: int = 3
    min_fit_size: int = 10
    collapse_weight: float = 1e-6
    # collapse to one component when the single-component BIC is no worse
    merge_check: bool = True
    jitter: float = 0.5
    seed: int = 0

    def problems(self, prefix="em."):
        out = []
        if not (0 < self.tol < 1):
            out.append(f"{prefix}tol must lie in (0, 1)")
        if self.max_iter < 1:
            out.append(f"{prefix}max_iter must be >= 1")
        if self.restarts < 1:
            out.append(f"{prefix}restarts must be >= 1")
        if self.min_fit_size < 2:
            out.append(f"{prefix}min_fit_size must be >= 2")
        if not (0 < self.collapse_weight < 0.5):
            out.append(f"{prefix}collapse_weight must lie in (0, 0.5)")
        if not (self.jitter >= 0 and math.isfinite(self.jitter)):
            out.append(f"{prefix}jitter must be finite and >= 0")
        return out


@dataclass(frozen=True)
class RunConfig:
    em: EmConfig = field(default_factory=EmConfig)
    seed: int = 0
    train_fraction: float = 0.5
    bins_per_decade: int = 5
    orphan_query_threshold: int = 1000
    orphan_landed_threshold: int = 100
    max_iat_query_threshold: int = 1000
    max_iat_threshold: float = 3600.0
    min_group_users: int = 30
    flag_rule: str = "reference-min"
    flag_quantile: float = 0.001
    reference_replicates: int = 20
    pareto_floor: float = -745.0
    qq_from_samples: bool = False
    threads: int = 1
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        problems = list(self.em.problems())
        if not (0 < self.train_fraction < 1):
            problems.append("train_fraction must lie in (0, 1)")
        if self.bins_per_decade < 1:
            problems.append("bins_per_decade must be >= 1")
        for name in ("orphan_query_threshold", "orphan_landed_threshold", "max_iat_query_threshold"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not self.max_iat_threshold > 0:
            problems.append("max_iat_threshold must be > 0")
        if self.min_group_users < 3:
            problems.append("min_group_users must be >= 3")
        if self.flag_rule not in FLAG_RULES:
            problems.append(f"flag_rule must be one of {FLAG_RULES}")
        if not (0 < self.flag_quantile < 1):
            problems.append("flag_quantile must lie in (0, 1)")
        if self.reference_replicates < 1:
            problems.append("reference_replicates must be >= 1")
        if not (math.isfinite(self.pareto_floor) and self.pareto_floor < 0):
            problems.append("pareto_floor must be finite and negative")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """Build and validate; every problem is reported in one ConfigError."""
        if not isinstance(data, dict):
            raise ConfigError(["configuration must be a JSON object"])
        em_data = data.get("em", {})
        if not isinstance(em_data, dict):
            raise ConfigError(["em must be an object"])
        problems = []
        em_kwargs = _typed_fields(EmConfig, em_data, "em.", problems)
        kwargs = _typed_fields(cls, {k: v for k, v in data.items() if k != "em"}, "", problems)
        cfg = cls(em=EmConfig(**em_kwargs), **kwargs)
        try:
            cfg.validate()
        except ConfigError as exc:
            problems += exc.problems
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
