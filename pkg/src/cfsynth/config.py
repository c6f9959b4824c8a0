"""Engine configuration and its TOML loader."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from typing import Optional

from cfsynth.clustering import COMBINERS
from cfsynth.predicates import DEFAULT_MAX_PREDICATES
from cfsynth.tree import (
    DEFAULT_LAMBDA_A,
    DEFAULT_LAMBDA_N,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_OBSERVED_WEIGHT,
    NEGATIVES_MODES,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ABLATIONS = ("clustering", "iter-enum", "negatives=none", "negatives=hard")


@dataclass(frozen=True)
class EngineConfig:
    """Knobs for the whole learning pipeline.

    The defaults are the full engine; the ablation switches exist so the
    benchmark can measure what each stage buys.  ``ranker_model`` is a
    path to a model JSON file, or None for the built-in default weights.
    """

    lambda_a: float = DEFAULT_LAMBDA_A
    lambda_n: int = DEFAULT_LAMBDA_N
    observed_weight: float = DEFAULT_OBSERVED_WEIGHT
    negatives_mode: str = "soft"
    clustering_enabled: bool = True
    iterative_enumeration_enabled: bool = True
    max_predicates: int = DEFAULT_MAX_PREDICATES
    max_iter: int = 10
    top_k: int = 5
    ranker_model: Optional[str] = None
    max_enum_iterations: int = DEFAULT_MAX_ITERATIONS
    weight_soft_negatives: bool = False
    distance_combiner: str = "sum"
    unknown_cluster_candidate: bool = True
    fold_case: bool = False

    def __post_init__(self) -> None:
        if not self.lambda_a > 0:
            raise ValueError("lambda_a must be positive")
        if self.lambda_n < 1:
            raise ValueError("lambda_n must be at least 1")
        if not self.observed_weight > 0:
            raise ValueError("observed_weight must be positive")
        if self.negatives_mode not in NEGATIVES_MODES:
            raise ValueError(
                f"negatives_mode must be one of {NEGATIVES_MODES}, "
                f"got {self.negatives_mode!r}"
            )
        if self.max_predicates < 1:
            raise ValueError("max_predicates must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.max_enum_iterations < 1:
            raise ValueError("max_enum_iterations must be at least 1")
        if self.distance_combiner not in COMBINERS:
            raise ValueError(
                f"distance_combiner must be one of {COMBINERS}, "
                f"got {self.distance_combiner!r}"
            )


_FIELD_NAMES = frozenset(f.name for f in dataclasses.fields(EngineConfig))


def config_from_dict(data: dict) -> EngineConfig:
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
    return EngineConfig(**data)


def load_config(path: str) -> EngineConfig:
    """Read an EngineConfig from a flat TOML file of field = value pairs."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data)


def config_hash(config: EngineConfig) -> str:
    """Short stable digest of a config, for health endpoints and reports."""
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def apply_ablation(config: EngineConfig, name: str) -> EngineConfig:
    """One named ablation applied on top of a config."""
    if name == "clustering":
        return dataclasses.replace(config, clustering_enabled=False)
    if name == "iter-enum":
        return dataclasses.replace(config, iterative_enumeration_enabled=False)
    if name == "negatives=none":
        return dataclasses.replace(config, negatives_mode="none")
    if name == "negatives=hard":
        return dataclasses.replace(config, negatives_mode="hard")
    raise ValueError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")
