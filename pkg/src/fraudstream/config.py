"""Run configuration: JSON file -> validated dataclasses, with full defaulting.

Every section and every key is optional; unknown keys are rejected so typos
fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import AggregationSpec, FeatureError
from .generator import GeneratorConfig, GeneratorConfigError
from .learner import EnsembleConfig, TreeParams
from .streaming import StreamConfig, StreamConfigError


class ConfigError(ValueError):
    """Configuration file missing, unreadable, or semantically invalid."""


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = (0,)
    dataset: str | None = None  # replay this file instead of generating
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    aggregation: AggregationSpec = field(default_factory=AggregationSpec)

    def with_seeds(self, seeds: tuple[int, ...]) -> "RunConfig":
        return dataclasses.replace(self, seeds=seeds)


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; allowed keys are {sorted(allowed)}")


def _build_dataclass(cls, obj, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object, got {type(obj).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(obj, names, path)
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_run_config(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"config root must be an object, got {type(obj).__name__}")
    _check_keys(obj, {"seeds", "dataset", "generator", "stream", "ensemble", "aggregation"}, "config")

    seeds_raw = obj.get("seeds", [0])
    if not isinstance(seeds_raw, list) or not seeds_raw:
        raise ConfigError("config.seeds must be a nonempty list of integers")
    if any(not isinstance(s, int) or isinstance(s, bool) for s in seeds_raw):
        raise ConfigError("config.seeds must be a nonempty list of integers")
    if len(set(seeds_raw)) != len(seeds_raw):
        raise ConfigError("config.seeds must not repeat")

    dataset = obj.get("dataset")
    if dataset is not None and not isinstance(dataset, str):
        raise ConfigError("config.dataset must be a path string or null")

    generator = _build_dataclass(GeneratorConfig, obj.get("generator", {}), "config.generator")
    stream = _build_dataclass(StreamConfig, obj.get("stream", {}), "config.stream")

    ensemble_obj = dict(obj.get("ensemble", {}))
    if not isinstance(obj.get("ensemble", {}), dict):
        raise ConfigError("config.ensemble: expected an object")
    tree = _build_dataclass(TreeParams, ensemble_obj.pop("tree", {}), "config.ensemble.tree")
    ensemble = _build_dataclass(EnsembleConfig, ensemble_obj, "config.ensemble")
    ensemble = dataclasses.replace(ensemble, tree=tree)

    agg_obj = obj.get("aggregation", {})
    if not isinstance(agg_obj, dict):
        raise ConfigError("config.aggregation: expected an object")
    _check_keys(agg_obj, {"windows"}, "config.aggregation")
    windows = agg_obj.get("windows")
    try:
        aggregation = AggregationSpec() if windows is None else AggregationSpec(windows=tuple(windows))
    except (FeatureError, TypeError) as exc:
        raise ConfigError(f"config.aggregation: {exc}") from exc

    config = RunConfig(
        seeds=tuple(seeds_raw),
        dataset=dataset,
        generator=generator,
        stream=stream,
        ensemble=ensemble,
        aggregation=aggregation,
    )
    validate_run_config(config)
    return config


def validate_run_config(config: RunConfig) -> None:
    try:
        config.generator.validate()
        config.stream.validate()
    except (GeneratorConfigError, StreamConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    ens = config.ensemble
    if ens.feedback_days < 1 or ens.delayed_models < 1 or ens.delay_days < 1:
        raise ConfigError("ensemble windows (feedback_days, delayed_models, delay_days) must be positive")
    if not 0.0 <= ens.feedback_weight <= 1.0:
        raise ConfigError(f"ensemble.feedback_weight must be in [0,1], got {ens.feedback_weight}")
    if ens.trees_per_partition < 1 or ens.num_partitions < 1:
        raise ConfigError("ensemble.trees_per_partition and num_partitions must be positive")
    if ens.balance_ratio <= 0:
        raise ConfigError(f"ensemble.balance_ratio must be positive, got {ens.balance_ratio}")
    if ens.tree.max_depth < 1 or ens.tree.min_samples_leaf < 1:
        raise ConfigError("tree.max_depth and tree.min_samples_leaf must be positive")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a config file; None yields the all-defaults configuration."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {p}: {exc}") from exc
    return build_run_config(obj)


def config_to_dict(config: RunConfig) -> dict:
    out = dataclasses.asdict(config)
    out["seeds"] = list(config.seeds)
    out["aggregation"]["windows"] = list(config.aggregation.windows)
    return out
