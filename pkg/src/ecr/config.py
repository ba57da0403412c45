"""Experiment configuration: one JSON file, strict keys, stable hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .corpus import GeneratorConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .matching import MatchingConfig
from .sampling import SamplingConfig
from .training import TrainConfig


@dataclass
class ClusteringConfig:
    theta: float = 0.5
    mode: str = "union"

    def to_dict(self) -> dict:
        return {"theta": self.theta, "mode": self.mode}


@dataclass
class ExperimentConfig:
    """Everything one end-to-end run needs, including data provenance."""

    seed: int = 42
    out_dir: str = "runs/desk"
    corpus_path: str | None = None  # when unset, generate synthetically
    train_fraction: float = 0.8
    min_count: int = 1
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        self.encoder.validate()
        self.matching.validate()
        self.train.validate()
        self.sampling.validate()
        if self.corpus_path is None:
            self.generator.validate()
        if not 0.0 <= self.clustering.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "corpus_path": self.corpus_path,
            "train_fraction": self.train_fraction,
            "min_count": self.min_count,
            "generator": _generator_dict(self.generator),
            "encoder": self.encoder.to_dict(),
            "matching": self.matching.to_dict(),
            "train": self.train.to_dict(),
            "sampling": self.sampling.to_dict(),
            "clustering": self.clustering.to_dict(),
        }


def _generator_dict(config: GeneratorConfig) -> dict:
    return {
        "docs": config.docs,
        "mentions_per_doc": config.mentions_per_doc,
        "mention_jitter": config.mention_jitter,
        "singleton_rate": config.singleton_rate,
        "argument_rate": config.argument_rate,
        "location_rate": config.location_rate,
        "filler_sentence_rate": config.filler_sentence_rate,
        "chain_mean": config.chain_mean,
        "trigger_sets": {k: list(v) for k, v in sorted(config.trigger_sets.items())},
        "participant_pool": list(config.participant_pool),
        "location_pool": list(config.location_pool),
        "filler_pool": list(config.filler_pool),
    }


def _build_section(cls, data: Mapping, section: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build and validate an experiment config; unknown keys are errors."""
    sections = {
        "generator": GeneratorConfig,
        "encoder": EncoderConfig,
        "matching": MatchingConfig,
        "train": TrainConfig,
        "sampling": SamplingConfig,
        "clustering": ClusteringConfig,
    }
    top_allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, Mapping):
                raise ConfigError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(sections[key], value, key)
        else:
            kwargs[key] = value
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)


def config_hash(config: ExperimentConfig) -> str:
    """Stable short digest of the configuration, ignoring the output location."""
    payload = config.to_dict()
    payload.pop("out_dir", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
