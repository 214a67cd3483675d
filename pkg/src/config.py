"""
Run configuration: one YAML document per run, loaded into a tree of
dataclasses.

Missing keys take their defaults, unknown keys are rejected, and every
command writes the fully resolved configuration next to its outputs so the
run can be reproduced from that file alone.
"""

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from data_processing.synthetic import GeneratorConfig
from experiments.cross_validation import CVConfig
from experiments.evaluation import EvaluationConfig
from experiments.losses import LossConfig
from experiments.training import TrainingConfig
from model.configs import BackboneConfig, HeadConfig
from numerics.errors import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PAIRAGE_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
RESOLVED_CONFIG_NAME = "resolved_config.yaml"

SECTIONS = {
    "generator": GeneratorConfig,
    "backbone": BackboneConfig,
    "head": HeadConfig,
    "loss": LossConfig,
    "training": TrainingConfig,
    "cv": CVConfig,
    "evaluation": EvaluationConfig,
}

PRESETS = {
    "desk": {},
    "paper-schedule": {"training": {"epochs": 80, "half_period": 35, "base_lr": 1e-4}},
    "smoke": {
        "generator": {"n_subjects": 30, "noise_sigma": 0.02},
        "backbone": {"channel_plan": [4, 4, 8, 8, 8, 8]},
        "head": {"num_heads": 2, "num_blocks": 1},
        "training": {"epochs": 2, "half_period": 1, "batches_per_epoch": 2, "batch_size": 4,
                     "validation_pairs": 8},
        "evaluation": {"references_per_bin": 1},
    },
}


def default_output_dir():
    return str(Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)) / "run")


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    cv: CVConfig = field(default_factory=CVConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seed: int = 0
    data_dir: str = None
    output_dir: str = None
    workers: int = 1

    def __post_init__(self):
        if self.output_dir is None:
            self.output_dir = default_output_dir()
        if self.data_dir is None:
            self.data_dir = str(Path(self.output_dir) / "data")

    def validate(self):
        for name in SECTIONS:
            getattr(self, name).validate()
        extents = list(self.generator.extents)
        if len(extents) != self.backbone.spatial_dims:
            raise ConfigError(
                f"generator.extents {extents} has {len(extents)} axes but backbone.spatial_dims is "
                f"{self.backbone.spatial_dims}"
            )
        smallest = 2 ** self.backbone.num_pools
        if any(int(e) < smallest for e in extents):
            raise ConfigError(
                f"generator.extents {extents} cannot pass {self.backbone.num_pools} max pools of "
                f"{self.backbone.variant}; every axis needs at least {smallest} voxels"
            )
        if self.backbone.in_channels != 2:
            raise ConfigError("backbone.in_channels must be 2 for the two-channel synthetic images")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        return self

    def head_for(self, subset):
        """Head configuration of the model predicting ``subset``."""
        return dataclasses.replace(self.head, relation_subset=list(subset))

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def config_hash(self):
        """
        SHA-256 over the architecture-relevant settings: image geometry,
        backbone, head, learning mode and parameter dtype.
        """
        relevant = {
            "extents": [int(e) for e in self.generator.extents],
            "max_age": float(self.generator.max_age),
            "backbone": dataclasses.asdict(self.backbone),
            "head": dataclasses.asdict(self.head),
            "loss_mode": self.loss.mode,
            "dtype": self.training.dtype,
        }
        canonical = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def write_resolved(self, directory):
        """Write ``resolved_config.yaml`` into ``directory`` and return its path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_CONFIG_NAME
        path.write_text(self.to_yaml())
        return path


def _section(cls, values, name):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {unknown}; known keys are {sorted(known)}")
    return cls(**values)


def from_dict(values):
    """
    Build a RunConfig from a nested mapping.

    Raises:
        ConfigError: On unknown sections or keys
    """
    values = dict(values or {})
    scalars = {"seed", "data_dir", "output_dir", "workers"}
    unknown = sorted(set(values) - set(SECTIONS) - scalars)
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}; known are {sorted(set(SECTIONS) | scalars)}")
    kwargs = {name: _section(cls, values.get(name), name) for name, cls in SECTIONS.items()}
    kwargs.update({name: values[name] for name in scalars if name in values})
    return RunConfig(**kwargs)


def deep_merge(base, update):
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(text):
    """
    Parse ``section.key=value`` into a nested mapping. The value is read as
    YAML, so ``3``, ``1e-4``, ``true`` and ``[8, 8]`` get their natural types.

    Raises:
        ConfigError: If the text has no ``=`` or an empty key
    """
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    value = yaml.safe_load(raw) if raw.strip() else None
    for part in reversed(parts):
        value = {part: value}
    return value


def load_config(path=None, preset=None, overrides=(), extra=None):
    """
    Resolve a run configuration.

    Precedence, lowest first: defaults, preset, YAML file, ``extra`` (values
    from dedicated CLI flags), then ``section.key=value`` overrides.

    Args:
        path (str): YAML file, optional
        preset (str): Name from ``PRESETS``
        overrides (sequence): ``section.key=value`` strings
        extra (dict): Nested values to merge before the overrides

    Returns:
        RunConfig: Validated configuration

    Raises:
        FileNotFoundError: If ``path`` does not exist
        ConfigError: On unknown presets, sections or keys, or invalid values
    """
    values = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        values = deep_merge(values, PRESETS[preset])
    if path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        loaded = yaml.safe_load(path.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        values = deep_merge(values, loaded)
    if extra:
        values = deep_merge(values, extra)
    for text in overrides or ():
        values = deep_merge(values, parse_override(text))
    config = from_dict(values).validate()
    logger.debug("Resolved config %s", config.config_hash()[:12])
    return config
