"""Configs, presets, seeded runs with CSV metrics and checkpoints, and the ``marlab`` CLI."""

from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save, read_meta
from .config import (
    ALGORITHMS,
    PRESETS,
    REGIMES,
    ConfigError,
    ExperimentConfig,
    parse_config,
    preset,
    serialize_config,
)
from .runner import OUTPUT_ENV, MetricStream, RunRecord, build_models, make_rng, run_experiment, run_seed

__all__ = [
    "ALGORITHMS",
    "OUTPUT_ENV",
    "PRESETS",
    "REGIMES",
    "CheckpointError",
    "ConfigError",
    "ExperimentConfig",
    "MetricStream",
    "RunRecord",
    "build_models",
    "checkpoint_load",
    "checkpoint_save",
    "make_rng",
    "parse_config",
    "preset",
    "read_meta",
    "run_experiment",
    "run_seed",
    "serialize_config",
]
