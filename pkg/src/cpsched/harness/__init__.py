"""Experiment loop, configuration, persistence and command line."""

from .config import ALGORITHMS, ConfigError, ExperimentConfig, config_from_dict, load_config
from .outputs import emit_outputs, read_frames, recompute_recall
from .runner import FrameRecord, apply_axis, run_experiment, sweep

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "ExperimentConfig",
    "FrameRecord",
    "apply_axis",
    "config_from_dict",
    "emit_outputs",
    "load_config",
    "read_frames",
    "recompute_recall",
    "run_experiment",
    "sweep",
]
