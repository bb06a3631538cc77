"""Depth view to voxel grid reconstruction."""

from ._facevox import (
    ConfigError,
    Generator,
    Trainer,
    TrainingAborted,
    ce,
    hausdorff,
    iou,
    run_cli,
    synth_sample,
)

__all__ = [
    "ConfigError",
    "Generator",
    "Trainer",
    "TrainingAborted",
    "ce",
    "hausdorff",
    "iou",
    "run_cli",
    "synth_sample",
]
