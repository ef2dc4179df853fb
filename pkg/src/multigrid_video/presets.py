"""Built-in run configurations.

``kinetics_*`` mirror a large-scale recipe (112k iterations at batch 512,
32x224x224 clips) and are meant for plan compilation and accounting only.
``toy_*`` are small enough to train on a laptop CPU with the synthetic
dataset and are what the end-to-end tests use.  The JSON files under
``configs/`` are generated from these dicts and kept in sync by a test.
"""

from __future__ import annotations

import copy

from .config import AppConfig, parse_config

PRESETS: dict[str, dict] = {
    "kinetics_baseline": {
        "base": {"b": 512, "t": 32, "h": 224, "w": 224},
        "stages": [
            {"lr": 0.8, "iters": 44000},
            {"lr": 0.08, "iters": 28000},
            {"lr": 0.008, "iters": 20000},
            {"lr": 0.0008, "iters": 20000},
        ],
        "warmup": {"iters": 16000, "start_lr": 0.002},
        "cycles": {"long": False, "short": False, "epoch_multiplier": 1.0},
        "dataset_size": 240000,
        "train": {
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "sampling": {"short_side_min": 256, "short_side_max": 340,
                         "t_stride": 2},
            "eval": {"n_clips": 10},
        },
    },
    "kinetics_multigrid": {
        "base": {"b": 512, "t": 32, "h": 224, "w": 224},
        "stages": [
            {"lr": 0.8, "iters": 44000},
            {"lr": 0.08, "iters": 28000},
            {"lr": 0.008, "iters": 20000},
            {"lr": 0.0008, "iters": 20000},
        ],
        "warmup": {"iters": 16000, "start_lr": 0.002},
        "cycles": {"long": True, "short": True, "mode": "multi",
                   "epoch_multiplier": 1.5},
        "dataset_size": 240000,
        "train": {
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "sampling": {"short_side_min": 256, "short_side_max": 340,
                         "t_stride": 2},
            "eval": {"n_clips": 10},
        },
    },
    "toy_baseline": {
        "base": {"b": 8, "t": 8, "h": 32, "w": 32},
        "stages": [
            {"lr": 0.04, "iters": 700},
            {"lr": 0.004, "iters": 450},
            {"lr": 0.0004, "iters": 300},
            {"lr": 0.00004, "iters": 300},
        ],
        "warmup": {"iters": 140, "start_lr": 0.004},
        "cycles": {"long": False, "short": False, "epoch_multiplier": 1.0},
        "train": {
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "sampling": {"short_side_min": 36, "short_side_max": 48,
                         "t_stride": 2},
            "synth": {
                "num_videos": 2000,
                "num_classes": 8,
                "frames": 32,
                "height": 64,
                "width": 64,
                "blob_radius": 5.0,
                "noise_sigma": 0.1,
                "speeds": [1.0, 2.0],
                "seed": 7,
                "val_videos": 500,
            },
            "eval": {"n_clips": 2},
        },
    },
    "toy_multigrid": {
        "base": {"b": 8, "t": 8, "h": 32, "w": 32},
        "stages": [
            {"lr": 0.04, "iters": 700},
            {"lr": 0.004, "iters": 450},
            {"lr": 0.0004, "iters": 300},
            {"lr": 0.00004, "iters": 300},
        ],
        "warmup": {"iters": 140, "start_lr": 0.004},
        "cycles": {"long": True, "short": True, "mode": "multi",
                   "epoch_multiplier": 1.0},
        "train": {
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "sampling": {"short_side_min": 36, "short_side_max": 48,
                         "t_stride": 2},
            "synth": {
                "num_videos": 2000,
                "num_classes": 8,
                "frames": 32,
                "height": 64,
                "width": 64,
                "blob_radius": 5.0,
                "noise_sigma": 0.1,
                "speeds": [1.0, 2.0],
                "seed": 7,
                "val_videos": 500,
            },
            "eval": {"n_clips": 2},
        },
    },
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_dict(name: str) -> dict:
    """Raw config dict for a preset (a deep copy, safe to edit)."""
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


def load_preset(name: str) -> AppConfig:
    """Parsed config for a preset."""
    return parse_config(preset_dict(name), path=f"preset:{name}")
