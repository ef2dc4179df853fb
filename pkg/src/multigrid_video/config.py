"""Strict JSON run configuration.

One file describes a full run: base recipe, schedule, cycle settings, and
(optionally) a training section with optimizer, sampling and synthetic-data
parameters.  Parsing is strict: unknown keys raise ``ConfigError`` with the
offending path, wrong types likewise.  Every CLI subcommand consumes the
same schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .schedule import CycleConfig, LrSchedule, LrStage, Shape4D
from .synth import SynthSpec
from .trainer import SamplingConfig, TrainParams

_MISSING = object()


class _Section:
    """Dict wrapper that tracks consumed keys and reports leftovers."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
        self._d = dict(data)
        self.path = path

    def has(self, key: str) -> bool:
        return key in self._d

    def _take(self, key: str, default):
        if key in self._d:
            return self._d.pop(key)
        if default is _MISSING:
            raise ConfigError(f"{self.path}: missing required key {key!r}")
        return default

    def take_int(self, key: str, default=_MISSING, minimum: int | None = None) -> int:
        v = self._take(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.path}.{key}: expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(f"{self.path}.{key}: must be >= {minimum}, got {v}")
        return v

    def take_float(self, key: str, default=_MISSING) -> float:
        v = self._take(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.path}.{key}: expected a number, got {v!r}")
        return float(v)

    def take_bool(self, key: str, default=_MISSING) -> bool:
        v = self._take(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self.path}.{key}: expected true/false, got {v!r}")
        return v

    def take_str(self, key: str, default=_MISSING,
                 choices: tuple[str, ...] | None = None) -> str:
        v = self._take(key, default)
        if not isinstance(v, str):
            raise ConfigError(f"{self.path}.{key}: expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(
                f"{self.path}.{key}: expected one of {list(choices)}, got {v!r}")
        return v

    def take_list(self, key: str, default=_MISSING) -> list:
        v = self._take(key, default)
        if not isinstance(v, list):
            raise ConfigError(f"{self.path}.{key}: expected a list, got {v!r}")
        return v

    def take_section(self, key: str, default=_MISSING) -> "_Section | None":
        v = self._take(key, default)
        if v is None:
            return None
        return _Section(v, f"{self.path}.{key}")

    def finish(self) -> None:
        if self._d:
            raise ConfigError(f"{self.path}: unknown keys {sorted(self._d)}")


@dataclass(frozen=True)
class EvalConfig:
    n_clips: int = 1
    topn: int = 5
    batch_videos: int = 32


@dataclass(frozen=True)
class TrainSection:
    """Everything the train/eval subcommands need beyond the plan."""

    params: TrainParams
    synth: SynthSpec | None
    synth_seed: int
    val_videos: int
    val_seed: int
    eval: EvalConfig


@dataclass(frozen=True)
class AppConfig:
    base: Shape4D
    schedule: LrSchedule
    cycles: CycleConfig
    dataset_size: int
    bn_base: int
    seed: int
    model_widths: tuple[int, ...]
    model_in_channels: int
    train: TrainSection | None

    def val_spec(self) -> SynthSpec:
        """Synthetic spec for the held-out split."""
        if self.train is None or self.train.synth is None:
            raise ConfigError("config has no synthetic data section")
        if self.train.val_videos < 1:
            raise ConfigError("config declares no validation videos")
        spec = self.train.synth
        return SynthSpec(
            num_videos=self.train.val_videos,
            num_classes=spec.num_classes,
            frames=spec.frames, height=spec.height, width=spec.width,
            channels=spec.channels, blob_radius=spec.blob_radius,
            noise_sigma=spec.noise_sigma, speeds=spec.speeds,
        )


def parse_config(data: dict, path: str = "config") -> AppConfig:
    """Validate a raw dict against the run schema."""
    root = _Section(data, path)

    base_sec = root.take_section("base")
    base = Shape4D(
        b=base_sec.take_int("b", minimum=1),
        t=base_sec.take_int("t", minimum=1),
        h=base_sec.take_int("h", minimum=1),
        w=base_sec.take_int("w", minimum=1),
    )
    base_sec.finish()

    stages = []
    for i, raw in enumerate(root.take_list("stages")):
        sec = _Section(raw, f"{path}.stages[{i}]")
        stages.append(LrStage(lr=sec.take_float("lr"),
                              iters=sec.take_int("iters", minimum=1)))
        sec.finish()

    warmup_iters = 0
    warmup_start = 0.0
    warm = root.take_section("warmup", None)
    if warm is not None:
        warmup_iters = warm.take_int("iters", minimum=0)
        warmup_start = warm.take_float("start_lr", 0.0)
        warm.finish()
    lr_mode = root.take_str("lr_mode", "step", choices=("step", "cosine"))
    schedule = LrSchedule(stages=tuple(stages), warmup_iters=warmup_iters,
                          warmup_start_lr=warmup_start, mode=lr_mode)

    cyc = root.take_section("cycles", None)
    if cyc is None:
        cycles = CycleConfig()
    else:
        cycles = CycleConfig(
            long_cycle=cyc.take_bool("long", True),
            short_cycle=cyc.take_bool("short", True),
            mode=cyc.take_str("mode", "multi", choices=("multi", "single")),
            epoch_multiplier=cyc.take_float("epoch_multiplier", 1.5),
        )
        cyc.finish()

    bn_base = root.take_int("bn_base", 8, minimum=1)
    seed = root.take_int("seed", 0)

    widths = (8, 16, 32)
    in_channels = 1
    model = root.take_section("model", None)
    if model is not None:
        widths = tuple(_int_list(model.take_list("widths", [8, 16, 32]),
                                 f"{path}.model.widths"))
        in_channels = model.take_int("in_channels", 1, minimum=1)
        model.finish()

    train = None
    synth_videos = None
    tr = root.take_section("train", None)
    if tr is not None:
        samp = tr.take_section("sampling")
        sampling = SamplingConfig(
            short_side_min=samp.take_float("short_side_min"),
            short_side_max=samp.take_float("short_side_max"),
            t_stride_min=samp.take_float("t_stride", 1.0),
        )
        samp.finish()
        params = TrainParams(
            sampling=sampling,
            momentum=tr.take_float("momentum", 0.9),
            weight_decay=tr.take_float("weight_decay", 1e-4),
        )

        synth = None
        synth_seed = 0
        val_videos = 0
        val_seed = 1
        sy = tr.take_section("synth", None)
        if sy is not None:
            synth_seed = sy.take_int("seed", 0)
            val_videos = sy.take_int("val_videos", 0, minimum=0)
            val_seed = sy.take_int("val_seed", synth_seed + 1)
            synth = SynthSpec(
                num_videos=sy.take_int("num_videos", minimum=1),
                num_classes=sy.take_int("num_classes", minimum=2),
                frames=sy.take_int("frames", minimum=1),
                height=sy.take_int("height", minimum=1),
                width=sy.take_int("width", minimum=1),
                channels=sy.take_int("channels", 1, minimum=1),
                blob_radius=sy.take_float("blob_radius", 5.0),
                noise_sigma=sy.take_float("noise_sigma", 0.1),
                speeds=tuple(_float_list(sy.take_list("speeds", [1.0, 2.0]),
                                         f"{path}.train.synth.speeds")),
            )
            sy.finish()
            synth_videos = synth.num_videos
            if synth.channels != in_channels:
                raise ConfigError(
                    f"{path}: model.in_channels ({in_channels}) does not match "
                    f"train.synth.channels ({synth.channels})")

        ev = tr.take_section("eval", None)
        if ev is None:
            eval_cfg = EvalConfig()
        else:
            eval_cfg = EvalConfig(
                n_clips=ev.take_int("n_clips", 1, minimum=1),
                topn=ev.take_int("topn", 5, minimum=1),
                batch_videos=ev.take_int("batch_videos", 32, minimum=1),
            )
            ev.finish()
        tr.finish()
        train = TrainSection(params=params, synth=synth, synth_seed=synth_seed,
                             val_videos=val_videos, val_seed=val_seed,
                             eval=eval_cfg)

    if root.has("dataset_size"):
        dataset_size = root.take_int("dataset_size", minimum=1)
        if synth_videos is not None and dataset_size != synth_videos:
            raise ConfigError(
                f"{path}: dataset_size ({dataset_size}) does not match "
                f"train.synth.num_videos ({synth_videos})")
    elif synth_videos is not None:
        dataset_size = synth_videos
    else:
        raise ConfigError(
            f"{path}: needs dataset_size (or a train.synth section)")

    root.finish()
    return AppConfig(
        base=base, schedule=schedule, cycles=cycles,
        dataset_size=dataset_size, bn_base=bn_base, seed=seed,
        model_widths=widths, model_in_channels=in_channels, train=train,
    )


def _int_list(values: list, path: str) -> list[int]:
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{path}[{i}]: expected an integer, got {v!r}")
        out.append(v)
    return out


def _float_list(values: list, path: str) -> list[float]:
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]: expected a number, got {v!r}")
        out.append(float(v))
    return out


def load_config(path: str | Path) -> AppConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    return parse_config(data, path=str(p))
