"""Training and evaluation loops driven by compiled plans.

The trainer owns no policy: every iteration's batch size, clip shape,
learning rate and statistics-group size come from the plan record.  All
randomness is derived from (seed, iteration), so a run can be resumed from
a checkpoint, or replayed manually layer by layer, and produce bit-identical
parameters.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .grids import GridSampleRanges, center_eval_grid, resample
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import softmax_cross_entropy
from .nn.model import VideoNet
from .nn.optim import SgdMomentum
from .rng import iteration_rng
from .schedule import CompiledPlan, Shape4D
from .synth import VideoDataset, next_batch

METRIC_KEYS = ("iter", "loss", "lr", "b", "t", "h", "w", "bn_group",
               "cum_clips", "wall_ms")


@dataclass(frozen=True)
class SamplingConfig:
    """Base-shape randomization ranges for training-time sampling grids.

    ``short_side_min``/``short_side_max`` bound the short-side scale drawn
    for a base-shape clip; ``t_stride_min`` is the frame stride used at the
    base temporal length.
    """

    short_side_min: float
    short_side_max: float
    t_stride_min: float = 1.0

    def __post_init__(self) -> None:
        if self.short_side_min <= 0 or self.t_stride_min <= 0:
            raise ConfigError(f"sampling ranges must be positive: {self}")
        if self.short_side_min > self.short_side_max:
            raise ConfigError(
                f"short-side range empty: "
                f"[{self.short_side_min}, {self.short_side_max}]"
            )


def ranges_for_shape(
    sampling: SamplingConfig, base: Shape4D, t: int, h: int, w: int,
) -> GridSampleRanges:
    """Adapt base ranges to a scaled clip shape.

    The minimum short-side scale shrinks with the clip so the relative crop
    range stays comparable; the maximum stays put.  The temporal stride
    range widens from the base stride by the temporal shrink factor, so a
    short clip may cover up to the base clip's footprint.
    """
    s_min = math.floor(
        sampling.short_side_min * min(h, w) / min(base.h, base.w) + 0.5)
    return GridSampleRanges(
        short_side_min=float(s_min),
        short_side_max=float(sampling.short_side_max),
        t_stride_min=float(sampling.t_stride_min),
        t_stride_max=float(sampling.t_stride_min) * base.t / t,
    )


@dataclass(frozen=True)
class TrainParams:
    """Optimizer and sampling settings that are not part of the plan."""

    sampling: SamplingConfig
    momentum: float = 0.9
    weight_decay: float = 1e-4


def to_model_layout(clips: np.ndarray) -> np.ndarray:
    """(batch, t, h, w, c) float clips to (batch, c, t, h, w)."""
    return np.ascontiguousarray(clips.transpose(0, 4, 1, 2, 3))


@dataclass
class TrainResult:
    model: VideoNet
    optimizer: SgdMomentum
    metrics: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def train(
    plan: CompiledPlan,
    model: VideoNet,
    dataset: VideoDataset,
    params: TrainParams,
    *,
    seed: int,
    start_iter: int = 0,
    optimizer: SgdMomentum | None = None,
    metrics_dest: str | Path | IO[str] | None = None,
    timing: bool = False,
    log_every: int = 0,
) -> TrainResult:
    """Run (the tail of) a plan.

    Args:
        plan: compiled per-iteration plan.
        model: network to update in place.
        dataset: training videos.
        params: optimizer and sampling settings.
        seed: master seed for batch composition (not weight init).
        start_iter: first plan iteration to run; used when resuming.
        optimizer: momentum state to continue from; a fresh one if None.
        metrics_dest: optional JSONL sink, one object per iteration.
        timing: when True, records per-iteration wall time in the metrics;
            off by default so outputs are byte-stable across machines.
        log_every: if positive, progress lines on stderr every N iterations.

    Returns:
        ``TrainResult`` with the trained model, optimizer state, in-memory
        metric rows and a summary dict.
    """
    if not 0 <= start_iter <= plan.total_iters:
        raise ConfigError(
            f"start_iter {start_iter} outside plan of {plan.total_iters}")
    opt = optimizer if optimizer is not None else SgdMomentum(
        params.momentum, params.weight_decay)

    own_fh = None
    fh: IO[str] | None = None
    if metrics_dest is not None:
        if hasattr(metrics_dest, "write"):
            fh = metrics_dest
        else:
            own_fh = open(metrics_dest, "w")
            fh = own_fh

    metrics: list[dict] = []
    wall_total = 0.0
    try:
        for rec in plan.records[start_iter:]:
            t0 = time.perf_counter() if timing else 0.0
            rng = iteration_rng(seed, rec.iteration)
            ranges = ranges_for_shape(params.sampling, plan.base,
                                      rec.t, rec.h, rec.w)
            clips, labels = next_batch(
                dataset, rec.b, (rec.t, rec.h, rec.w), ranges, rng)
            x = to_model_layout(clips)
            loss, grads, _ = model.forward_backward(
                x, labels, bn_group=rec.bn_group)
            loss = float(loss)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at iteration {rec.iteration}")
            opt.step(model.params, grads, rec.lr)

            wall_ms = None
            if timing:
                wall_ms = (time.perf_counter() - t0) * 1000.0
                wall_total += wall_ms
            row = {
                "iter": rec.iteration, "loss": loss, "lr": rec.lr,
                "b": rec.b, "t": rec.t, "h": rec.h, "w": rec.w,
                "bn_group": rec.bn_group, "cum_clips": rec.cum_clips,
                "wall_ms": wall_ms,
            }
            metrics.append(row)
            if fh is not None:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
            if log_every and (rec.iteration + 1) % log_every == 0:
                print(
                    f"iter {rec.iteration + 1}/{plan.total_iters} "
                    f"loss {loss:.4f} lr {rec.lr:.5f} "
                    f"shape {rec.b}x{rec.t}x{rec.h}x{rec.w}",
                    file=sys.stderr)
    finally:
        if own_fh is not None:
            own_fh.close()

    losses = [m["loss"] for m in metrics]
    tail = losses[-50:] if losses else []
    summary = {
        "iterations": len(metrics),
        "start_iter": start_iter,
        "total_clips": plan.total_clips,
        "epochs": plan.epochs,
        "final_loss": losses[-1] if losses else None,
        "mean_loss_last_50": float(np.mean(tail)) if tail else None,
        "wall_ms_total": wall_total if timing else None,
    }
    return TrainResult(model=model, optimizer=opt, metrics=metrics,
                       summary=summary)


def save_training_checkpoint(
    path: str | Path,
    model: VideoNet,
    optimizer: SgdMomentum,
    *,
    seed: int,
    next_iteration: int,
    extra_meta: dict | None = None,
) -> None:
    """Checkpoint model, optimizer and the (seed, iteration) random state."""
    arrays = model.state_arrays()
    arrays.update(optimizer.state_arrays())
    meta = {
        "seed": seed,
        "next_iteration": next_iteration,
        "model": {
            "num_classes": model.num_classes,
            "in_channels": model.in_channels,
            "widths": list(model.widths),
        },
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, arrays, meta)


def load_training_checkpoint(
    path: str | Path, model: VideoNet, optimizer: SgdMomentum,
) -> dict:
    """Restore model and optimizer in place; returns the metadata dict."""
    arrays, meta = load_checkpoint(path)
    model.load_state_arrays(arrays)
    optimizer.load_state_arrays(arrays)
    return meta


@dataclass(frozen=True)
class EvalResult:
    top1: float
    topn: float
    topn_k: int
    mean_loss: float
    n_videos: int
    clips_per_video: int

    def to_dict(self) -> dict:
        return {
            "top1": self.top1, "topn": self.topn, "topn_k": self.topn_k,
            "mean_loss": self.mean_loss, "n_videos": self.n_videos,
            "clips_per_video": self.clips_per_video,
        }


def evaluate(
    model: VideoNet,
    dataset: VideoDataset,
    *,
    clip_shape: tuple[int, int, int],
    scale: float,
    t_stride: float,
    n_clips: int = 1,
    topn: int = 5,
    batch_videos: int = 32,
) -> EvalResult:
    """Fixed-grid evaluation: uniform temporal clips, center spatial crop.

    Each video contributes ``n_clips`` clips whose start frames are evenly
    spaced over the valid range (a single clip is centered); class
    probabilities are averaged over clips before scoring.

    Returns:
        ``EvalResult`` with top-1 and top-`topn` accuracy and mean
        cross-entropy of the averaged predictions.
    """
    if n_clips < 1:
        raise ConfigError(f"n_clips must be positive, got {n_clips}")
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    t, h, w = clip_shape
    k = min(topn, dataset.num_classes)

    correct1 = 0
    correctn = 0
    loss_sum = 0.0
    for chunk_start in range(0, n, batch_videos):
        idx = range(chunk_start, min(chunk_start + batch_videos, n))
        clips = []
        labels = []
        for i in idx:
            video = dataset.render(i)
            frames = video.shape[0]
            base_grid = center_eval_grid(
                video.shape[:3], clip_shape, scale=scale, t_stride=t_stride)
            span = base_grid.t_span
            for j in range(n_clips):
                if n_clips == 1:
                    start = None
                else:
                    start = j * (frames - span) / (n_clips - 1)
                grid = center_eval_grid(
                    video.shape[:3], clip_shape, scale=scale,
                    t_stride=t_stride, t_start=start)
                clips.append(resample(video, grid))
            labels.append(dataset.label(i))
        x = to_model_layout(np.stack(clips))
        logits = model.predict_logits(x).astype(np.float64)
        logits = logits.reshape(len(labels), n_clips, -1)
        shifted = logits - logits.max(axis=2, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=2, keepdims=True)
        avg = probs.mean(axis=1)

        y = np.asarray(labels)
        order = np.argsort(-avg, axis=1)
        correct1 += int((order[:, 0] == y).sum())
        correctn += int((order[:, :k] == y[:, None]).any(axis=1).sum())
        loss_sum += float(-np.log(avg[np.arange(len(y)), y] + 1e-32).sum())

    return EvalResult(
        top1=correct1 / n,
        topn=correctn / n,
        topn_k=k,
        mean_loss=loss_sum / n,
        n_videos=n,
        clips_per_video=n_clips,
    )
