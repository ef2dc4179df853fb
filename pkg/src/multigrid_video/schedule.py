"""Variable-shape training schedules over a fixed base recipe.

A base recipe is a batch shape (B, T, H, W), a stepwise (or cosine) learning
rate schedule and a dataset size.  The compiler turns it into a per-iteration
plan that cycles through mini-batch shapes while holding the per-iteration
cost roughly constant: when the clip shape shrinks by some factor, the batch
grows by the inverse factor.

Two cycles compose.  The long cycle steps through ``S = 4`` shapes from
coarse (an eighth of the clip volume, eight times the batch) to the base
shape, restarting once per learning-rate stage (or stretched across all
pre-fine-tuning stages in single-cycle mode).  The short cycle modulates the
spatial size with period 3 on top of whatever base the long cycle set.  A
final stage at the base shape (short cycle still active) closes the plan,
with its first half at the previous stage's learning rate.

The total length is chosen so the plan consumes a target number of training
clips: ``epoch_multiplier`` times the clips of the base recipe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .errors import ConfigError

SQRT_HALF = math.sqrt(0.5)

# One entry per long-cycle step: (temporal, height, width) scale factors
# applied to the base shape, coarse to fine.  The batch multiplier of a step
# is the inverse of the product, so volume*batch stays constant.
LONG_CYCLE_FACTORS: tuple[tuple[float, float, float], ...] = (
    (0.25, SQRT_HALF, SQRT_HALF),
    (0.5, SQRT_HALF, SQRT_HALF),
    (0.5, 1.0, 1.0),
    (1.0, 1.0, 1.0),
)

# Spatial scale factors of the short cycle, indexed by iteration mod 3.
# These apply to the *default* spatial shape, never enlarging the current
# long-cycle base.
SHORT_CYCLE_FACTORS: tuple[float, float, float] = (0.5, SQRT_HALF, 1.0)
SHORT_CYCLE_PERIOD = 3

_SNAP_TOL = 1e-6


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _round_half_down(x: float) -> int:
    """Round to nearest with ties going down; used for proportional splits
    so that rounding slack accrues to later portions."""
    return int(math.ceil(x - 0.5))


def _snap_int(x: float) -> int:
    """Round a float that is an integer by design, up to float error."""
    r = round(x)
    if abs(x - r) > _SNAP_TOL * max(1.0, abs(r)):
        raise ValueError(f"{x} is not integral")
    return int(r)


def round_spatial(x: float) -> int:
    """Round a spatial size to the nearest even integer, at least 2."""
    return max(2, 2 * _round_half_up(x / 2.0))


def _scaled_dim(dim: int, factor: float) -> int:
    if factor == 1.0:
        return dim
    return round_spatial(dim * factor)


def _scaled_temporal(t: int, factor: float) -> int:
    if factor == 1.0:
        return t
    return max(1, _round_half_up(t * factor))


@dataclass(frozen=True, slots=True)
class Shape4D:
    """A mini-batch shape: `b` clips of `t` frames at `h` x `w` pixels."""

    b: int
    t: int
    h: int
    w: int

    def __post_init__(self) -> None:
        if min(self.b, self.t, self.h, self.w) < 1:
            raise ConfigError(f"shape dimensions must be positive: {self}")

    @property
    def clip_volume(self) -> int:
        return self.t * self.h * self.w

    @property
    def cost(self) -> int:
        """Work proxy for one iteration: batch size times clip volume."""
        return self.b * self.t * self.h * self.w


@dataclass(frozen=True)
class LrStage:
    """One constant-rate segment of a stepwise schedule."""

    lr: float
    iters: int

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"stage lr must be positive, got {self.lr}")
        if self.iters < 1:
            raise ConfigError(f"stage iters must be positive, got {self.iters}")


@dataclass(frozen=True)
class LrSchedule:
    """Base learning-rate schedule.

    ``mode`` is "step" (each stage holds its rate) or "cosine" (half-period
    cosine from ``stages[0].lr`` to zero over the whole plan; stage lengths
    then only set proportions for cycle placement).  Warmup, when enabled,
    linearly ramps from ``warmup_start_lr`` to the schedule's own value over
    the first ``warmup_iters`` iterations.
    """

    stages: tuple[LrStage, ...]
    warmup_iters: int = 0
    warmup_start_lr: float = 0.0
    mode: str = "step"

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ConfigError("schedule needs at least one stage")
        if self.warmup_iters < 0:
            raise ConfigError(f"warmup_iters must be >= 0, got {self.warmup_iters}")
        if self.warmup_iters > 0 and self.warmup_start_lr < 0:
            raise ConfigError(f"warmup_start_lr must be >= 0, got {self.warmup_start_lr}")
        if self.mode not in ("step", "cosine"):
            raise ConfigError(f"schedule mode must be 'step' or 'cosine', got {self.mode!r}")

    @property
    def total_iters(self) -> int:
        return sum(s.iters for s in self.stages)


@dataclass(frozen=True)
class CycleConfig:
    """Which shape cycles run and how much data the plan should consume.

    ``epoch_multiplier`` scales the clip budget relative to the base recipe
    (1.0 keeps the same number of training clips).  ``mode`` controls the
    long cycle: "multi" restarts it every learning-rate stage, "single"
    stretches one cycle over all stages before fine-tuning.
    """

    long_cycle: bool = True
    short_cycle: bool = True
    mode: str = "multi"
    epoch_multiplier: float = 1.5

    def __post_init__(self) -> None:
        if self.mode not in ("multi", "single"):
            raise ConfigError(f"cycle mode must be 'multi' or 'single', got {self.mode!r}")
        if not self.epoch_multiplier > 0:
            raise ConfigError(
                f"epoch_multiplier must be positive, got {self.epoch_multiplier}"
            )

    @property
    def any_cycle(self) -> bool:
        return self.long_cycle or self.short_cycle


@dataclass(frozen=True, slots=True)
class IterationRecord:
    """Everything the trainer needs to run one iteration."""

    iteration: int
    phase: str        # "baseline", "multigrid" or "finetune"
    long_idx: int     # long-cycle step, pinned to the last (base) step when off
    short_m: int      # short-cycle phase, iteration mod 3; pinned to 2 when off
    b: int
    t: int
    h: int
    w: int
    lr: float
    bn_group: int
    lr_stage: int     # index of the stage whose rate is applied
    cum_clips: int    # clips consumed through the end of this iteration
    epoch: float      # cum_clips / dataset_size

    @property
    def shape(self) -> Shape4D:
        return Shape4D(self.b, self.t, self.h, self.w)

    def to_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "phase": self.phase,
            "long_idx": self.long_idx,
            "short_m": self.short_m,
            "b": self.b,
            "t": self.t,
            "h": self.h,
            "w": self.w,
            "lr": self.lr,
            "bn_group": self.bn_group,
            "lr_stage": self.lr_stage,
            "cum_clips": self.cum_clips,
            "epoch": self.epoch,
        }


_RECORD_KEYS = (
    "iter", "phase", "long_idx", "short_m", "b", "t", "h", "w",
    "lr", "bn_group", "lr_stage", "cum_clips", "epoch",
)


def long_batch_multiplier(long_idx: int) -> int:
    tf, hf, wf = LONG_CYCLE_FACTORS[long_idx]
    return _snap_int(1.0 / (tf * hf * wf))


def short_batch_multiplier(long_idx: int, short_m: int) -> int:
    """Batch gain of the short cycle given the current long-cycle step.

    Computed from the design factors, not from rounded pixel sizes: the
    spatial shrink actually applied per axis is ``min(short, long)/long``,
    and the batch multiplier is its squared inverse (snapped to an integer).
    """
    _, hf, wf = LONG_CYCLE_FACTORS[long_idx]
    sf = SHORT_CYCLE_FACTORS[short_m]
    gain = (hf * wf) / (min(sf, hf) * min(sf, wf))
    return _snap_int(gain)


def scaled_batch(
    base_batch: int,
    long_idx: int,
    short_m: int,
    *,
    long_cycle: bool = True,
    short_cycle: bool = True,
) -> int:
    """Mini-batch size for a cycle position, per the constant-cost rule."""
    b = base_batch
    if long_cycle:
        b *= long_batch_multiplier(long_idx)
    if short_cycle:
        b *= short_batch_multiplier(long_idx if long_cycle else len(LONG_CYCLE_FACTORS) - 1,
                                    short_m)
    return b


def long_cycle_shape(base: Shape4D, long_idx: int) -> Shape4D:
    """Shape of a long-cycle step (short cycle at its base position)."""
    tf, hf, wf = LONG_CYCLE_FACTORS[long_idx]
    return Shape4D(
        b=base.b * long_batch_multiplier(long_idx),
        t=_scaled_temporal(base.t, tf),
        h=_scaled_dim(base.h, hf),
        w=_scaled_dim(base.w, wf),
    )


def short_cycle_shape(
    default_hw: tuple[int, int],
    current_hw: tuple[int, int],
    short_m: int,
) -> tuple[int, int]:
    """Spatial shape for a short-cycle phase.

    The target is a fraction of the *default* spatial shape; it is clamped
    to the current long-cycle base so the short cycle never enlarges.
    """
    sf = SHORT_CYCLE_FACTORS[short_m]
    h = min(current_hw[0], _scaled_dim(default_hw[0], sf))
    w = min(current_hw[1], _scaled_dim(default_hw[1], sf))
    return h, w


def _bn_group_size(bn_base: int, short_mult: int, batch: int) -> int:
    """Statistics-group size: grows with the short cycle, never exceeds the
    batch, and always divides it."""
    g = min(bn_base * short_mult, batch)
    if batch % g:
        g = math.gcd(batch, g)
    return g


@dataclass(frozen=True)
class CompiledPlan:
    """A fully expanded training plan."""

    records: tuple[IterationRecord, ...]
    base: Shape4D
    base_total_iters: int
    dataset_size: int
    schedule: LrSchedule
    cycles: CycleConfig
    bn_base: int

    @property
    def total_iters(self) -> int:
        return len(self.records)

    @property
    def total_clips(self) -> int:
        return self.records[-1].cum_clips if self.records else 0

    @property
    def epochs(self) -> float:
        return self.total_clips / self.dataset_size

    @property
    def iteration_ratio(self) -> float:
        """Base-recipe iterations per plan iteration (> 1 means fewer)."""
        return self.base_total_iters / self.total_iters

    @property
    def total_cost(self) -> int:
        return sum(r.b * r.t * r.h * r.w for r in self.records)

    def to_jsonl(self, dest: str | Path | IO[str]) -> None:
        """Write one compact JSON object per iteration."""
        if hasattr(dest, "write"):
            _write_records(dest, self.records)
        else:
            with open(dest, "w") as fh:
                _write_records(fh, self.records)


def _write_records(fh: IO[str], records: Iterable[IterationRecord]) -> None:
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), separators=(",", ":")))
        fh.write("\n")


def read_plan_jsonl(path: str | Path) -> list[IterationRecord]:
    """Read a plan written by ``CompiledPlan.to_jsonl``."""
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = [k for k in _RECORD_KEYS if k not in row]
            if missing:
                raise ConfigError(f"{path}:{line_no + 1}: missing keys {missing}")
            records.append(IterationRecord(
                iteration=row["iter"], phase=row["phase"],
                long_idx=row["long_idx"], short_m=row["short_m"],
                b=row["b"], t=row["t"], h=row["h"], w=row["w"],
                lr=row["lr"], bn_group=row["bn_group"],
                lr_stage=row["lr_stage"], cum_clips=row["cum_clips"],
                epoch=row["epoch"],
            ))
    return records


def _stage_bounds(stage_iters: list[int], total: int) -> list[int]:
    """Scale base stage lengths to a plan of `total` iterations.

    Cumulative boundaries are rounded half-down so slack lands in later
    stages; the last boundary is pinned to `total`.
    """
    base_total = sum(stage_iters)
    cum = 0
    bounds = [0]
    for iters in stage_iters[:-1]:
        cum += iters
        bounds.append(_round_half_down(cum * total / base_total))
    bounds.append(total)
    return bounds


def _split_blocks(n: int, parts: int) -> list[int]:
    """Split n iterations into `parts` near-equal blocks, remainder last."""
    base, rem = divmod(n, parts)
    return [base] * (parts - rem) + [base + 1] * rem


def _plan_blocks(
    total: int,
    stage_iters: list[int],
    cycles: CycleConfig,
) -> tuple[list[tuple[int, int, str]], list[int]]:
    """Lay out the long cycle over a plan of `total` iterations.

    Returns ``(blocks, bounds)`` where each block is (length, long_idx,
    phase) in execution order and `bounds` are the scaled stage boundaries.
    """
    n_shapes = len(LONG_CYCLE_FACTORS)
    base_idx = n_shapes - 1
    bounds = _stage_bounds(stage_iters, total)
    blocks: list[tuple[int, int, str]] = []

    if not cycles.any_cycle:
        blocks.append((total, base_idx, "baseline"))
        return blocks, bounds

    ft_start = bounds[-2]
    pre = ft_start
    if not cycles.long_cycle:
        blocks.append((pre, base_idx, "multigrid"))
    elif cycles.mode == "single":
        for idx, n in enumerate(_split_blocks(pre, n_shapes)):
            blocks.append((n, idx, "multigrid"))
    else:
        for stage in range(len(stage_iters) - 1):
            stage_n = bounds[stage + 1] - bounds[stage]
            for idx, n in enumerate(_split_blocks(stage_n, n_shapes)):
                blocks.append((n, idx, "multigrid"))
    blocks.append((total - ft_start, base_idx, "finetune"))
    return blocks, bounds


def _pattern_sum(pattern: tuple[int, int, int], start: int, n: int) -> int:
    """Sum of ``pattern[(start + k) % 3]`` for k in [0, n)."""
    total = 0
    for m in range(SHORT_CYCLE_PERIOD):
        first = (m - start) % SHORT_CYCLE_PERIOD
        if first < n:
            total += pattern[m] * ((n - first + SHORT_CYCLE_PERIOD - 1) // SHORT_CYCLE_PERIOD)
    return total


def _realized_clips(
    total: int,
    stage_iters: list[int],
    cycles: CycleConfig,
    base_batch: int,
    patterns: tuple[tuple[int, int, int], ...],
) -> int:
    """Clips consumed by a plan of `total` iterations, in O(stages * shapes)."""
    blocks, _ = _plan_blocks(total, stage_iters, cycles)
    clips = 0
    pos = 0
    for n, long_idx, _phase in blocks:
        lm = long_batch_multiplier(long_idx) if cycles.long_cycle else 1
        if cycles.short_cycle:
            clips += base_batch * lm * _pattern_sum(patterns[long_idx], pos, n)
        else:
            clips += base_batch * lm * n
        pos += n
    return clips


def _choose_total_iters(
    target_clips: int,
    stage_iters: list[int],
    cycles: CycleConfig,
    base_batch: int,
    patterns: tuple[tuple[int, int, int], ...],
) -> int:
    """Smallest-error plan length whose realized clip count hits the target.

    Realized clips grow essentially linearly in the plan length (boundary
    rounding adds only bounded jitter), so a bisection followed by a small
    local scan finds the argmin.
    """

    def realized(total: int) -> int:
        return _realized_clips(total, stage_iters, cycles, base_batch, patterns)

    lo, hi = 1, max(8, int(target_clips // base_batch) + 8)
    while lo < hi:
        mid = (lo + hi) // 2
        if realized(mid) < target_clips:
            lo = mid + 1
        else:
            hi = mid

    best, best_err = lo, abs(realized(lo) - target_clips)
    for cand in range(max(1, lo - 8), lo + 9):
        err = abs(realized(cand) - target_clips)
        if err < best_err or (err == best_err and cand < best):
            best, best_err = cand, err
    max_step = base_batch * 8 * 4
    if best_err > 3 * max_step:
        raise ConfigError(
            f"cannot reach target of {target_clips} clips: best plan of "
            f"{best} iterations misses by {best_err}"
        )
    return best


def compile(
    base: Shape4D,
    schedule: LrSchedule,
    cycles: CycleConfig,
    dataset_size: int,
    bn_base: int = 8,
) -> CompiledPlan:
    """Expand a base recipe into a per-iteration plan.

    With both cycles off the plan reproduces the base recipe (scaled by
    ``epoch_multiplier``).  With any cycle on, the last stage becomes a
    fine-tuning stage at the base shape: under a stepwise schedule its first
    half runs at the previous stage's rate.  The learning rate is scaled by
    the long-cycle batch multiplier only; the short cycle never changes it.

    Args:
        base: base mini-batch shape (B, T, H, W).
        schedule: base learning-rate schedule; needs at least two stages
            when any cycle is enabled.
        cycles: cycle configuration.
        dataset_size: number of training clips in one epoch.
        bn_base: statistics-group size at the base shape.

    Returns:
        A ``CompiledPlan`` whose records cover every iteration.
    """
    if dataset_size < 1:
        raise ConfigError(f"dataset_size must be positive, got {dataset_size}")
    if bn_base < 1:
        raise ConfigError(f"bn_base must be positive, got {bn_base}")
    n_stages = len(schedule.stages)
    if cycles.any_cycle and n_stages < 2:
        raise ConfigError(
            "shape cycling needs at least 2 schedule stages "
            "(the last stage fine-tunes at the base shape)"
        )

    n_shapes = len(LONG_CYCLE_FACTORS)
    base_idx = n_shapes - 1
    stage_iters = [s.iters for s in schedule.stages]
    base_total = schedule.total_iters

    # Short-cycle batch-multiplier pattern for each long-cycle step.
    patterns = tuple(
        tuple(short_batch_multiplier(idx, m) for m in range(SHORT_CYCLE_PERIOD))
        for idx in range(n_shapes)
    )

    target_clips = _round_half_up(cycles.epoch_multiplier * base_total * base.b)
    if not cycles.any_cycle:
        total = _round_half_up(cycles.epoch_multiplier * base_total)
    else:
        total = _choose_total_iters(
            target_clips, stage_iters, cycles, base.b, patterns)

    blocks, bounds = _plan_blocks(total, stage_iters, cycles)
    warmup_n = _round_half_down(schedule.warmup_iters * total / base_total)
    warmup0 = schedule.warmup_start_lr
    ft_start = bounds[-2] if cycles.any_cycle else total
    ft_half = (total - ft_start) // 2

    # Precompute per-(long step, short phase) record ingredients.
    long_shapes = [long_cycle_shape(Shape4D(1, base.t, base.h, base.w), i)
                   for i in range(n_shapes)]
    cell: list[list[tuple[int, int, int, int, int, int]]] = []
    for idx in range(n_shapes):
        ls = long_shapes[idx]
        lm = long_batch_multiplier(idx) if cycles.long_cycle else 1
        cur_t = ls.t if cycles.long_cycle else base.t
        cur_hw = (ls.h, ls.w) if cycles.long_cycle else (base.h, base.w)
        row = []
        for m in range(SHORT_CYCLE_PERIOD):
            if cycles.short_cycle:
                sm = patterns[idx][m] if cycles.long_cycle else patterns[base_idx][m]
                h, w = short_cycle_shape((base.h, base.w), cur_hw, m)
            else:
                sm = 1
                h, w = cur_hw
            b = base.b * lm * sm
            row.append((b, cur_t, h, w, lm, _bn_group_size(bn_base, sm, b)))
        cell.append(row)

    cos_peak = schedule.stages[0].lr
    stage_lrs = [s.lr for s in schedule.stages]
    records: list[IterationRecord] = []
    cum_clips = 0
    i = 0
    stage_ptr = 0
    for n, long_idx, phase in blocks:
        row = cell[long_idx]
        for _ in range(n):
            while stage_ptr < n_stages - 1 and i >= bounds[stage_ptr + 1]:
                stage_ptr += 1
            m = i % SHORT_CYCLE_PERIOD if cycles.short_cycle else SHORT_CYCLE_PERIOD - 1
            b, t, h, w, lm, bn = row[m]
            if schedule.mode == "cosine":
                lr_stage = stage_ptr
                lr = cos_peak * 0.5 * (1.0 + math.cos(math.pi * i / total)) * lm
            elif phase == "finetune":
                lr_stage = n_stages - 2 if (i - ft_start) < ft_half else n_stages - 1
                lr = stage_lrs[lr_stage]
            else:
                lr_stage = stage_ptr
                lr = stage_lrs[lr_stage] * lm
            if i < warmup_n:
                lr = warmup0 + (lr - warmup0) * (i / warmup_n)
            cum_clips += b
            records.append(IterationRecord(
                iteration=i, phase=phase, long_idx=long_idx, short_m=m,
                b=b, t=t, h=h, w=w, lr=lr, bn_group=bn, lr_stage=lr_stage,
                cum_clips=cum_clips, epoch=cum_clips / dataset_size,
            ))
            i += 1

    return CompiledPlan(
        records=tuple(records), base=base, base_total_iters=base_total,
        dataset_size=dataset_size, schedule=schedule, cycles=cycles,
        bn_base=bn_base,
    )
