"""Cost accounting for compiled plans.

Summaries reduce a plan to totals and ratios against its own base recipe:
iteration count, clips consumed, epochs, and a work proxy (batch size times
clip volume, summed over iterations).  Ratios are base over plan, so values
above 1 mean the plan is cheaper than its base recipe.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import IO, Iterable

from .errors import AccountingError
from .schedule import CompiledPlan


@dataclass(frozen=True)
class PlanSummary:
    """Totals and base-relative ratios for one compiled plan."""

    total_iters: int
    total_clips: int
    total_cost: int
    epochs: float
    mean_batch: float
    min_batch: int
    max_batch: int
    base_total_iters: int
    base_iter_cost: int
    iteration_ratio: float   # base iters / plan iters
    clip_ratio: float        # plan clips / base clips
    cost_ratio: float        # plan cost / base cost
    max_cost_deviation: float  # max |per-iter cost / base iter cost - 1|
    finetune_iters: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, dest: str | Path | IO[str]) -> None:
        payload = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if hasattr(dest, "write"):
            dest.write(payload)
        else:
            Path(dest).write_text(payload)


def summarize(plan: CompiledPlan) -> PlanSummary:
    """Reduce a compiled plan to a ``PlanSummary``."""
    if not plan.records:
        raise AccountingError("cannot summarize an empty plan")
    base_iter_cost = plan.base.cost
    base_cost = plan.base_total_iters * base_iter_cost
    base_clips = plan.base_total_iters * plan.base.b

    total_cost = 0
    max_dev = 0.0
    min_b = max_b = plan.records[0].b
    ft = 0
    for r in plan.records:
        c = r.b * r.t * r.h * r.w
        total_cost += c
        dev = abs(c / base_iter_cost - 1.0)
        if dev > max_dev:
            max_dev = dev
        if r.b < min_b:
            min_b = r.b
        if r.b > max_b:
            max_b = r.b
        if r.phase == "finetune":
            ft += 1

    n = plan.total_iters
    clips = plan.total_clips
    return PlanSummary(
        total_iters=n,
        total_clips=clips,
        total_cost=total_cost,
        epochs=clips / plan.dataset_size,
        mean_batch=clips / n,
        min_batch=min_b,
        max_batch=max_b,
        base_total_iters=plan.base_total_iters,
        base_iter_cost=base_iter_cost,
        iteration_ratio=plan.base_total_iters / n,
        clip_ratio=clips / base_clips,
        cost_ratio=total_cost / base_cost,
        max_cost_deviation=max_dev,
        finetune_iters=ft,
    )


def check_comparable(plans: Iterable[CompiledPlan]) -> None:
    """Raise ``AccountingError`` unless all plans share a base recipe."""
    plans = list(plans)
    if not plans:
        return
    ref = plans[0]
    for p in plans[1:]:
        if p.base != ref.base:
            raise AccountingError(
                f"plans have different base shapes: {p.base} vs {ref.base}"
            )
        if p.base_total_iters != ref.base_total_iters:
            raise AccountingError(
                f"plans have different base iteration counts: "
                f"{p.base_total_iters} vs {ref.base_total_iters}"
            )
        if p.dataset_size != ref.dataset_size:
            raise AccountingError(
                f"plans have different dataset sizes: "
                f"{p.dataset_size} vs {ref.dataset_size}"
            )


def write_comparison_csv(
    named: Iterable[tuple[str, PlanSummary]],
    dest: str | Path | IO[str],
) -> None:
    """Write summaries as CSV with one row per (plan, metric) pair."""
    rows = list(named)
    if hasattr(dest, "write"):
        _write_csv(dest, rows)
    else:
        with open(dest, "w", newline="") as fh:
            _write_csv(fh, rows)


def _write_csv(fh: IO[str], rows: list[tuple[str, PlanSummary]]) -> None:
    writer = csv.writer(fh)
    writer.writerow(["plan", "metric", "value"])
    for name, summary in rows:
        for metric, value in summary.to_dict().items():
            writer.writerow([name, metric, value])
