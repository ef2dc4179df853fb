"""Command-line interface.

Subcommands:

    plan       compile one or more configs into plan/summary files
    train      train on the synthetic dataset described by a config
    eval       score a checkpoint on a synthetic split
    resample   regrid a single clip file

Configs come from ``--config FILE`` or ``--preset NAME``; all outputs are
deterministic for a given seed unless ``--timing`` is requested.  BLAS
thread count is taken from ``--threads``, else the MULTIGRID_VIDEO_THREADS
environment variable, else left to the library default.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .accounting import check_comparable, summarize, write_comparison_csv
from .clipbin import read_clipbin, write_clipbin
from .config import AppConfig, load_config
from .errors import ConfigError, MultigridError
from .grids import GridSampleRanges, center_eval_grid, draw_training_grid, resample
from .nn.model import VideoNet
from .nn.optim import SgdMomentum
from .presets import load_preset, preset_names
from .rng import stream_rng
from .schedule import CompiledPlan, compile
from .synth import generate
from .trainer import (
    evaluate,
    load_training_checkpoint,
    save_training_checkpoint,
    train,
)

THREADS_ENV = "MULTIGRID_VIDEO_THREADS"


def _thread_limit(args) -> int | None:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return None


@contextlib.contextmanager
def _limited_threads(limit: int | None):
    if limit is None:
        yield
        return
    if limit < 1:
        raise ConfigError(f"thread count must be positive, got {limit}")
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=limit):
        yield


def _add_config_arg(parser: argparse.ArgumentParser, multiple: bool = False):
    group = parser.add_argument_group("configuration")
    kwargs = {"action": "append", "default": []} if multiple else {}
    group.add_argument("--config", metavar="FILE", **kwargs,
                       help="JSON run config")
    group.add_argument("--preset", metavar="NAME", **kwargs,
                       help=f"built-in config, one of: {', '.join(preset_names())}")


def _resolve_configs(args, *, multiple: bool) -> list[tuple[str, AppConfig]]:
    configs: list[tuple[str, AppConfig]] = []
    raw_cfg = args.config if multiple else ([args.config] if args.config else [])
    raw_pre = args.preset if multiple else ([args.preset] if args.preset else [])
    for path in raw_cfg:
        configs.append((Path(path).stem, load_config(path)))
    for name in raw_pre:
        try:
            configs.append((name, load_preset(name)))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    if not configs:
        raise ConfigError("pass --config FILE or --preset NAME")
    if not multiple and len(configs) > 1:
        raise ConfigError("this subcommand takes exactly one config")
    return configs


def _compile(cfg: AppConfig) -> CompiledPlan:
    return compile(cfg.base, cfg.schedule, cfg.cycles,
                   dataset_size=cfg.dataset_size, bn_base=cfg.bn_base)


def _seed(args, cfg: AppConfig) -> int:
    return args.seed if args.seed is not None else cfg.seed


def cmd_plan(args) -> int:
    configs = _resolve_configs(args, multiple=True)
    plans = [(name, _compile(cfg)) for name, cfg in configs]
    if len(plans) > 1:
        check_comparable([p for _, p in plans])
    summaries = [(name, summarize(plan)) for name, plan in plans]

    if args.out:
        if len(plans) > 1:
            raise ConfigError("--out expects a single config")
        plans[0][1].to_jsonl(args.out)
    if args.summary:
        if len(summaries) > 1:
            raise ConfigError("--summary expects a single config")
        summaries[0][1].to_json(args.summary)
    if args.csv:
        write_comparison_csv(summaries, args.csv)

    for name, summary in summaries:
        d = summary.to_dict()
        print(f"{name}: {d['total_iters']} iters, {d['total_clips']} clips, "
              f"{d['epochs']:.2f} epochs, iteration ratio "
              f"{d['iteration_ratio']:.3f}, cost ratio {d['cost_ratio']:.3f}")
    return 0


def _require_synth(cfg: AppConfig):
    if cfg.train is None or cfg.train.synth is None:
        raise ConfigError(
            "this config has no train.synth section; training and "
            "evaluation need the synthetic dataset")


def cmd_train(args) -> int:
    (name, cfg), = _resolve_configs(args, multiple=False)
    _require_synth(cfg)
    seed = _seed(args, cfg)
    plan = _compile(cfg)
    tr = cfg.train

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan.to_jsonl(out_dir / "plan.jsonl")

    dataset = generate(tr.synth, tr.synth_seed)
    model = VideoNet(
        num_classes=tr.synth.num_classes,
        in_channels=cfg.model_in_channels,
        widths=cfg.model_widths,
        seed=seed,
    )
    optimizer = SgdMomentum(tr.params.momentum, tr.params.weight_decay)
    start_iter = 0
    if args.resume:
        meta = load_training_checkpoint(args.resume, model, optimizer)
        start_iter = int(meta.get("next_iteration", 0))
        if int(meta.get("seed", seed)) != seed:
            raise ConfigError(
                f"checkpoint was trained with seed {meta.get('seed')}, "
                f"got --seed {seed}")
        print(f"resuming at iteration {start_iter}", file=sys.stderr)

    result = train(
        plan, model, dataset, tr.params, seed=seed, start_iter=start_iter,
        optimizer=optimizer,
        metrics_dest=out_dir / "metrics.jsonl",
        timing=args.timing, log_every=args.log_every,
    )
    save_training_checkpoint(
        out_dir / "checkpoint.mgck", model, optimizer,
        seed=seed, next_iteration=plan.total_iters,
        extra_meta={"config": name})

    summary = {
        "config": name,
        "seed": seed,
        "plan": summarize(plan).to_dict(),
        "train": result.summary,
    }
    if tr.val_videos > 0 and not args.no_eval:
        val = generate(cfg.val_spec(), tr.val_seed)
        ev = evaluate(
            model, val,
            clip_shape=(cfg.base.t, cfg.base.h, cfg.base.w),
            scale=tr.params.sampling.short_side_min,
            t_stride=tr.params.sampling.t_stride_min,
            n_clips=tr.eval.n_clips, topn=tr.eval.topn,
            batch_videos=tr.eval.batch_videos,
        )
        summary["eval"] = ev.to_dict()
        print(f"{name}: val top1 {ev.top1:.4f} top{ev.topn_k} {ev.topn:.4f}")
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    final_loss = result.summary["final_loss"]
    loss_txt = f"{final_loss:.4f}" if final_loss is not None else "n/a"
    print(f"{name}: trained {result.summary['iterations']} iterations, "
          f"final loss {loss_txt}, outputs in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    (name, cfg), = _resolve_configs(args, multiple=False)
    _require_synth(cfg)
    tr = cfg.train

    model = VideoNet(
        num_classes=tr.synth.num_classes,
        in_channels=cfg.model_in_channels,
        widths=cfg.model_widths,
        seed=0,
    )
    optimizer = SgdMomentum()
    load_training_checkpoint(args.checkpoint, model, optimizer)

    if args.split == "val":
        dataset = generate(cfg.val_spec(), tr.val_seed)
    else:
        dataset = generate(tr.synth, tr.synth_seed)
    ev = evaluate(
        model, dataset,
        clip_shape=(cfg.base.t, cfg.base.h, cfg.base.w),
        scale=tr.params.sampling.short_side_min,
        t_stride=tr.params.sampling.t_stride_min,
        n_clips=args.n_clips or tr.eval.n_clips,
        topn=tr.eval.topn, batch_videos=tr.eval.batch_videos,
    )
    payload = {"config": name, "split": args.split, **ev.to_dict()}
    if args.out:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"{name} [{args.split}]: top1 {ev.top1:.4f} "
          f"top{ev.topn_k} {ev.topn:.4f} loss {ev.mean_loss:.4f}")
    return 0


def cmd_resample(args) -> int:
    clip = read_clipbin(args.input)
    target = tuple(args.target)
    if args.mode == "center":
        grid = center_eval_grid(
            clip.shape[:3], target,
            scale=args.scale or min(clip.shape[1], clip.shape[2]),
            t_stride=args.t_stride)
    else:
        scale_min = args.scale or min(clip.shape[1], clip.shape[2])
        ranges = GridSampleRanges(
            short_side_min=scale_min,
            short_side_max=args.scale_max or scale_min,
            t_stride_min=args.t_stride,
            t_stride_max=args.t_stride_max or args.t_stride,
        )
        rng = stream_rng(args.seed if args.seed is not None else 0, 3)
        grid = draw_training_grid(clip.shape[:3], target, ranges, rng)
    out = resample(clip, grid)
    write_clipbin(args.output, out)
    print(f"{args.input} {clip.shape} -> {args.output} {out.shape}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multigrid-video",
        description="Constant-cost variable-shape training schedules "
                    "for video models.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compile configs into iteration plans")
    _add_config_arg(p, multiple=True)
    p.add_argument("--out", metavar="FILE", help="write the plan as JSONL")
    p.add_argument("--summary", metavar="FILE", help="write summary JSON")
    p.add_argument("--csv", metavar="FILE",
                   help="write one (plan, metric, value) row per metric")
    p.add_argument("--threads", type=int, help="BLAS thread cap")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train on synthetic data")
    _add_config_arg(p)
    p.add_argument("--out-dir", metavar="DIR", required=True,
                   help="directory for plan, metrics, checkpoint, summary")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--resume", metavar="CKPT",
                   help="continue from a checkpoint written by train")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock per iteration (breaks byte-"
                        "stable outputs)")
    p.add_argument("--log-every", type=int, default=0, metavar="N",
                   help="progress line on stderr every N iterations")
    p.add_argument("--no-eval", action="store_true",
                   help="skip validation after training")
    p.add_argument("--threads", type=int, help="BLAS thread cap")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_arg(p)
    p.add_argument("--checkpoint", metavar="CKPT", required=True)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.add_argument("--n-clips", type=int, metavar="K",
                   help="override clips per video")
    p.add_argument("--out", metavar="FILE", help="write results as JSON")
    p.add_argument("--threads", type=int, help="BLAS thread cap")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("resample", help="regrid one clip file")
    p.add_argument("--input", metavar="FILE", required=True)
    p.add_argument("--output", metavar="FILE", required=True)
    p.add_argument("--target", type=int, nargs=3, required=True,
                   metavar=("T", "H", "W"))
    p.add_argument("--mode", choices=("center", "random"), default="center")
    p.add_argument("--scale", type=float,
                   help="short-side scale (center) or its minimum (random); "
                        "defaults to the source short side")
    p.add_argument("--scale-max", type=float,
                   help="random mode: short-side scale maximum")
    p.add_argument("--t-stride", type=float, default=1.0)
    p.add_argument("--t-stride-max", type=float,
                   help="random mode: temporal stride maximum")
    p.add_argument("--seed", type=int, help="random mode seed")
    p.add_argument("--threads", type=int, help="BLAS thread cap")
    p.set_defaults(func=cmd_resample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _limited_threads(_thread_limit(args)):
            return args.func(args)
    except (MultigridError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
