"""Command-line entry point.

Subcommands: synth, train, summarize, evaluate, ablate, partition-map,
check. Every run with the same inputs and seeds writes identical output
files. Datasets resolve from --data, falling back to $DIVSUM_DATA_DIR.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attention import GridSpec, SIMILARITY_KINDS, LCA_VARIANTS, partition_map_csv
from .autograd import ContractError, NumericError, ShapeError
from .checks import run_self_checks
from .config import ConfigError, TrainConfig, load_config
from .data import (AGGREGATION_MODES, DataFormatError, SynthSpec, load_dataset,
                   load_manifest, save_dataset, synth_generate)
from .evaluation import (EvalProtocol, PROTOCOL_MODES, build_folds, evaluate,
                         human_baseline, load_splits, random_baseline, report_csv,
                         report_text, save_splits)
from .segmentation import summarize_video
from .training import load_checkpoint, save_checkpoint, train

DATA_DIR_ENV = "DIVSUM_DATA_DIR"


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="RNG seed (init + data order)")
    p.add_argument("--sim", choices=SIMILARITY_KINDS, help="pairwise similarity kind")
    p.add_argument("--radius", type=int, help="local window radius R")
    p.add_argument("--lca-variant", choices=LCA_VARIANTS, help="local attention variant")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--alpha", type=float, help="repelling loss weight")
    p.add_argument("--beta", type=float, help="reconstruction loss weight")
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--unsupervised", action="store_true",
                   help="train without ground-truth labels")


def _config_from_args(args) -> TrainConfig:
    overrides = {}
    for flag, key in (("seed", "seed"), ("sim", "sim_kind"), ("radius", "neighbor_R"),
                      ("lca_variant", "lca_variant"), ("epochs", "epochs"),
                      ("lr", "learning_rate"), ("alpha", "alpha"), ("beta", "beta"),
                      ("weight_decay", "weight_decay")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "unsupervised", False):
        overrides["supervised"] = False
    return load_config(getattr(args, "config", None), overrides)


def _data_path(args) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    raise ContractError(f"no dataset given: pass --data or set ${DATA_DIR_ENV}")


def _history_csv(result) -> str:
    cols = ["epoch", "total"] + sorted(result.part_history)
    rows = [",".join(cols)]
    for e in range(result.epochs_run):
        cells = [str(e), f"{result.history[e]:.8f}"]
        cells += [f"{result.part_history[c][e]:.8f}" for c in sorted(result.part_history)]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = SynthSpec(videos=args.videos, frames=args.frames, dim=args.dim,
                     shots_per_video=args.shots, noise=args.noise, seed=args.seed,
                     users=args.users, budget_ratio=args.budget_ratio,
                     name=args.name, aggregation=args.agg)
    records = synth_generate(spec)
    manifest = save_dataset(args.out, records, name=spec.name,
                            aggregation=spec.aggregation)
    print(f"wrote {len(records)} videos to {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    videos = load_dataset(_data_path(args))
    result = train(videos, cfg)
    out = Path(args.out)
    save_checkpoint(out, result.params, result.state, cfg, epoch=result.epochs_run)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    history_path.write_text(_history_csv(result))
    print(f"trained {result.epochs_run} epochs on {len(videos)} videos; "
          f"final loss {result.history[-1]:.6f}")
    print(f"checkpoint: {out}")
    print(f"loss history: {history_path}")
    return 0


def cmd_summarize(args) -> int:
    params, _, cfg, _ = load_checkpoint(args.checkpoint)
    videos = load_dataset(_data_path(args))
    if args.video is not None:
        videos = [v for v in videos if v.id == args.video]
        if not videos:
            raise ContractError(f"video id {args.video!r} not in the dataset")
    rows = ["video_id,frame,score,selected"]
    for v in videos:
        detail = summarize_video(v, params, args.budget_ratio,
                                 use_gda=cfg.use_gda, use_lca=cfg.use_lca)
        for t in range(v.frame_count):
            rows.append(f"{v.id},{t},{detail.frame_scores[t]:.8f},"
                        f"{detail.mask.frame_mask[t]}")
        kept = int(detail.mask.frame_mask.sum())
        print(f"{v.id}: kept {kept}/{v.frame_count} frames "
              f"({len(detail.mask.selected_shots)} shots)")
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"summary: {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    data = _data_path(args)
    videos = load_dataset(data)
    agg = args.agg or load_manifest(data).aggregation
    protocol = EvalProtocol(mode=args.mode, folds=args.folds, agg=agg,
                            seed=args.split_seed if args.split_seed is not None else cfg.seed,
                            target_corpus=args.target_corpus)
    splits = None
    if args.splits:
        split_path = Path(args.splits)
        if split_path.exists():
            splits, _ = load_splits(split_path)
        else:
            splits = build_folds(videos, protocol)
            save_splits(split_path, splits, protocol)
            print(f"splits: {split_path}")
    report = evaluate(videos, cfg, protocol, budget_ratio=args.budget_ratio,
                      splits=splits)
    text = report_text(report)
    print(text, end="")
    if args.baseline != "none":
        base = (random_baseline if args.baseline == "random" else human_baseline)(
            videos, protocol, budget_ratio=args.budget_ratio)
        print(f"{args.baseline} baseline: F={base.mean_f:.2f} "
              f"tau={base.kendall:.3f} rho={base.spearman:.3f}")
    if args.report:
        Path(args.report).write_text(text)
    if args.csv:
        Path(args.csv).write_text(report_csv(report))
    return 0


_ABLATION_AXES = ("similarity", "radius", "losses", "variant")


def _axis_variants(axis: str, cfg: TrainConfig):
    """(label, config) pairs for one ablation axis."""
    if axis == "similarity":
        return [(k, replace(cfg, sim_kind=k)) for k in SIMILARITY_KINDS]
    if axis == "radius":
        return [(f"R={r}", replace(cfg, neighbor_R=r)) for r in (1, 2, 3, 4)]
    if axis == "losses":
        return [
            ("cls", replace(cfg, alpha=0.0, beta=0.0)),
            ("cls+repel", replace(cfg, beta=0.0)),
            ("cls+recon", replace(cfg, alpha=0.0)),
            ("cls+repel+recon", cfg),
        ]
    if axis == "variant":
        return [(v, replace(cfg, lca_variant=v)) for v in LCA_VARIANTS]
    raise ContractError(f"unknown ablation axis: {axis!r}")


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    data = _data_path(args)
    videos = load_dataset(data)
    agg = args.agg or load_manifest(data).aggregation
    rows = ["axis,value,seed,mean_f,kendall_tau,spearman_rho"]
    for label, variant_cfg in _axis_variants(args.axis, cfg):
        for r in range(args.repeats):
            seed = cfg.seed + r
            run_cfg = replace(variant_cfg, seed=seed)
            protocol = EvalProtocol(mode="canonical", folds=args.folds, agg=agg,
                                    seed=seed)
            report = evaluate(videos, run_cfg, protocol,
                              budget_ratio=args.budget_ratio)
            row = (f"{args.axis},{label},{seed},{report.mean_f:.4f},"
                   f"{report.kendall:.4f},{report.spearman:.4f}")
            rows.append(row)
            print(row)
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n")
        print(f"ablation table: {args.out}")
    return 0


def _parse_points(text: str) -> np.ndarray:
    try:
        pts = [[float(c) for c in pair.split(",")] for pair in text.split(";") if pair]
    except ValueError:
        raise ContractError(f"cannot parse points {text!r}; want 'x,y;x,y;...'")
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ContractError("every point needs exactly two coordinates")
    return arr


def cmd_partition_map(args) -> int:
    if args.points:
        pts = _parse_points(args.points)
    else:
        rng = np.random.default_rng(args.seed)
        pts = rng.uniform(0.1, 0.9, size=(args.num_points, 2))
    grid = GridSpec(nx=args.grid_size, ny=args.grid_size)
    Path(args.out).write_text(partition_map_csv(pts, args.sim, grid))
    coords = "; ".join(f"({x:.3f}, {y:.3f})" for x, y in pts)
    print(f"partition map for {len(pts)} points [{coords}] with {args.sim}: {args.out}")
    return 0


def cmd_check(args) -> int:
    return 0 if run_self_checks() else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divsum",
        description="Video summarization with diverse contextual attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--videos", type=int, default=5)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--shots", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--budget-ratio", type=float, default=0.15)
    p.add_argument("--name", default="synth")
    p.add_argument("--agg", choices=AGGREGATION_MODES, default="mean_over_users")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model, write a checkpoint")
    p.add_argument("--data", help=f"dataset dir/manifest (default ${DATA_DIR_ENV})")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="loss history CSV (default <out>.history.csv)")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("summarize", help="summaries for a dataset from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help=f"dataset dir/manifest (default ${DATA_DIR_ENV})")
    p.add_argument("--video", help="restrict to one video id")
    p.add_argument("--budget-ratio", type=float, default=0.15)
    p.add_argument("--out", default="summary.csv", help="per-frame CSV")
    p.set_defaults(fn=cmd_summarize)

    p = sub.add_parser("evaluate", help="cross-validation protocol run")
    p.add_argument("--data", help=f"dataset dir/manifest (default ${DATA_DIR_ENV})")
    p.add_argument("--mode", choices=PROTOCOL_MODES, default="canonical")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--agg", choices=AGGREGATION_MODES,
                   help="F aggregation (default: manifest setting)")
    p.add_argument("--target-corpus", help="corpus under test (multi-corpus datasets)")
    p.add_argument("--split-seed", type=int, help="fold split seed (default: --seed)")
    p.add_argument("--splits", help="split JSON to reuse, or to create if absent")
    p.add_argument("--budget-ratio", type=float, default=0.15)
    p.add_argument("--baseline", choices=("none", "random", "human"), default="none")
    p.add_argument("--report", help="write the text report here")
    p.add_argument("--csv", help="write the per-video CSV here")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="grid runs over one design axis")
    p.add_argument("--data", help=f"dataset dir/manifest (default ${DATA_DIR_ENV})")
    p.add_argument("--axis", choices=_ABLATION_AXES, required=True)
    p.add_argument("--repeats", type=int, default=1, help="seeded repetitions per value")
    p.add_argument("--folds", type=int, default=1,
                   help="folds per run (1 = train==test smoke)")
    p.add_argument("--agg", choices=AGGREGATION_MODES)
    p.add_argument("--budget-ratio", type=float, default=0.15)
    p.add_argument("--out", help="result CSV")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("partition-map", help="similarity winner grid as CSV")
    p.add_argument("--sim", choices=SIMILARITY_KINDS, default="l2")
    p.add_argument("--points", help="'x,y;x,y;...' (default: random)")
    p.add_argument("--num-points", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_partition_map)

    p = sub.add_parser("check", help="run the built-in oracle self-tests")
    p.set_defaults(fn=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ContractError, DataFormatError, NumericError,
            ShapeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
