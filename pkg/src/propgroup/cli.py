"""Command-line entry point: ``propgroup <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, load_config, to_dict
from .errors import (AlignmentError, ConfigError, ConfigurationError, DatasetLayoutError,
                     InputError, NumericalError)

log = logging.getLogger("propgroup")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.device:
        cfg.device = args.device
    if cfg.device != "cpu":
        try:
            dev = torch.device(cfg.device)
        except RuntimeError as exc:
            raise ConfigurationError(f"bad device {cfg.device!r}: {exc}") from exc
        if dev.type == "cuda" and not torch.cuda.is_available():
            raise ConfigurationError(f"device {cfg.device} is not available")
        raise ConfigurationError("only the cpu device is supported")
    if args.max_frames:
        cfg.rl = dataclasses.replace(cfg.rl, max_frames=args.max_frames)
    return cfg


def _seed_all(seed: int):
    np.random.seed(seed)
    torch.manual_seed(seed)


def _out(args, default: str) -> Path:
    p = Path(args.out or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(args, cfg, root, with_gt=True):
    from .dataio import load_dataset

    return load_dataset(root, with_gt=with_gt, feature_dim=cfg.model.feature_dim,
                        max_frames=args.max_frames)


# ---------------------------------------------------------------- subcommands

def cmd_generate_data(args, cfg):
    from .dataio import write_sequence
    from .ladder import build_splits

    out = _out(args, "data")
    names = list(cfg.splits) if args.split == "all" else [args.split]
    for name in names:
        if name not in cfg.splits:
            raise ConfigurationError(f"no split named {name!r}")
    for name, videos in build_splits(cfg, args.seed, names).items():
        for v in videos:
            if args.max_frames:
                v = dataclasses.replace(v, frames=v.frames[:args.max_frames],
                                        proposals=v.proposals[:args.max_frames],
                                        gt=v.gt[:args.max_frames])
            write_sequence(out / name, v)
        print(f"{name}: {len(videos)} sequences -> {out / name}")


def cmd_make_oracle(args, cfg):
    from .dataio import write_labelmaps
    from .oracle import oracle_segmentation, save_oracle_cache

    out = _out(args, "oracle")
    for v in _load(args, cfg, args.data):
        res = oracle_segmentation(v, cfg.model.k_max, evaluate=False)
        save_oracle_cache(res, out / f"{v.name}.json", v.name)
        write_labelmaps(out / "labels", v.name, res.labelmaps)
    print(f"oracle labels -> {out}")


def cmd_pretrain(args, cfg):
    from .checkpoint import save_checkpoint
    from .models import build_nets
    from .pretrain import pretrain

    out = _out(args, "runs/pretrain")
    videos = _load(args, cfg, args.data)
    pcfg = dataclasses.replace(cfg.pretrain, seed=args.seed)
    sel, asg = build_nets(cfg.model, seed=args.seed, temporal=not args.static)
    res = pretrain(sel, asg, videos, pcfg)
    path = out / "supervised.ckpt"
    save_checkpoint(path, sel, asg, init_seed=args.seed, train_seed=args.seed)
    (out / "pretrain_curve.json").write_text(json.dumps(dataclasses.asdict(res)))
    print(f"checkpoint -> {path}")


def cmd_train_rl(args, cfg):
    from .checkpoint import load_checkpoint, save_checkpoint
    from .rl import train_rl

    out = _out(args, "runs/rl")
    sel, asg, _ = load_checkpoint(args.checkpoint, expected=cfg.model)
    train = _load(args, cfg, args.data)
    val = _load(args, cfg, args.val) if args.val else []
    rcfg = dataclasses.replace(cfg.rl, seed=args.seed)
    if args.iters is not None:
        rcfg = dataclasses.replace(rcfg, iters=args.iters)
    res = train_rl(sel, asg, train, val, rcfg, log_path=out / "rl_log.jsonl",
                   curve_csv=out / "rl_curve.csv")
    save_checkpoint(out / "rl.ckpt", sel, res.net, init_seed=args.seed, train_seed=args.seed)
    print(f"best iteration {res.best_iter} (val J&F {100 * res.best_val:.1f}) -> {out / 'rl.ckpt'}")


def infer_video(sel, asg, video, out_dir):
    from .dataio import write_labelmaps
    from .pipeline import segment_model

    maps = segment_model(video, sel, asg)
    write_labelmaps(out_dir, video.name, maps)
    return maps


def cmd_infer(args, cfg):
    from .checkpoint import load_checkpoint

    out = _out(args, "runs/pred")
    sel, asg, _ = load_checkpoint(args.checkpoint, expected=cfg.model if args.config else None)
    videos = _load(args, cfg, args.data, with_gt=False)
    for v in videos:
        if not any(v.proposals):
            log.warning("%s: no proposals above the score floor", v.name)
        infer_video(sel, asg, v, out)
    print(f"{len(videos)} sequences -> {out}")


def _gt_root(path: Path) -> Path:
    return path / "Annotations" if (path / "Annotations").is_dir() else path


def cmd_evaluate(args, cfg):
    from .dataio import read_labelmaps
    from .metrics import Report, evaluate_video, format_csv, format_table

    pred_root, gt_root = Path(args.pred), _gt_root(Path(args.gt))
    for d in (pred_root, gt_root):
        if not d.is_dir():
            raise DatasetLayoutError(f"missing directory {d}")
    pred_names = sorted(p.name for p in pred_root.iterdir() if p.is_dir())
    gt_names = sorted(p.name for p in gt_root.iterdir() if p.is_dir())
    if pred_names != gt_names:
        raise AlignmentError(f"prediction sequences {pred_names} do not match gt {gt_names}")
    report = Report()
    for name in gt_names:
        pred, gt = read_labelmaps(pred_root / name), read_labelmaps(gt_root / name)
        if args.max_frames:
            pred, gt = pred[:args.max_frames], gt[:args.max_frames]
        if len(pred) != len(gt):
            raise AlignmentError(f"{name}: {len(pred)} predicted frames, {len(gt)} gt frames")
        n_gt = int(max(g.max() for g in gt))
        report.sequences.append(evaluate_video(pred, gt, n_gt=n_gt, name=name))
    rows = report.per_sequence_rows() + [(args.label, report.row())]
    print(format_table(rows))
    if args.out:
        out = _out(args, "")
        (out / "report.csv").write_text(format_csv(rows))
        (out / "report.txt").write_text(format_table(rows) + "\n")


def cmd_render_overlay(args, cfg):
    from .dataio import load_sequence, read_labelmaps, sequence_names
    from .viz import render_overlay

    out = _out(args, "runs/overlay")
    names = [args.sequence] if args.sequence else sequence_names(args.data)
    for name in names:
        video = load_sequence(args.data, name, with_gt=(Path(args.data) / "Annotations").is_dir(),
                              feature_dim=cfg.model.feature_dim, max_frames=args.max_frames)
        maps = read_labelmaps(Path(args.pred) / name)[:len(video)]
        render_overlay(video, maps, out)
    print(f"overlays -> {out}")


def cmd_ablate(args, cfg):
    from .ladder import run_ladder
    from .metrics import format_csv, format_table

    out = _out(args, "runs/ablate")
    results = []
    for seed in range(args.seed, args.seed + args.seeds):
        res = run_ladder(cfg, seed=seed, out_dir=out / f"seed{seed}", with_rl=not args.no_rl)
        print(f"seed {seed}\n{res.table()}\n")
        results.append(res)
    names = [n for n, _ in results[0].rows()]
    mean_rows = []
    for n in names:
        rows = [dict(r.rows())[n] for r in results]
        mean_rows.append((n, {c: float(np.mean([row[c] for row in rows])) for c in rows[0]}))
    print(f"mean over {len(results)} seed(s)\n{format_table(mean_rows)}")
    (out / "ablation.csv").write_text(format_csv(mean_rows))
    (out / "ablation.txt").write_text(format_table(mean_rows) + "\n")
    (out / "config.json").write_text(json.dumps(to_dict(cfg), indent=2))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file or bundled preset name (desk, full, smoke)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--device", default=None, help="torch device name (cpu only)")
    common.add_argument("--max-frames", type=int, default=None,
                        help="truncate every sequence to this many frames")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="propgroup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", parents=[common], help="write a synthetic benchmark")
    p.add_argument("--split", default="all", help="train, val, test or all")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("make-oracle", parents=[common], help="greedy-oracle labels and caches")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_make_oracle)

    p = sub.add_parser("pretrain", parents=[common], help="supervised training of both nets")
    p.add_argument("--data", required=True)
    p.add_argument("--static", action="store_true",
                   help="assignment net without the previous-frame channel")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-rl", parents=[common], help="policy-gradient fine-tuning")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("infer", parents=[common], help="segment sequences into label maps")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="J&F report for predicted label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True, help="dataset root or directory of annotation sequences")
    p.add_argument("--label", default="All")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render-overlay", parents=[common], help="side-by-side overlay panels")
    p.add_argument("--data", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--sequence", default=None)
    p.set_defaults(func=cmd_render_overlay)

    p = sub.add_parser("ablate", parents=[common], help="run the full ablation ladder")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--no-rl", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        _seed_all(args.seed)
        args.func(args, cfg)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
