"""The ablation ladder on the synthetic benchmark: raw proposals, S, S+A,
S+A+T, S+A+T+RL and the greedy oracle, evaluated on one test split."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .checkpoint import save_checkpoint
from .config import RunConfig
from .core import VideoSample
from .metrics import Report, format_csv, format_table
from .models import build_nets
from .oracle import oracle_segmentation
from .pipeline import evaluate, segment_model, segment_raw, segment_selected, selected
from .pretrain import (assignment_accuracy, assignment_samples, selection_accuracy,
                       selection_samples, train_assignment, train_selection)
from .rl import RLResult, train_rl
from .synthdata import generate_split

log = logging.getLogger(__name__)

ROWS = ("Raw proposals", "S", "S+A", "S+A+T", "S+A+T+RL", "Oracle")
# spacing between the data seeds of successive runs
SEED_STRIDE = 10007


def build_splits(cfg: RunConfig, seed: int = 0,
                 names: Sequence[str] = ("train", "val", "test")) -> Dict[str, List[VideoSample]]:
    out = {}
    for name in names:
        s = cfg.splits[name]
        out[name] = generate_split(
            s.videos, s.seed + SEED_STRIDE * seed, s.noise, cfg.model.feature_dim,
            prefix=f"{name}", **s.scene_kwargs())
    return out


@dataclass
class LadderResult:
    seed: int
    reports: Dict[str, Report]
    selection_accuracy: float = float("nan")
    assignment_accuracy: float = float("nan")
    rl: Optional[RLResult] = None
    timings: Dict[str, float] = field(default_factory=dict)

    def rows(self):
        return [(name, self.reports[name].row()) for name in ROWS if name in self.reports]

    def jf(self) -> Dict[str, float]:
        return {name: r.jf_mean for name, r in self.reports.items()}

    def table(self) -> str:
        return format_table(self.rows())

    def csv(self) -> str:
        return format_csv(self.rows())


def run_ladder(cfg: RunConfig, seed: int = 0, out_dir=None,
               splits: Optional[Dict[str, List[VideoSample]]] = None,
               with_rl: bool = True) -> LadderResult:
    """Train every rung from scratch for one seed and evaluate on the test split."""
    clock = time.time()
    timings = {}

    def lap(name):
        nonlocal clock
        now = time.time()
        timings[name] = now - clock
        clock = now
        log.info("ladder seed %d: %s done in %.1fs", seed, name, timings[name])

    splits = splits or build_splits(cfg, seed)
    train, val, test = splits["train"], splits["val"], splits["test"]
    k_max = cfg.model.k_max
    lap("data")

    oracles = [oracle_segmentation(v, k_max, evaluate=False) for v in train]
    test_oracles = [oracle_segmentation(v, k_max, evaluate=False) for v in test]
    lap("oracle")

    pcfg = dataclasses.replace(cfg.pretrain, seed=cfg.pretrain.seed + seed)
    sel, asg = build_nets(cfg.model, seed=seed, temporal=True)
    _, asg_static = build_nets(cfg.model, seed=seed, temporal=False)
    train_selection(sel, selection_samples(train, oracles, cfg.model), pcfg)
    sel_acc = selection_accuracy(sel, selection_samples(test, test_oracles, cfg.model))
    lap("pretrain selection")
    asg_train = assignment_samples(train, oracles, cfg.model)
    train_assignment(asg, asg_train, pcfg)
    asg_acc = assignment_accuracy(asg, assignment_samples(test, test_oracles, cfg.model))
    lap("pretrain assignment")
    train_assignment(asg_static, asg_train, pcfg)
    lap("pretrain static assignment")

    chosen = [selected(v, sel) for v in test]
    reports = {
        "Raw proposals": evaluate(test, [segment_raw(v, k_max) for v in test], k_max),
        "S": evaluate(test, [segment_selected(v, sel, k_max) for v in test], k_max),
        "S+A": evaluate(test, [segment_model(v, sel, asg_static, c)
                               for v, c in zip(test, chosen)], k_max),
        "S+A+T": evaluate(test, [segment_model(v, sel, asg, c)
                                 for v, c in zip(test, chosen)], k_max),
        "Oracle": evaluate(test, [o.labelmaps for o in test_oracles], k_max),
    }
    lap("evaluate supervised")

    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "supervised.ckpt", sel, asg, init_seed=seed, train_seed=pcfg.seed)
    rl_result = None
    if with_rl:
        rcfg = dataclasses.replace(cfg.rl, seed=cfg.rl.seed + seed)
        rl_result = train_rl(sel, asg, train, val, rcfg,
                             log_path=out / "rl_log.jsonl" if out else None,
                             curve_csv=out / "rl_curve.csv" if out else None)
        reports["S+A+T+RL"] = evaluate(test, [segment_model(v, sel, rl_result.net, c)
                                              for v, c in zip(test, chosen)], k_max)
        if out:
            save_checkpoint(out / "rl.ckpt", sel, rl_result.net, init_seed=seed,
                            train_seed=rcfg.seed)
        lap("reinforce")

    result = LadderResult(seed, reports, sel_acc, asg_acc, rl_result, timings)
    if out:
        (out / "ladder.txt").write_text(result.table() + "\n")
        (out / "ladder.csv").write_text(result.csv())
        per_seq = []
        for name, rep in reports.items():
            per_seq += [(f"{name}/{s}", row) for s, row in rep.per_sequence_rows()]
        (out / "per_sequence.csv").write_text(format_csv(per_seq, label="Method/Sequence"))
    return result
