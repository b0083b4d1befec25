"""Assignment MDP rollouts and REINFORCE fine-tuning of the assignment network."""

from __future__ import annotations

import copy
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import RLConfig
from .core import SegTensor, VideoSample, project_to_labelmap
from .errors import EmptyInputError, NumericalError, TrainingDataError
from .metrics import evaluate_video
from .models import AssignmentNet, SelectionNet, Step, assign_frame, batched_step_log_probs
from .pipeline import evaluate, segment_model, selected
from .synthdata import mirror_proposal, mirror_video

log = logging.getLogger(__name__)


def compute_returns(frame_rewards: Sequence[float], gamma: float) -> Tuple[float, List[float]]:
    """Discounted video return and the per-frame returns-to-go."""
    rewards = [float(r) for r in frame_rewards]
    if not rewards:
        raise EmptyInputError("no rewards")
    returns = [0.0] * len(rewards)
    g = 0.0
    for t in reversed(range(len(rewards))):
        g = rewards[t] + gamma * g
        returns[t] = g
    return returns[0], returns


@dataclass
class Trajectory:
    # (frame index, step) pairs; Step carries proposal index, action and log-prob
    steps: List[Tuple[int, Step]]
    frame_rewards: List[float]
    video_return: float
    returns: List[float]
    labelmaps: List[np.ndarray] = field(default_factory=list)
    key: Tuple = ()
    # per-frame baseline computed outside the sampled episode (greedy mode)
    baseline_returns: Optional[List[float]] = None

    def step_returns(self) -> List[float]:
        return [self.returns[t] for t, _ in self.steps]


def frame_rewards(labelmaps, video: VideoSample, k_max: int) -> List[float]:
    """Per-frame mean J&F under one whole-video slot matching."""
    scores = evaluate_video(labelmaps, video.gt, n_gt=video.num_instances, k_max=k_max)
    return scores.jf


def rollout(asg: AssignmentNet, video: VideoSample, cfg: RLConfig, rng: np.random.Generator,
            chosen: Optional[List[list]] = None, sel: Optional[SelectionNet] = None,
            mode: str = "sample", key: Optional[Tuple] = None) -> Trajectory:
    """Sample one episode over ``video``.

    ``chosen`` holds the selected proposals per frame; it is computed with the
    (frozen) selection net when not supplied.
    """
    if video.gt is None:
        raise TrainingDataError(f"{video.name}: rollout needs ground truth")
    if chosen is None:
        if sel is None:
            raise ValueError("need either chosen proposals or a selection net")
        chosen = selected(video, sel)
    k_max = asg.cfg.k_max
    prev = SegTensor.empty(*video.shape, k_max)
    steps, maps = [], []
    for t, (frame, props) in enumerate(zip(video.frames, chosen)):
        fa = assign_frame(asg, frame, props, prev, mode=mode, rng=rng,
                          temperature=cfg.sample_temperature, keep_inputs=True)
        steps.extend((t, s) for s in fa.steps)
        prev = fa.seg
        maps.append(project_to_labelmap(prev))
    rewards = frame_rewards(maps, video, k_max)
    ret, returns = compute_returns(rewards, cfg.gamma)
    return Trajectory(steps, rewards, ret, returns, maps, key or (video.name, 0))


def greedy_returns(asg: AssignmentNet, video: VideoSample, chosen, cfg: RLConfig) -> List[float]:
    """Returns-to-go of the argmax policy on the same episode."""
    k_max = asg.cfg.k_max
    prev = SegTensor.empty(*video.shape, k_max)
    maps = []
    for frame, props in zip(video.frames, chosen):
        prev = assign_frame(asg, frame, props, prev).seg
        maps.append(project_to_labelmap(prev))
    return compute_returns(frame_rewards(maps, video, k_max), cfg.gamma)[1]


def clip_video(video: VideoSample, chosen, start: int, length: int):
    end = start + length
    v = VideoSample(video.frames[start:end], video.proposals[start:end],
                    video.gt[start:end] if video.gt is not None else None,
                    video.name, num_instances=video.num_instances)
    return v, chosen[start:end]


class ReturnBaseline:
    """Exponential moving average of the return-to-go.

    One average per (episode key, frame index); the key is the video index,
    clip start and mirroring, so easy and hard videos are not compared against each other.
    """

    def __init__(self, decay: float = 0.9):
        self.decay = decay
        self.values: Dict[Tuple, np.ndarray] = {}

    def __call__(self, key, t: int) -> Optional[float]:
        v = self.values.get(key)
        return float(v[t]) if v is not None and t < len(v) else None

    def known(self, key) -> bool:
        return key in self.values

    def update(self, batch: Sequence["Trajectory"]):
        groups: Dict[Tuple, List[List[float]]] = {}
        for tr in batch:
            groups.setdefault(tr.key, []).append(tr.returns)
        for key, rets in groups.items():
            m = np.mean(np.asarray(rets, dtype=float), axis=0)
            if key in self.values and len(self.values[key]) == len(m):
                self.values[key] = self.decay * self.values[key] + (1 - self.decay) * m
            else:
                self.values[key] = m

    def mean(self) -> float:
        if not self.values:
            return 0.0
        return float(np.mean([v[0] for v in self.values.values()]))


def reinforce_terms(log_probs: torch.Tensor, returns, baselines=None) -> torch.Tensor:
    """Per-decision surrogate terms log pi(a|s) * (G - b).

    ``returns`` and ``baselines`` are constants with respect to the policy, so
    the gradient of the sum is the score-function estimate for these samples.
    """
    g = torch.as_tensor(np.asarray(returns, dtype=np.float64), dtype=log_probs.dtype)
    if baselines is not None:
        g = g - torch.as_tensor(np.asarray(baselines, dtype=np.float64), dtype=log_probs.dtype)
    return log_probs * g


def policy_loss(asg: AssignmentNet, batch: Sequence[Trajectory], cfg: RLConfig,
                baseline: Optional[ReturnBaseline] = None) -> torch.Tensor:
    """Negated mean over steps of the surrogate terms; its gradient is minus
    the REINFORCE estimate."""
    steps, rets, base = [], [], []
    for tr in batch:
        for t, s in tr.steps:
            steps.append(s)
            if tr.baseline_returns is not None:
                b = tr.baseline_returns[t]
            else:
                b = baseline(tr.key, t) if baseline is not None else None
            rets.append(tr.returns[t])
            base.append(b or 0.0)
    n = len(steps)
    # zero-advantage steps contribute exactly nothing; skip their forward pass
    keep = [i for i in range(n) if rets[i] != base[i]]
    if not keep:
        return torch.zeros((), requires_grad=True)
    logp = batched_step_log_probs(asg, [steps[i] for i in keep], cfg.sample_temperature)
    terms = reinforce_terms(logp, [rets[i] for i in keep], [base[i] for i in keep])
    return -terms.sum() / n


def grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return total ** 0.5


def reinforce_step(asg: AssignmentNet, optimizer: torch.optim.Optimizer,
                   batch: Sequence[Trajectory], cfg: RLConfig,
                   baseline: Optional[ReturnBaseline] = None) -> Dict[str, float]:
    if not batch:
        raise EmptyInputError("empty trajectory batch")
    use_b = baseline if cfg.baseline and cfg.baseline_mode == "ema" else None
    if not cfg.baseline:
        for tr in batch:
            tr.baseline_returns = None
    if use_b is not None:
        fresh = [tr for tr in batch if not use_b.known(tr.key)]
        if fresh:
            # first visit of an episode: initialise rather than compare against zero
            use_b.update(fresh)
    asg.train()
    optimizer.zero_grad()
    loss = policy_loss(asg, batch, cfg, use_b)
    loss.backward()
    gn = grad_norm(asg.parameters())
    if not np.isfinite(gn) or not torch.isfinite(loss):
        raise NumericalError("non-finite policy gradient",
                             {"loss": float(loss), "grad_norm": gn,
                              "returns": [tr.video_return for tr in batch]})
    optimizer.step()
    asg.eval()
    if use_b is not None:
        use_b.update(batch)
    if use_b is not None:
        b_mean = use_b.mean()
    else:
        greedy = [tr.baseline_returns[0] for tr in batch if tr.baseline_returns]
        b_mean = float(np.mean(greedy)) if greedy else 0.0
    return {"mean_return": float(np.mean([tr.video_return for tr in batch])),
            "baseline": b_mean,
            "grad_norm": gn, "loss": float(loss.detach())}


def make_optimizer(asg: AssignmentNet, cfg: RLConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(asg.parameters(), lr=cfg.lr)
    return torch.optim.Adam(asg.parameters(), lr=cfg.lr)


@dataclass
class RLResult:
    net: AssignmentNet
    curve: List[Dict[str, float]]
    best_iter: int
    best_val: float


def train_rl(sel: SelectionNet, asg: AssignmentNet, train: Sequence[VideoSample],
             val: Sequence[VideoSample], cfg: RLConfig, log_path=None,
             curve_csv=None) -> RLResult:
    """Fine-tune a copy of ``asg``; returns the best-on-validation network.

    Iteration 0 (the supervised network) is a candidate, so the result never
    scores below the starting point on the validation split. Without a
    validation split the final parameters are returned.
    """
    if not train:
        raise EmptyInputError("empty training set")
    asg = copy.deepcopy(asg)
    asg.eval()
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = make_optimizer(asg, cfg)
    baseline = ReturnBaseline(cfg.baseline_decay)
    chosen_train = [selected(v, sel) for v in train]
    chosen_val = [selected(v, sel) for v in val]

    def val_score():
        if not val:
            return float("nan")
        segs = [segment_model(v, sel, asg, c) for v, c in zip(val, chosen_val)]
        return evaluate(val, segs, asg.cfg.k_max).jf_mean

    best = val_score()
    best_state = copy.deepcopy(asg.state_dict())
    best_iter = 0
    curve = []
    start = time.time()
    log_file = open(log_path, "a") if log_path else None
    try:
        for it in range(1, cfg.iters + 1):
            batch = []
            for _ in range(cfg.batch):
                i = int(rng.integers(len(train)))
                v, c = train[i], chosen_train[i]
                s0 = 0
                if cfg.max_frames and len(v) > cfg.max_frames:
                    s0 = int(rng.integers(len(v) - cfg.max_frames + 1))
                    v, c = clip_video(v, c, s0, cfg.max_frames)
                hf = vf = False
                if cfg.flip:
                    hf, vf = (bool(b) for b in rng.integers(2, size=2))
                    v = mirror_video(v, hf, vf)
                    c = [[mirror_proposal(p, hf, vf) for p in props] for props in c]
                tr = rollout(asg, v, cfg, rng, chosen=c, key=(i, s0, hf, vf))
                if cfg.baseline and cfg.baseline_mode == "greedy":
                    tr.baseline_returns = greedy_returns(asg, v, c, cfg)
                batch.append(tr)
            diag = reinforce_step(asg, opt, batch, cfg, baseline)
            rec = {"iter": it, "mean_return": diag["mean_return"], "val_jf": None,
                   "grad_norm": diag["grad_norm"], "baseline": diag["baseline"],
                   "wallclock": time.time() - start}
            if cfg.eval_every and (it % cfg.eval_every == 0 or it == cfg.iters):
                score = val_score()
                rec["val_jf"] = score
                if score > best:
                    best, best_iter = score, it
                    best_state = copy.deepcopy(asg.state_dict())
                log.info("rl iter %d return %.3f val %.4f", it, diag["mean_return"], score)
            curve.append(rec)
            if log_file:
                log_file.write(json.dumps(rec) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    if val:
        asg.load_state_dict(best_state)
    else:
        best_iter = cfg.iters
    if curve_csv:
        write_curve_csv(curve, curve_csv)
    return RLResult(asg, curve, best_iter, best)


def write_curve_csv(curve, path):
    cols = ["iter", "mean_return", "val_jf", "grad_norm", "baseline", "wallclock"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for rec in curve:
            w.writerow({c: ("" if rec.get(c) is None else rec[c]) for c in cols})
