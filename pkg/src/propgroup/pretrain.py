"""Supervised warm-up of both networks on greedy-oracle targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .config import PretrainConfig
from .core import SegTensor, VideoSample
from .errors import EmptyInputError, NumericalError
from .models import (AssignmentNet, FrameContext, SelectionNet, assignment_input,
                     candidate_slots, feature_tensor, selection_input)
from .oracle import SKIP, OracleResult, oracle_segmentation
from .synthdata import HU7_INDEX

log = logging.getLogger(__name__)

FLOW_U = 3


@dataclass
class SelectionSamples:
    x: torch.Tensor
    feat: torch.Tensor
    y: torch.Tensor

    def __len__(self):
        return len(self.y)


@dataclass
class AssignmentSamples:
    """Flattened candidate rows; ``group`` maps each row to its sample."""

    x: torch.Tensor
    feat: torch.Tensor
    group: torch.Tensor
    sizes: torch.Tensor
    target: torch.Tensor
    offsets: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.offsets = torch.cat([torch.zeros(1, dtype=torch.long), torch.cumsum(self.sizes, 0)])

    def __len__(self):
        return len(self.target)


def selection_samples(videos: Sequence[VideoSample], oracles: Sequence[OracleResult],
                      cfg) -> SelectionSamples:
    xs, feats, ys = [], [], []
    for v, orc in zip(videos, oracles):
        for frame, props, labels in zip(v.frames, v.proposals, orc.selected):
            for p, y in zip(props, labels):
                xs.append(selection_input(frame, p, cfg))
                feats.append(torch.from_numpy(np.asarray(p.feature, dtype=np.float32)))
                ys.append(float(y))
    if not xs:
        raise EmptyInputError("no proposals to train the selection network on")
    return SelectionSamples(torch.stack(xs), torch.stack(feats), torch.tensor(ys))


def assignment_samples(videos: Sequence[VideoSample], oracles: Sequence[OracleResult],
                       cfg) -> AssignmentSamples:
    """Teacher-forced states: history comes from the oracle's own commits.

    Proposals the oracle skips have no slot target and are left out; targets
    that are not candidates under the empty-slot rule are dropped too.
    """
    xs, feats, sizes, targets = [], [], [], []
    for v, orc in zip(videos, oracles):
        h, w = v.shape
        prev = SegTensor.empty(h, w, cfg.k_max)
        for frame, props, slots in zip(v.frames, v.proposals, orc.slots):
            ctx = FrameContext(frame, cfg)
            partial = SegTensor.empty(h, w, cfg.k_max)
            for p, k in zip(props, slots):
                if k == SKIP:
                    continue
                cands = candidate_slots(prev, partial)
                if k in cands:
                    xs.append(assignment_input(ctx, p, prev, partial, cands).half())
                    feats.append(torch.from_numpy(np.asarray(p.feature, dtype=np.float32)))
                    sizes.append(len(cands))
                    targets.append(cands.index(k))
                partial = partial.commit(p.mask, k)
            prev = partial
    if not xs:
        raise EmptyInputError("no assignment targets")
    sizes_t = torch.tensor(sizes)
    return AssignmentSamples(torch.cat(xs), torch.stack(feats),
                             torch.repeat_interleave(torch.arange(len(sizes)), sizes_t),
                             sizes_t, torch.tensor(targets))


def _flip(x, feat, which):
    """Horizontal flip of the chosen rows: mirror pixels, negate u and the
    reflection-odd shape moment."""
    if not which.any():
        return x, feat
    x = x.clone()
    feat = feat.clone()
    x[which] = x[which].flip(-1)
    x[which, FLOW_U] = -x[which, FLOW_U]
    feat[which, HU7_INDEX] = -feat[which, HU7_INDEX]
    return x, feat


def grouped_log_softmax(logits, sizes):
    n = len(sizes)
    padded = torch.full((n, int(sizes.max())), float("-inf"))
    rows = torch.repeat_interleave(torch.arange(n), sizes)
    cols = torch.cat([torch.arange(int(s)) for s in sizes])
    padded = padded.index_put((rows, cols), logits)
    return torch.log_softmax(padded, dim=1)


def _check(loss, what):
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite {what} loss", {"loss": float(loss)})


def train_selection(net: SelectionNet, data: SelectionSamples, cfg: PretrainConfig,
                    epochs: Optional[int] = None) -> List[float]:
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    curve = []
    net.train()
    for epoch in range(epochs if epochs is not None else cfg.epochs):
        order = torch.randperm(len(data), generator=gen)
        total = 0.0
        for s in range(0, len(data), cfg.batch):
            idx = order[s:s + cfg.batch]
            x, feat = data.x[idx], data.feat[idx]
            if cfg.flip:
                x, feat = _flip(x, feat, torch.rand(len(idx), generator=gen) < 0.5)
            loss = F.binary_cross_entropy_with_logits(net(x, feat), data.y[idx])
            _check(loss, "selection")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        curve.append(total / len(data))
        log.info("selection epoch %d loss %.4f", epoch + 1, curve[-1])
    net.eval()
    return curve


def train_assignment(net: AssignmentNet, data: AssignmentSamples, cfg: PretrainConfig,
                     epochs: Optional[int] = None) -> List[float]:
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    curve = []
    net.train()
    for epoch in range(epochs if epochs is not None else cfg.epochs):
        order = torch.randperm(len(data), generator=gen)
        total = 0.0
        for s in range(0, len(data), cfg.batch):
            idx = order[s:s + cfg.batch]
            rows = torch.cat([torch.arange(int(data.offsets[i]), int(data.offsets[i + 1]))
                              for i in idx])
            sizes = data.sizes[idx]
            x, feat = data.x[rows].float(), data.feat[idx].repeat_interleave(sizes, dim=0)
            if cfg.flip:
                which = (torch.rand(len(idx), generator=gen) < 0.5).repeat_interleave(sizes)
                x, feat = _flip(x, feat, which)
            logp = grouped_log_softmax(net(x, feat), sizes)
            loss = F.nll_loss(logp, data.target[idx])
            _check(loss, "assignment")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        curve.append(total / len(data))
        log.info("assignment epoch %d loss %.4f", epoch + 1, curve[-1])
    net.eval()
    return curve


def selection_accuracy(net: SelectionNet, data: SelectionSamples) -> float:
    with torch.no_grad():
        pred = torch.cat([net(data.x[s:s + 256], data.feat[s:s + 256])
                          for s in range(0, len(data), 256)]) > 0
    return float((pred.float() == data.y).float().mean())


def assignment_accuracy(net: AssignmentNet, data: AssignmentSamples) -> float:
    correct = 0
    with torch.no_grad():
        for s in range(0, len(data), 256):
            idx = torch.arange(s, min(s + 256, len(data)))
            rows = slice(int(data.offsets[idx[0]]), int(data.offsets[idx[-1] + 1]))
            sizes = data.sizes[idx]
            logp = grouped_log_softmax(
                net(data.x[rows].float(), data.feat[idx].repeat_interleave(sizes, dim=0)), sizes)
            correct += int((logp.argmax(1) == data.target[idx]).sum())
    return correct / len(data)


@dataclass
class PretrainResult:
    selection_curve: List[float]
    assignment_curve: List[float]


def pretrain(select_net: Optional[SelectionNet], assign_net: Optional[AssignmentNet],
             videos: Sequence[VideoSample], cfg: PretrainConfig,
             oracles: Optional[Sequence[OracleResult]] = None) -> PretrainResult:
    """Log-loss for selection, cross-entropy for assignment. Nets are updated in place;
    pass ``None`` to skip one of them."""
    if not videos:
        raise EmptyInputError("empty training set")
    net = assign_net if assign_net is not None else select_net
    k_max = net.cfg.k_max
    if oracles is None:
        oracles = [oracle_segmentation(v, k_max, evaluate=False) for v in videos]
    sel_curve, asg_curve = [], []
    if select_net is not None:
        sel_curve = train_selection(select_net, selection_samples(videos, oracles, select_net.cfg), cfg)
    if assign_net is not None:
        asg_curve = train_assignment(assign_net, assignment_samples(videos, oracles, assign_net.cfg), cfg)
    return PretrainResult(sel_curve, asg_curve)
