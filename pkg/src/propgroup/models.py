"""Selection network, Siamese assignment network, and sequential per-frame labeling.

A frame's joint assignment is factorised over proposals in confidence order:
each proposal gets a softmax over candidate slots, conditioned on the previous
frame's segmentation and on the slots filled so far in the current frame.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .core import BBox, Frame, Proposal, SegTensor
from .errors import ConfigurationError, InvalidProposalError

SELECT_CHANNELS = 7
ASSIGN_CHANNELS = 8
PREV_CHANNEL = 6
POOL_AFTER = (1, 3, 5, 7)


class Encoder(nn.Module):
    def __init__(self, in_channels: int, widths: Sequence[int]):
        super().__init__()
        layers = []
        c = in_channels
        for i, w in enumerate(widths):
            layers += [nn.Conv2d(c, w, 3, padding=1), nn.ReLU(inplace=True)]
            if i in POOL_AFTER:
                layers.append(nn.MaxPool2d(2))
            c = w
        self.body = nn.Sequential(*layers)
        self.out_dim = c

    def forward(self, x):
        return self.body(x).mean(dim=(2, 3))


def _mlp(in_dim: int, hidden: Sequence[int]) -> nn.Sequential:
    layers = []
    for h in hidden:
        layers += [nn.Linear(in_dim, h), nn.ReLU(inplace=True)]
        in_dim = h
    layers.append(nn.Linear(in_dim, 1))
    return nn.Sequential(*layers)


class SelectionNet(nn.Module):
    """Moving vs. static classifier over a cropped (RGB, flow, mask) stack."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(SELECT_CHANNELS, cfg.widths)
        self.head = _mlp(self.encoder.out_dim + cfg.feature_dim, cfg.head)

    def forward(self, x, feat):
        return self.head(torch.cat([self.encoder(x), feat], dim=1)).squeeze(1)


class AssignmentNet(nn.Module):
    """Scores one (proposal, slot) pair per row; shared across slots."""

    def __init__(self, cfg: ModelConfig, temporal: bool = True):
        super().__init__()
        self.cfg = cfg
        self.temporal = temporal
        self.encoder = Encoder(ASSIGN_CHANNELS, cfg.widths)
        self.head = _mlp(self.encoder.out_dim + cfg.feature_dim, cfg.head)

    def forward(self, x, feat):
        if not self.temporal:
            x = x.clone()
            x[:, PREV_CHANNEL] = 0
        return self.head(torch.cat([self.encoder(x), feat], dim=1)).squeeze(1)


@contextlib.contextmanager
def _seeded(seed: int):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def build_nets(cfg: ModelConfig, seed: int = 0, temporal: bool = True):
    with _seeded(seed):
        sel = SelectionNet(cfg)
        asg = AssignmentNet(cfg, temporal=temporal)
    return sel, asg


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


# ---------------------------------------------------------------- inputs

def _resize(x: torch.Tensor, size: int) -> torch.Tensor:
    """(N, C, h, w) -> (N, C, size, size); area pooling down, bilinear up."""
    h, w = x.shape[-2:]
    if h == size and w == size:
        return x
    if h >= size and w >= size:
        return F.interpolate(x, size=(size, size), mode="area")
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)


def _frame_channels(frame: Frame, cfg: ModelConfig) -> torch.Tensor:
    img = torch.from_numpy(np.ascontiguousarray(frame.image, dtype=np.float32)).permute(2, 0, 1) - 0.5
    flow = torch.from_numpy(np.ascontiguousarray(frame.flow, dtype=np.float32)).permute(2, 0, 1) / cfg.flow_scale
    return torch.cat([img, flow], dim=0)


def _mask_tensor(m: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))


def crop_box(prop: Proposal, shape, margin: float) -> BBox:
    h, w = shape
    b = prop.bbox
    if b.w < 1 or b.h < 1 or b.x >= w or b.y >= h or b.x + b.w <= 0 or b.y + b.h <= 0:
        raise InvalidProposalError(f"degenerate bbox {b}")
    box = b.expanded(margin, h, w)
    if box.w < 1 or box.h < 1:
        raise InvalidProposalError(f"degenerate bbox {b} after clamping")
    return box


def selection_input(frame: Frame, prop: Proposal, cfg: ModelConfig) -> torch.Tensor:
    """(7, S, S): RGB, flow and proposal mask cropped to the expanded box, plus
    a reserved all-zero channel."""
    if prop.mask.shape != frame.shape:
        raise InvalidProposalError("proposal mask does not match frame size")
    box = crop_box(prop, frame.shape, cfg.crop_margin)
    ys = slice(box.y, box.y + box.h)
    xs = slice(box.x, box.x + box.w)
    base = _frame_channels(frame, cfg)[:, ys, xs]
    m = _mask_tensor(prop.mask[ys, xs])[None]
    stack = torch.cat([base, m, torch.zeros_like(m)], dim=0)
    return _resize(stack[None], cfg.input_size)[0]


def feature_tensor(props: Sequence[Proposal], cfg: ModelConfig) -> torch.Tensor:
    feats = np.stack([np.asarray(p.feature, dtype=np.float32) for p in props])
    if feats.shape[1] != cfg.feature_dim:
        raise ConfigurationError(f"feature length {feats.shape[1]} != {cfg.feature_dim}")
    return torch.from_numpy(feats)


class FrameContext:
    """Resized per-frame channels shared by every assignment evaluation."""

    def __init__(self, frame: Frame, cfg: ModelConfig):
        self.cfg = cfg
        self.shape = frame.shape
        self.base = _resize(_frame_channels(frame, cfg)[None], cfg.input_size)[0]

    def mask(self, m: np.ndarray) -> torch.Tensor:
        return _resize(_mask_tensor(m)[None, None], self.cfg.input_size)[0, 0]

    def slot_masks(self, seg: SegTensor, slots: Sequence[int]) -> torch.Tensor:
        if not slots:
            return torch.zeros(0, self.cfg.input_size, self.cfg.input_size)
        m = np.stack([seg.slot(k) for k in slots]).astype(np.float32)
        return _resize(torch.from_numpy(m)[:, None], self.cfg.input_size)[:, 0]


def candidate_slots(prev: SegTensor, partial: SegTensor) -> List[int]:
    """Occupied slots plus the lowest-indexed empty one (1-based)."""
    occ = prev.occupied() | partial.occupied()
    cands = [k + 1 for k in np.flatnonzero(occ)]
    empty = np.flatnonzero(~occ)
    if empty.size:
        cands.append(int(empty[0]) + 1)
    return sorted(cands)


def assignment_input(ctx: FrameContext, prop: Proposal, prev: SegTensor, partial: SegTensor,
                     slots: Sequence[int]) -> torch.Tensor:
    """(len(slots), 8, S, S) stacks of (I, u, v, p_i, M^k_{t-1}, M^k_{<i,t})."""
    n = len(slots)
    p = ctx.mask(prop.mask)
    shared = torch.cat([ctx.base, p[None]], dim=0)[None].expand(n, -1, -1, -1)
    return torch.cat([shared, ctx.slot_masks(prev, slots)[:, None],
                      ctx.slot_masks(partial, slots)[:, None]], dim=1)


def _check_slots(net: AssignmentNet, prev: SegTensor, partial: SegTensor):
    k = net.cfg.k_max
    if prev.k_max != k or partial.k_max != k:
        raise ConfigurationError(
            f"slot tensors have {prev.k_max}/{partial.k_max} slots, network expects {k}")


# ---------------------------------------------------------------- forward ops

def selection_forward(net: SelectionNet, frame: Frame, prop: Proposal) -> float:
    with torch.no_grad():
        x = selection_input(frame, prop, net.cfg)[None]
        return float(torch.sigmoid(net(x, feature_tensor([prop], net.cfg)))[0])


def select_proposals(net: SelectionNet, frame: Frame, props: Sequence[Proposal]) -> List[int]:
    """Indices (in input order) of proposals accepted as moving."""
    if not props:
        return []
    with torch.no_grad():
        x = torch.stack([selection_input(frame, p, net.cfg) for p in props])
        probs = torch.sigmoid(net(x, feature_tensor(props, net.cfg))).numpy()
    return [i for i, q in enumerate(probs) if q > net.cfg.select_threshold]


def assignment_logits(net: AssignmentNet, frame: Frame, prop: Proposal, prev: SegTensor,
                      partial: SegTensor, ctx: Optional[FrameContext] = None) -> np.ndarray:
    """Length-K logits with non-candidate slots set to -inf."""
    _check_slots(net, prev, partial)
    ctx = ctx or FrameContext(frame, net.cfg)
    cands = candidate_slots(prev, partial)
    out = np.full(net.cfg.k_max, -np.inf)
    if not cands:
        return out
    with torch.no_grad():
        x = assignment_input(ctx, prop, prev, partial, cands)
        feat = feature_tensor([prop], net.cfg).expand(len(cands), -1)
        out[np.asarray(cands) - 1] = net(x, feat).double().numpy()
    return out


def log_softmax_masked(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / temperature
    finite = np.isfinite(z)
    out = np.full_like(z, -np.inf)
    zf = z[finite]
    m = zf.max()
    out[finite] = zf - m - np.log(np.exp(zf - m).sum())
    return out


@dataclass
class Step:
    proposal_index: int
    candidates: List[int]
    action: int
    log_prob: float
    probs: np.ndarray
    inputs: Optional[torch.Tensor] = None
    feature: Optional[torch.Tensor] = None


@dataclass
class FrameAssignment:
    seg: SegTensor
    steps: List[Step] = field(default_factory=list)

    @property
    def log_prob(self) -> float:
        return float(sum(s.log_prob for s in self.steps))


def assign_frame(net: AssignmentNet, frame: Frame, props: Sequence[Proposal], prev: SegTensor,
                 mode: str = "argmax", rng: Optional[np.random.Generator] = None,
                 temperature: float = 1.0, keep_inputs: bool = False) -> FrameAssignment:
    """Label the frame's (already selected) proposals one at a time.

    ``props`` must be in descending confidence order. In ``sample`` mode
    actions are drawn from the tempered softmax with ``rng``.
    """
    if mode not in ("argmax", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    h, w = frame.shape
    partial = SegTensor.empty(h, w, net.cfg.k_max)
    _check_slots(net, prev, partial)
    result = FrameAssignment(partial)
    if not props:
        return result
    ctx = FrameContext(frame, net.cfg)
    feats = feature_tensor(props, net.cfg)
    for i, prop in enumerate(props):
        cands = candidate_slots(prev, partial)
        with torch.no_grad():
            x = assignment_input(ctx, prop, prev, partial, cands)
            f = feats[i:i + 1].expand(len(cands), -1)
            logits = net(x, f).double().numpy()
        logp = log_softmax_masked(logits, temperature)
        probs = np.exp(logp)
        if mode == "argmax":
            j = int(np.argmax(logits))
        else:
            j = int(rng.choice(len(cands), p=probs / probs.sum()))
        k = cands[j]
        result.steps.append(Step(i, cands, k, float(logp[j]), probs,
                                 x.clone() if keep_inputs else None,
                                 feats[i] if keep_inputs else None))
        partial = partial.commit(prop.mask, k)
    result.seg = SegTensor(partial.slots, len(props))
    return result


def batched_step_log_probs(net: AssignmentNet, steps: Sequence[Step],
                           temperature: float = 1.0) -> torch.Tensor:
    """Differentiable log pi(action) for recorded steps, one forward pass."""
    x = torch.cat([s.inputs for s in steps], dim=0)
    feat = torch.cat([s.feature[None].expand(len(s.candidates), -1) for s in steps], dim=0)
    logits = net(x, feat) / temperature
    sizes = [len(s.candidates) for s in steps]
    padded = torch.full((len(steps), max(sizes)), float("-inf"))
    rows = torch.repeat_interleave(torch.arange(len(steps)), torch.tensor(sizes))
    cols = torch.cat([torch.arange(n) for n in sizes])
    padded = padded.index_put((rows, cols), logits)
    logp = torch.log_softmax(padded, dim=1)
    chosen = torch.tensor([s.candidates.index(s.action) for s in steps])
    return logp[torch.arange(len(steps)), chosen]
