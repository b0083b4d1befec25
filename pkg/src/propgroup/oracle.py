"""Supervised targets from ground truth: selection labels, greedy assignment,
and the greedy-oracle segmentation used as the upper-bound baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import DEFAULT_K_MAX, Proposal, SegTensor, VideoSample, project_to_labelmap
from .errors import InputError, TrainingDataError
from .metrics import VideoScores, evaluate_video

SELECTION_IOU = 0.2
SKIP = -1


def _iou_counts(inter, a, b):
    union = a + b - inter
    return 1.0 if union == 0 else inter / union


def selection_labels(proposals: Sequence[Sequence[Proposal]], gt: Sequence[np.ndarray]
                     ) -> List[List[int]]:
    """1 for proposals whose best IoU with any instance is strictly above 0.2."""
    out = []
    for props, labels in zip(proposals, gt):
        ids = [i for i in np.unique(labels) if i != 0]
        inst = [labels == i for i in ids]
        frame = []
        for p in props:
            area = np.count_nonzero(p.mask)
            best = 0.0
            for g in inst:
                inter = np.count_nonzero(p.mask & g)
                best = max(best, _iou_counts(inter, area, np.count_nonzero(g)))
            frame.append(int(best > SELECTION_IOU))
        out.append(frame)
    return out


def greedy_assignment(selected: Sequence[Proposal], gt: np.ndarray,
                      current: Optional[SegTensor] = None, num_instances: Optional[int] = None):
    """Assign each proposal to the instance whose accumulated IoU improves most.

    Slot ``k`` of ``current`` accumulates instance ``k``. Returns the list of
    target instances (``None`` for skip) and the updated tensor.
    """
    n = int(num_instances if num_instances is not None else gt.max(initial=0))
    if current is None:
        current = SegTensor.empty(*gt.shape, max(n, 1))
    inst = [gt == k for k in range(1, n + 1)]
    gt_area = [np.count_nonzero(g) for g in inst]
    targets = []
    for p in selected:
        taken = current.taken()
        best_gain, best_k = 0.0, None
        for k in range(1, n + 1):
            acc = current.slot(k)
            g = inst[k - 1]
            added = p.mask & ~(taken & ~acc)
            new = acc | added
            before = _iou_counts(np.count_nonzero(acc & g), np.count_nonzero(acc), gt_area[k - 1])
            after = _iou_counts(np.count_nonzero(new & g), np.count_nonzero(new), gt_area[k - 1])
            gain = after - before
            # strict improvement; ties keep the lowest instance index
            if gain > best_gain + 1e-12:
                best_gain, best_k = gain, k
        targets.append(best_k)
        current = current.commit(p.mask, best_k)
    return targets, current


@dataclass
class OracleResult:
    labelmaps: List[np.ndarray]
    selected: List[List[int]]
    # per frame, per proposal: 1-based slot or SKIP
    slots: List[List[int]]
    binding: Dict[int, int]
    scores: Optional[VideoScores] = None

    def records(self):
        return [[{"proposal_index": i, "selected": s, "slot": k}
                 for i, (s, k) in enumerate(zip(sel, sl))]
                for sel, sl in zip(self.selected, self.slots)]


def oracle_segmentation(video: VideoSample, k_max: int = DEFAULT_K_MAX,
                        evaluate: bool = True) -> OracleResult:
    """Selection labels + greedy assignment with identities bound per video."""
    if video.gt is None:
        raise TrainingDataError(f"{video.name}: oracle needs ground truth")
    n = video.num_instances or 0
    sel = selection_labels(video.proposals, video.gt)
    binding: Dict[int, int] = {}
    labelmaps, slots = [], []
    h, w = video.shape
    for props, labels, gt in zip(video.proposals, sel, video.gt):
        chosen = [i for i, s in enumerate(labels) if s]
        targets, _ = greedy_assignment([props[i] for i in chosen], gt, None, n)
        frame_slots = [SKIP] * len(props)
        seg = SegTensor.empty(h, w, k_max)
        for i, inst in zip(chosen, targets):
            if inst is None:
                continue
            if inst not in binding:
                free = [k for k in range(1, k_max + 1) if k not in binding.values()]
                if not free:
                    continue
                binding[inst] = free[0]
            frame_slots[i] = binding[inst]
            seg = seg.commit(props[i].mask, binding[inst])
        slots.append(frame_slots)
        labelmaps.append(project_to_labelmap(seg))
    result = OracleResult(labelmaps, sel, slots, binding)
    if evaluate:
        result.scores = evaluate_video(labelmaps, video.gt, n_gt=n, k_max=k_max, name=video.name)
    return result


def save_oracle_cache(result: OracleResult, path, video_name: str):
    Path(path).write_text(json.dumps({"video": video_name, "frames": result.records()}))


def load_oracle_cache(path):
    """Returns ``(selected, slots)`` per frame from a cache file."""
    try:
        data = json.loads(Path(path).read_text())
        frames = data["frames"]
        selected = [[int(r["selected"]) for r in fr] for fr in frames]
        slots = [[int(r["slot"]) for r in fr] for fr in frames]
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"unreadable oracle cache {path}: {exc}") from exc
    return selected, slots
