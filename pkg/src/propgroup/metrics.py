"""Region similarity J, boundary accuracy F and benchmark statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import DimensionError, EmptyInputError, InvalidMatchingError

REPORT_COLUMNS = ["J&F-Mean", "J-Mean", "J-Recall", "J-Decay", "F-Mean", "F-Recall", "F-Decay"]
RECALL_THRESHOLD = 0.5


@dataclass(frozen=True)
class FrameScore:
    j: float
    f: float

    @property
    def jf(self) -> float:
        return (self.j + self.f) / 2


@dataclass(frozen=True)
class SequenceStats:
    mean: float
    recall: float
    decay: float


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    _check_shapes(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def default_tolerance(shape) -> int:
    h, w = shape[:2]
    return max(1, int(round(0.008 * math.hypot(h, w))))


def boundary_f(pred: np.ndarray, gt: np.ndarray, tol: Optional[int] = None) -> float:
    """F-measure of boundary pixels matched within Euclidean radius ``tol``."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    _check_shapes(pred, gt)
    if tol is None:
        tol = default_tolerance(pred.shape)
    if tol < 1:
        raise ValueError("tol must be >= 1")
    bp = kernels.boundary(pred)
    bg = kernels.boundary(gt)
    n_p = np.count_nonzero(bp)
    n_g = np.count_nonzero(bg)
    if n_p == 0 and n_g == 0:
        return 1.0
    if n_p == 0 or n_g == 0:
        return 0.0
    precision = kernels.count_within(bp, bg, tol) / n_p
    recall = kernels.count_within(bg, bp, tol) / n_g
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def frame_jf(pred: np.ndarray, gt: np.ndarray, matching: Dict[int, int],
             gt_ids: Optional[Sequence[int]] = None, tol: Optional[int] = None
             ) -> Tuple[List[FrameScore], FrameScore]:
    """Score one frame under a fixed slot -> instance matching.

    Every ground-truth instance contributes one score (0 when unmatched). Every
    predicted slot with pixels in this frame that is not matched contributes a
    zero score, so hallucinated objects lower the mean.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check_shapes(pred, gt)
    if gt_ids is None:
        gt_ids = [int(i) for i in np.unique(gt) if i != 0]
    gt_ids = list(gt_ids)
    inverse = {}
    for slot, inst in matching.items():
        if inst not in gt_ids:
            raise InvalidMatchingError(f"slot {slot} matched to unknown instance {inst}")
        if inst in inverse:
            raise InvalidMatchingError(f"instance {inst} matched twice")
        inverse[inst] = slot

    scores = []
    for inst in gt_ids:
        g = gt == inst
        slot = inverse.get(inst)
        p = pred == slot if slot is not None else np.zeros_like(g)
        scores.append(FrameScore(iou(p, g), boundary_f(p, g, tol)))
    for slot in np.unique(pred):
        if slot != 0 and int(slot) not in matching:
            scores.append(FrameScore(0.0, 0.0))
    if not scores:
        return [], FrameScore(1.0, 1.0)
    return scores, FrameScore(float(np.mean([s.j for s in scores])),
                              float(np.mean([s.f for s in scores])))


def _quarter(n: int) -> int:
    return max(1, int(math.ceil(n / 4)))


def sequence_stats(per_frame: Sequence[float]) -> SequenceStats:
    """Mean, recall indicator and decay of one per-frame score series.

    Decay compares the first and last temporal quarters (equal sized, so it flips
    sign under time reversal). ``recall`` is 1.0 if the mean exceeds 0.5; the
    dataset-level recall is the average of these indicators, see ``dataset_recall``.
    """
    values = np.asarray(per_frame, dtype=float)
    if values.size == 0:
        raise EmptyInputError("sequence_stats needs at least one value")
    q = _quarter(values.size)
    mean = float(values.mean())
    decay = float(values[:q].mean() - values[values.size - q:].mean())
    return SequenceStats(mean, float(mean > RECALL_THRESHOLD), decay)


def dataset_recall(sequence_means: Sequence[float]) -> float:
    means = np.asarray(sequence_means, dtype=float)
    if means.size == 0:
        raise EmptyInputError("no sequences")
    return float(np.mean(means > RECALL_THRESHOLD))


def tube_iou_matrix(pred_seq, gt_seq, k_max: int, n_gt: int) -> np.ndarray:
    """Video-level IoU between every predicted slot tube and every instance tube."""
    counts = np.zeros((k_max + 1, n_gt + 1), dtype=np.int64)
    for p, g in zip(pred_seq, gt_seq):
        _check_shapes(np.asarray(p), np.asarray(g))
        counts += kernels.contingency(np.clip(p, 0, k_max), np.clip(g, 0, n_gt), k_max, n_gt)
    inter = counts[1:, 1:].astype(float)
    area_p = counts[1:, :].sum(axis=1)[:, None]
    area_g = counts[:, 1:].sum(axis=0)[None, :]
    union = area_p + area_g - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def match_slots(pred_seq, gt_seq, k_max: Optional[int] = None,
                n_gt: Optional[int] = None) -> Dict[int, int]:
    """Optimal one-to-one slot -> instance matching maximising summed tube IoU.

    Pairs with zero overlap are left unmatched.
    """
    if k_max is None:
        k_max = int(max((np.max(p) for p in pred_seq), default=0))
    if n_gt is None:
        n_gt = int(max((np.max(g) for g in gt_seq), default=0))
    if k_max == 0 or n_gt == 0:
        return {}
    m = tube_iou_matrix(pred_seq, gt_seq, k_max, n_gt)
    rows, cols = linear_sum_assignment(-m)
    return {int(r) + 1: int(c) + 1 for r, c in zip(rows, cols) if m[r, c] > 0}


@dataclass
class VideoScores:
    name: str
    matching: Dict[int, int]
    j: List[float]
    f: List[float]

    @property
    def jf(self) -> List[float]:
        return [(a + b) / 2 for a, b in zip(self.j, self.f)]


def evaluate_video(pred_seq, gt_seq, n_gt: Optional[int] = None, k_max: Optional[int] = None,
                   tol: Optional[int] = None, name: str = "video",
                   matching: Optional[Dict[int, int]] = None) -> VideoScores:
    if len(pred_seq) != len(gt_seq):
        raise DimensionError(f"{len(pred_seq)} predicted frames vs {len(gt_seq)} gt frames")
    if n_gt is None:
        n_gt = int(max((np.max(g) for g in gt_seq), default=0))
    if matching is None:
        matching = match_slots(pred_seq, gt_seq, k_max, n_gt)
    ids = list(range(1, n_gt + 1))
    js, fs = [], []
    for p, g in zip(pred_seq, gt_seq):
        _, mean = frame_jf(p, g, matching, ids, tol)
        js.append(mean.j)
        fs.append(mean.f)
    return VideoScores(name, matching, js, fs)


@dataclass
class Report:
    """Per-sequence and aggregate statistics, all in [0, 1]."""

    sequences: List[VideoScores] = field(default_factory=list)

    def row(self, scores: Optional[List[VideoScores]] = None) -> Dict[str, float]:
        scores = self.sequences if scores is None else scores
        if not scores:
            raise EmptyInputError("report has no sequences")
        j_stats = [sequence_stats(s.j) for s in scores]
        f_stats = [sequence_stats(s.f) for s in scores]
        jm = float(np.mean([s.mean for s in j_stats]))
        fm = float(np.mean([s.mean for s in f_stats]))
        return {
            "J&F-Mean": (jm + fm) / 2,
            "J-Mean": jm,
            "J-Recall": dataset_recall([s.mean for s in j_stats]),
            "J-Decay": float(np.mean([s.decay for s in j_stats])),
            "F-Mean": fm,
            "F-Recall": dataset_recall([s.mean for s in f_stats]),
            "F-Decay": float(np.mean([s.decay for s in f_stats])),
        }

    def per_sequence_rows(self):
        return [(s.name, self.row([s])) for s in self.sequences]

    @property
    def jf_mean(self) -> float:
        return self.row()["J&F-Mean"]


def evaluate_dataset(items, tol: Optional[int] = None) -> Report:
    """``items`` yields ``(name, pred_seq, gt_seq, n_gt)`` tuples."""
    report = Report()
    for name, pred_seq, gt_seq, n_gt in items:
        report.sequences.append(evaluate_video(pred_seq, gt_seq, n_gt=n_gt, tol=tol, name=name))
    return report


def format_table(rows: Sequence[Tuple[str, Dict[str, float]]], label: str = "Method") -> str:
    """Fixed-width text table, values scaled by 100 with one decimal."""
    width = max([len(label)] + [len(name) for name, _ in rows]) + 2
    head = label.ljust(width) + " ".join(c.rjust(9) for c in REPORT_COLUMNS)
    lines = [head, "-" * len(head)]
    for name, row in rows:
        lines.append(name.ljust(width) + " ".join(f"{100 * row[c]:9.1f}" for c in REPORT_COLUMNS))
    return "\n".join(lines)


def format_csv(rows: Sequence[Tuple[str, Dict[str, float]]], label: str = "Method") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([label] + REPORT_COLUMNS)
    for name, row in rows:
        writer.writerow([name] + [f"{100 * row[c]:.1f}" for c in REPORT_COLUMNS])
    return buf.getvalue()
