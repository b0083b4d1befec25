"""Domain types, run-length codec and slot-tensor projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, InvariantError, MalformedEncodingError

DEFAULT_FEATURE_DIM = 256
DEFAULT_K_MAX = 10


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "BBox":
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            return cls(0, 0, 1, 1)
        return cls(int(xs.min()), int(ys.min()),
                   int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))

    def expanded(self, margin: float, height: int, width: int) -> "BBox":
        """Grow by ``margin`` of the box size on every side, clamped to the frame."""
        dx = int(round(self.w * margin))
        dy = int(round(self.h * margin))
        x0 = max(0, self.x - dx)
        y0 = max(0, self.y - dy)
        x1 = min(width, self.x + self.w + dx)
        y1 = min(height, self.y + self.h + dy)
        return BBox(x0, y0, x1 - x0, y1 - y0)

    def as_list(self):
        return [self.x, self.y, self.w, self.h]


@dataclass
class Proposal:
    mask: np.ndarray
    bbox: BBox
    feature: np.ndarray
    confidence: float


@dataclass
class Frame:
    image: np.ndarray  # (h, w, 3) float in [0, 1]
    flow: np.ndarray  # (h, w, 2) pixels/frame, (u, v)

    def __post_init__(self):
        if self.image.shape[:2] != self.flow.shape[:2]:
            raise DimensionError(
                f"image {self.image.shape[:2]} and flow {self.flow.shape[:2]} differ")

    @property
    def shape(self):
        return self.image.shape[:2]


@dataclass
class VideoSample:
    frames: List[Frame]
    proposals: List[List[Proposal]]
    gt: Optional[List[np.ndarray]] = None
    name: str = "video"
    # number of ground-truth identities; inferred from gt when not given
    num_instances: Optional[int] = None
    # static distractor masks, only known for synthetic videos
    distractors: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        if len(self.proposals) != len(self.frames):
            raise DimensionError("proposals and frames differ in length")
        if self.gt is not None and len(self.gt) != len(self.frames):
            raise DimensionError("gt and frames differ in length")
        if self.gt is not None and self.num_instances is None:
            self.num_instances = int(max((g.max() for g in self.gt), default=0))

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape

    def instance_ids(self):
        return list(range(1, (self.num_instances or 0) + 1))


@dataclass
class SegTensor:
    """Per-frame slot tensor of shape (h, w, K).

    Slots are 0-indexed in the array and map to labels ``1..K``. ``cursor`` counts
    proposals already handled in the frame.
    """

    slots: np.ndarray
    cursor: int = 0

    @classmethod
    def empty(cls, height: int, width: int, k_max: int = DEFAULT_K_MAX) -> "SegTensor":
        return cls(np.zeros((height, width, k_max), dtype=bool), 0)

    @classmethod
    def from_labelmap(cls, labels: np.ndarray, k_max: int = DEFAULT_K_MAX) -> "SegTensor":
        labels = np.asarray(labels)
        if labels.max(initial=0) > k_max:
            raise InvariantError(f"label {labels.max()} exceeds K_max={k_max}")
        slots = labels[..., None] == np.arange(1, k_max + 1)
        return cls(slots, 0)

    @property
    def k_max(self) -> int:
        return self.slots.shape[2]

    @property
    def shape(self):
        return self.slots.shape[:2]

    def slot(self, k: int) -> np.ndarray:
        """Mask of 1-indexed slot ``k``."""
        return self.slots[..., k - 1]

    def occupied(self) -> np.ndarray:
        """Boolean vector over slots, True where the slot has any pixel."""
        return self.slots.any(axis=(0, 1))

    def taken(self) -> np.ndarray:
        return self.slots.any(axis=2)

    def commit(self, mask: np.ndarray, k: Optional[int]) -> "SegTensor":
        """Return a new tensor with ``mask`` added to slot ``k``.

        Pixels already owned by another slot stay where they are (earlier
        commits win). ``k=None`` advances the cursor without writing.
        """
        slots = self.slots.copy()
        if k is not None:
            if not 1 <= k <= self.k_max:
                raise InvariantError(f"slot {k} outside 1..{self.k_max}")
            free = mask & ~(slots.any(axis=2) & ~slots[..., k - 1])
            slots[..., k - 1] |= free
        return SegTensor(slots, self.cursor + 1)

    def is_disjoint(self) -> bool:
        return bool((self.slots.sum(axis=2) <= 1).all())


def rle_encode(mask: np.ndarray) -> str:
    """Row-major alternating run lengths, background first."""
    return " ".join(str(int(r)) for r in kernels.rle_runs(mask))


def rle_decode(runs: str, h: int, w: int) -> np.ndarray:
    try:
        counts = np.array([int(tok) for tok in runs.split()], dtype=np.int64)
    except ValueError as exc:
        raise MalformedEncodingError(f"non-integer run in {runs[:40]!r}") from exc
    if counts.size == 0 or (counts < 0).any():
        raise MalformedEncodingError("empty or negative run")
    if int(counts.sum()) != h * w:
        raise MalformedEncodingError(f"runs sum to {int(counts.sum())}, expected {h * w}")
    return kernels.rle_fill(counts, h * w).reshape(h, w)


def project_to_labelmap(seg: SegTensor) -> np.ndarray:
    counts = seg.slots.sum(axis=2)
    if (counts > 1).any():
        raise InvariantError("slot tensor has overlapping slots")
    labels = np.argmax(seg.slots, axis=2) + 1
    labels[counts == 0] = 0
    return labels.astype(np.int64)


def labelmap_masks(labels: np.ndarray, ids: Sequence[int]) -> List[np.ndarray]:
    return [labels == i for i in ids]
