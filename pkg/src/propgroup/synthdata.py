"""Moving-shapes videos with exact flow, ground truth and noisy proposals."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import DEFAULT_FEATURE_DIM, BBox, Frame, Proposal, VideoSample
from .errors import ConfigurationError, PlacementError, TrainingDataError

HIST_BINS = 4
NUM_HU = 7
BASE_FEATURE_DIM = HIST_BINS ** 3 + NUM_HU
# index of the reflection-odd Hu invariant inside the feature vector
HU7_INDEX = HIST_BINS ** 3 + 6


@dataclass
class SceneSpec:
    num_objects: int = 2
    num_distractors: int = 1
    frames: int = 24
    resolution: Tuple[int, int] = (64, 64)
    # max |displacement| per axis in px/frame; ignored when velocities is given
    speed: int = 2
    direction_change_prob: float = 0.0
    object_size: Tuple[int, int] = (10, 18)
    velocities: Optional[List[Tuple[int, int]]] = None
    bounce: bool = True
    seed: int = 0

    def validate(self):
        if self.num_objects < 1:
            raise ConfigurationError("num_objects must be >= 1")
        if self.frames < 2:
            raise ConfigurationError("frames must be >= 2")
        h, w = self.resolution
        if h < 32 or w < 32:
            raise ConfigurationError("resolution must be at least 32x32")
        if self.velocities is not None and len(self.velocities) != self.num_objects:
            raise ConfigurationError("one velocity per object required")


@dataclass
class ProposalNoise:
    boundary_jitter: float = 1.0
    fp_rate: float = 1.0
    fn_rate: float = 0.05
    confidence_noise: float = 0.15
    # probability a true object is over-segmented into two part proposals
    split_rate: float = 0.1
    # probability a true object gets an extra, lower-confidence duplicate proposal
    dup_rate: float = 0.2

    def validate(self):
        for name in ("boundary_jitter", "fp_rate", "fn_rate", "confidence_noise",
                     "split_rate", "dup_rate"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.fn_rate > 1:
            raise ConfigurationError("fn_rate must be <= 1")


ZERO_NOISE = ProposalNoise(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------- shapes

def _shape_template(kind: str, hh: int, ww: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:hh, 0:ww]
    cy, cx = (hh - 1) / 2, (ww - 1) / 2
    if kind == "rect":
        return np.ones((hh, ww), dtype=bool)
    if kind == "ellipse":
        return ((yy - cy) / (hh / 2)) ** 2 + ((xx - cx) / (ww / 2)) ** 2 <= 1.0
    # convex polygon with 3-6 vertices on a jittered ellipse
    n = int(rng.integers(3, 7))
    angles = np.sort(rng.uniform(0, 2 * np.pi, n) + np.arange(n) * 2 * np.pi / n) % (2 * np.pi)
    angles.sort()
    vy = cy + (hh / 2) * np.sin(angles)
    vx = cx + (ww / 2) * np.cos(angles)
    inside = np.ones((hh, ww), dtype=bool)
    for i in range(n):
        j = (i + 1) % n
        cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
        inside &= cross >= -0.5
    if inside.sum() < 4:
        return ((yy - cy) / (hh / 2)) ** 2 + ((xx - cx) / (ww / 2)) ** 2 <= 1.0
    return inside


def _paste(canvas_shape, template: np.ndarray, x: int, y: int) -> np.ndarray:
    """Template placed with top-left at (x, y), clipped to the canvas."""
    h, w = canvas_shape
    out = np.zeros((h, w), dtype=bool)
    th, tw = template.shape
    y0, x0 = max(0, y), max(0, x)
    y1, x1 = min(h, y + th), min(w, x + tw)
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = template[y0 - y:y1 - y, x0 - x:x1 - x]
    return out


def _palette(n: int, rng: np.random.Generator) -> np.ndarray:
    hues = (rng.uniform() + np.arange(n) / n) % 1.0
    rgb = []
    for hue in hues:
        sat = rng.uniform(0.6, 1.0)
        val = rng.uniform(0.6, 1.0)
        i = int(hue * 6) % 6
        f = hue * 6 - int(hue * 6)
        p, q, t = val * (1 - sat), val * (1 - f * sat), val * (1 - (1 - f) * sat)
        rgb.append([(val, t, p), (q, val, p), (p, val, t), (p, q, val), (t, p, val), (val, p, q)][i])
    return np.asarray(rgb)


def _random_velocity(speed: int, rng: np.random.Generator) -> Tuple[int, int]:
    while True:
        vx, vy = (int(v) for v in rng.integers(-speed, speed + 1, size=2))
        if vx or vy:
            return vx, vy


def generate_video(spec: SceneSpec, name: Optional[str] = None) -> VideoSample:
    """Render a moving-shapes video. Pure function of ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h, w = spec.resolution
    smin, smax = spec.object_size
    if smin > min(h, w) - 2:
        raise PlacementError(f"objects of size {smin} do not fit in {h}x{w}")
    smax = min(smax, min(h, w) - 2)

    def make_shape():
        kind = ["rect", "ellipse", "polygon"][int(rng.integers(3))]
        th, tw = (int(v) for v in rng.integers(smin, smax + 1, size=2))
        return _shape_template(kind, th, tw, rng)

    # static background texture
    base = 0.35 + 0.15 * ndimage.gaussian_filter(rng.standard_normal((h, w)), 4) * 4
    background = np.repeat(np.clip(base, 0.1, 0.6)[..., None], 3, axis=2)
    colors = _palette(spec.num_objects + spec.num_distractors, rng)
    obj_colors = colors[:spec.num_objects]
    dis_colors = colors[spec.num_objects:]

    distractors = []
    for k in range(spec.num_distractors):
        tpl = make_shape()
        th, tw = tpl.shape
        x = int(rng.integers(0, w - tw + 1))
        y = int(rng.integers(0, h - th + 1))
        m = _paste((h, w), tpl, x, y)
        background[m] = dis_colors[k]
        distractors.append(m)

    templates = [make_shape() for _ in range(spec.num_objects)]
    pos = np.zeros((spec.frames + 1, spec.num_objects, 2), dtype=np.int64)  # (x, y)
    for i, tpl in enumerate(templates):
        th, tw = tpl.shape
        x = int(rng.integers(0, w - tw + 1))
        y = int(rng.integers(0, h - th + 1))
        if spec.velocities is not None:
            vx, vy = spec.velocities[i]
        else:
            vx, vy = _random_velocity(spec.speed, rng)
        pos[0, i] = (x, y)
        for t in range(spec.frames):
            if spec.velocities is None and spec.direction_change_prob > 0 \
                    and rng.uniform() < spec.direction_change_prob:
                vx, vy = _random_velocity(spec.speed, rng)
            if spec.bounce:
                if not 0 <= x + vx <= w - tw:
                    vx = -vx
                if not 0 <= y + vy <= h - th:
                    vy = -vy
            x, y = x + vx, y + vy
            pos[t + 1, i] = (x, y)

    frames, gts = [], []
    for t in range(spec.frames):
        image = background.copy()
        flow = np.zeros((h, w, 2), dtype=np.float32)
        labels = np.zeros((h, w), dtype=np.int64)
        for i, tpl in enumerate(templates):
            m = _paste((h, w), tpl, int(pos[t, i, 0]), int(pos[t, i, 1]))
            image[m] = obj_colors[i]
            labels[m] = i + 1
            flow[m] = pos[t + 1, i] - pos[t, i]
        frames.append(Frame(image.astype(np.float32), flow))
        gts.append(labels)
    return VideoSample(frames, [[] for _ in frames], gts, name or f"synth{spec.seed}",
                       num_instances=spec.num_objects, distractors=distractors)


# ---------------------------------------------------------------- features

def hu_moments(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask, dtype=float)
    m00 = m.sum()
    if m00 == 0:
        return np.zeros(NUM_HU)
    yy, xx = np.mgrid[0:m.shape[0], 0:m.shape[1]]
    cx = (xx * m).sum() / m00
    cy = (yy * m).sum() / m00
    dx, dy = xx - cx, yy - cy

    def eta(p, q):
        return (dx ** p * dy ** q * m).sum() / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a, b = n30 + n12, n21 + n03
    return np.array([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11 ** 2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        a ** 2 + b ** 2,
        (n30 - 3 * n12) * a * (a ** 2 - 3 * b ** 2) + (3 * n21 - n03) * b * (3 * a ** 2 - b ** 2),
        (n20 - n02) * (a ** 2 - b ** 2) + 4 * n11 * a * b,
        (3 * n21 - n03) * a * (a ** 2 - 3 * b ** 2) - (n30 - 3 * n12) * b * (3 * a ** 2 - b ** 2),
    ])


def appearance_feature(image: np.ndarray, mask: np.ndarray,
                       dim: int = DEFAULT_FEATURE_DIM) -> np.ndarray:
    """Normalised RGB histogram of the masked pixels plus log-scaled Hu moments."""
    if dim < BASE_FEATURE_DIM:
        raise ConfigurationError(f"feature_dim must be >= {BASE_FEATURE_DIM}")
    out = np.zeros(dim, dtype=np.float32)
    pix = image[mask]
    if pix.size:
        q = np.clip((pix * HIST_BINS).astype(int), 0, HIST_BINS - 1)
        idx = (q[:, 0] * HIST_BINS + q[:, 1]) * HIST_BINS + q[:, 2]
        out[:HIST_BINS ** 3] = np.bincount(idx, minlength=HIST_BINS ** 3) / len(idx)
    hu = hu_moments(mask)
    # odd transform keeps the reflection sign of the last invariant
    out[HIST_BINS ** 3:BASE_FEATURE_DIM] = np.sign(hu) * np.log1p(np.abs(hu) * 1e3) / 5
    return out


def make_proposal(image: np.ndarray, mask: np.ndarray, confidence: float,
                  feature_dim: int = DEFAULT_FEATURE_DIM) -> Proposal:
    return Proposal(mask, BBox.from_mask(mask), appearance_feature(image, mask, feature_dim),
                    float(confidence))


def _mirror(a: np.ndarray, horizontal: bool, vertical: bool) -> np.ndarray:
    if horizontal:
        a = a[:, ::-1]
    if vertical:
        a = a[::-1]
    return np.ascontiguousarray(a)


def mirror_proposal(p: Proposal, horizontal: bool, vertical: bool) -> Proposal:
    """Reflect a proposal. Colour histograms are unchanged; the seventh Hu
    invariant changes sign under each reflection."""
    mask = _mirror(p.mask, horizontal, vertical)
    feat = p.feature.copy()
    if horizontal != vertical and feat.shape[0] > HU7_INDEX:
        feat[HU7_INDEX] = -feat[HU7_INDEX]
    return Proposal(mask, BBox.from_mask(mask), feat, p.confidence)


def mirror_frame(frame: Frame, horizontal: bool, vertical: bool) -> Frame:
    flow = _mirror(frame.flow, horizontal, vertical).copy()
    if horizontal:
        flow[..., 0] = -flow[..., 0]
    if vertical:
        flow[..., 1] = -flow[..., 1]
    return Frame(_mirror(frame.image, horizontal, vertical), flow)


def mirror_video(video: VideoSample, horizontal: bool, vertical: bool) -> VideoSample:
    """Reflected copy of a video: images, flow, proposals and labels."""
    return VideoSample(
        [mirror_frame(f, horizontal, vertical) for f in video.frames],
        [[mirror_proposal(p, horizontal, vertical) for p in props] for props in video.proposals],
        [_mirror(g, horizontal, vertical) for g in video.gt] if video.gt is not None else None,
        video.name, num_instances=video.num_instances,
        distractors=[_mirror(d, horizontal, vertical) for d in video.distractors]
        if video.distractors is not None else None)


# ---------------------------------------------------------------- proposals

def jitter_mask(mask: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb the boundary with spatially smooth noise of std ``sigma`` pixels."""
    if sigma <= 0 or not mask.any():
        return mask.copy()
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    field_ = ndimage.gaussian_filter(rng.standard_normal(mask.shape), 1.5)
    field_ *= sigma / max(field_.std(), 1e-8)
    return (inside - outside + field_) > 0


def _split(mask: np.ndarray, rng: np.random.Generator):
    ys, xs = np.nonzero(mask)
    theta = rng.uniform(0, np.pi)
    proj = (xs - xs.mean()) * np.cos(theta) + (ys - ys.mean()) * np.sin(theta)
    a = np.zeros_like(mask)
    a[ys[proj < 0], xs[proj < 0]] = True
    return a, mask & ~a


def _random_blob(shape, rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    bh, bw = (int(v) for v in rng.integers(6, 15, size=2))
    tpl = _shape_template("ellipse", bh, bw, rng)
    return _paste(shape, tpl, int(rng.integers(0, w - bw + 1)), int(rng.integers(0, h - bh + 1)))


def _distractor_masks(video: VideoSample, t: int) -> List[np.ndarray]:
    """Visible parts of the static distractor shapes in frame ``t``."""
    if not video.distractors:
        return []
    visible = [d & (video.gt[t] == 0) for d in video.distractors]
    return [m for m in visible if m.sum() >= 4]


def synthesize_proposals(video: VideoSample, noise: ProposalNoise, seed: int = 0,
                         feature_dim: int = DEFAULT_FEATURE_DIM) -> VideoSample:
    """Fill ``video.proposals`` with noisy detections sorted by confidence."""
    if video.gt is None:
        raise TrainingDataError("synthesize_proposals needs ground truth")
    noise.validate()
    rng = np.random.default_rng(seed)
    shape = video.shape
    cn = noise.confidence_noise

    def conf(mean):
        return float(np.clip(mean + cn * rng.standard_normal(), 0.05, 1.0))

    all_props = []
    for t, (frame, gt) in enumerate(zip(video.frames, video.gt)):
        items = []  # (mask, confidence)
        for inst in video.instance_ids():
            m = gt == inst
            if not m.any():
                continue
            if rng.uniform() < noise.fn_rate:
                continue
            base = jitter_mask(m, noise.boundary_jitter, rng)
            if noise.split_rate > 0 and rng.uniform() < noise.split_rate and base.sum() >= 8:
                for part in _split(base, rng):
                    items.append((part, conf(0.7)))
            else:
                items.append((base, conf(0.85)))
            if noise.dup_rate > 0 and rng.uniform() < noise.dup_rate:
                items.append((jitter_mask(m, max(noise.boundary_jitter, 1.0), rng), conf(0.6)))
        n_fp = int(rng.poisson(noise.fp_rate)) if noise.fp_rate > 0 else 0
        if n_fp:
            distractors = _distractor_masks(video, t)
            for _ in range(n_fp):
                if distractors and rng.uniform() < 0.6:
                    d = distractors[int(rng.integers(len(distractors)))]
                    m = jitter_mask(d, noise.boundary_jitter, rng)
                else:
                    m = _random_blob(shape, rng)
                items.append((m, conf(0.45)))
        props = [make_proposal(frame.image, m, c, feature_dim) for m, c in items if m.any()]
        props.sort(key=lambda p: -p.confidence)
        all_props.append(props)
    return dataclasses.replace(video, proposals=all_props)


def scene_for(index: int, base_seed: int, num_objects=(2, 4), num_distractors=(1, 3),
              **scene_kwargs) -> SceneSpec:
    """Draw the per-video scene parameters of a benchmark split."""
    rng = np.random.default_rng([base_seed, index])
    lo, hi = num_objects
    dlo, dhi = num_distractors
    return SceneSpec(num_objects=int(rng.integers(lo, hi + 1)),
                     num_distractors=int(rng.integers(dlo, dhi + 1)),
                     seed=int(rng.integers(2 ** 31)), **scene_kwargs)


def generate_split(n_videos: int, base_seed: int, noise: ProposalNoise,
                   feature_dim: int = DEFAULT_FEATURE_DIM, prefix: str = "vid",
                   **scene_kwargs) -> List[VideoSample]:
    videos = []
    for i in range(n_videos):
        spec = scene_for(i, base_seed, **scene_kwargs)
        v = generate_video(spec, name=f"{prefix}{i:03d}")
        videos.append(synthesize_proposals(v, noise, seed=spec.seed + 1, feature_dim=feature_dim))
    return videos
