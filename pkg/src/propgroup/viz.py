"""Overlay panels: proposals, flow colour wheel, prediction and ground truth."""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image

from .core import VideoSample
from .dataio import PALETTE
from .errors import DimensionError
from .kernels import boundary

ALPHA = 0.5
PROPOSAL_EDGE = np.array([1.0, 1.0, 1.0])


def slot_color(k: int) -> np.ndarray:
    """Fixed colour for slot ``k`` (DAVIS palette, so it matches saved PNGs)."""
    return np.asarray(PALETTE[3 * k:3 * k + 3], dtype=np.float32) / 255.0


def flow_to_rgb(flow: np.ndarray, max_mag: Optional[float] = None) -> np.ndarray:
    """Hue from direction, saturation from magnitude, full value."""
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    scale = max_mag if max_mag else max(float(mag.max()), 1e-6)
    hue = (np.arctan2(-v, -u) / np.pi + 1) / 2
    hsv = np.stack([hue, np.clip(mag / scale, 0, 1), np.ones_like(mag)], axis=-1)
    img = Image.fromarray((hsv * 255).round().astype(np.uint8), mode="HSV").convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def overlay(image: np.ndarray, labels: np.ndarray, alpha: float = ALPHA) -> np.ndarray:
    if labels.shape != image.shape[:2]:
        raise DimensionError(f"label map {labels.shape} does not match image {image.shape[:2]}")
    out = np.array(image, dtype=np.float32, copy=True)
    for k in np.unique(labels):
        if k == 0:
            continue
        m = labels == k
        out[m] = (1 - alpha) * out[m] + alpha * slot_color(int(k))
    return out


def proposal_panel(image: np.ndarray, props) -> np.ndarray:
    out = np.array(image, dtype=np.float32, copy=True)
    for p in props:
        out[boundary(p.mask)] = PROPOSAL_EDGE
    return out


def frame_panels(video: VideoSample, t: int, labels: np.ndarray) -> List[np.ndarray]:
    frame = video.frames[t]
    panels = [proposal_panel(frame.image, video.proposals[t]),
              flow_to_rgb(frame.flow),
              overlay(frame.image, labels)]
    if video.gt is not None:
        panels.append(overlay(frame.image, video.gt[t]))
    return panels


def render_overlay(video: VideoSample, labelmaps: Sequence[np.ndarray], out_dir) -> List[Path]:
    """Write one side-by-side PNG per frame; returns the written paths."""
    if len(labelmaps) != len(video):
        raise DimensionError(f"{len(labelmaps)} label maps for {len(video)} frames")
    d = Path(out_dir) / video.name
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, labels in enumerate(labelmaps):
        strip = np.concatenate(frame_panels(video, t, np.asarray(labels)), axis=1)
        path = d / f"{t:05d}.png"
        Image.fromarray((np.clip(strip, 0, 1) * 255 + 0.5).astype(np.uint8)).save(path)
        paths.append(path)
    return paths
