"""DAVIS-style dataset layout: JPEG frames, indexed-PNG annotations,
Middlebury ``.flo`` flow and JSON-lines proposal files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image

from .core import DEFAULT_FEATURE_DIM, BBox, Frame, Proposal, VideoSample, rle_decode, rle_encode
from .errors import AlignmentError, DatasetLayoutError, InputError
from .synthdata import appearance_feature

FLO_MAGIC = 202021.25  # "PIEH" read as little-endian float32
MIN_CONFIDENCE = 0.05


def _palette() -> List[int]:
    # DAVIS colour map: bit-interleaved RGB per index
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal += [r, g, b]
    return pal


PALETTE = _palette()


def write_flo(path, flow: np.ndarray):
    flow = np.asarray(flow, dtype="<f4")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(flow.reshape(h, w, 2).tobytes())


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = np.frombuffer(fh.read(4), dtype="<f4")
        if magic.size != 1 or magic[0] != FLO_MAGIC:
            raise InputError(f"{path}: bad .flo magic")
        w, h = (int(v) for v in np.frombuffer(fh.read(8), dtype="<i4"))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != 2 * w * h:
        raise InputError(f"{path}: expected {2 * w * h} floats, found {data.size}")
    return data.reshape(h, w, 2).astype(np.float32)


def write_label_png(path, labels: np.ndarray):
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise InputError("labels must be in 0..255 for an indexed PNG")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(PALETTE)
    img.save(path)


def read_label_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise InputError(f"{path}: expected an indexed PNG, got mode {img.mode}")
    return np.array(img, dtype=np.int64)


def write_image(path, image: np.ndarray):
    Image.fromarray((np.clip(image, 0, 1) * 255 + 0.5).astype(np.uint8)).save(path, quality=95)


def read_image(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def proposal_record(p: Proposal, with_feature: bool = True) -> dict:
    rec = {"bbox": p.bbox.as_list(), "score": float(p.confidence), "rle": rle_encode(p.mask)}
    if with_feature:
        rec["feature"] = [float(x) for x in p.feature]
    return rec


def write_proposals(path, props: Sequence[Proposal], with_feature: bool = True):
    with open(path, "w") as fh:
        for p in props:
            fh.write(json.dumps(proposal_record(p, with_feature)) + "\n")


def read_proposals(path, image: np.ndarray, feature_dim: int = DEFAULT_FEATURE_DIM,
                   min_confidence: float = MIN_CONFIDENCE) -> List[Proposal]:
    """Parse a proposal file, dropping detections scored below ``min_confidence``.

    Missing features are computed from the image; the result is sorted by
    descending score.
    """
    h, w = image.shape[:2]
    props = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                score = float(rec["score"])
                mask = rle_decode(rec["rle"], h, w)
                bbox = BBox(*(int(v) for v in rec["bbox"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{n}: bad proposal record ({exc})") from exc
            if score < min_confidence:
                continue
            if "feature" in rec and rec["feature"] is not None:
                feat = np.asarray(rec["feature"], dtype=np.float32)
                if feat.size != feature_dim:
                    raise InputError(f"{path}:{n}: feature has {feat.size} entries, "
                                     f"expected {feature_dim}")
            else:
                feat = appearance_feature(image, mask, feature_dim)
            props.append(Proposal(mask, bbox, feat, score))
    props.sort(key=lambda p: -p.confidence)
    return props


def _frame_files(d: Path, suffix: str) -> List[Path]:
    return sorted(p for p in d.iterdir() if p.suffix == suffix)


def sequence_names(root) -> List[str]:
    images = Path(root) / "JPEGImages"
    if not images.is_dir():
        raise DatasetLayoutError(f"{root}: missing JPEGImages/")
    return sorted(p.name for p in images.iterdir() if p.is_dir())


def load_sequence(root, name: str, with_proposals: bool = True, with_flow: bool = True,
                  with_gt: bool = True, feature_dim: int = DEFAULT_FEATURE_DIM,
                  max_frames: Optional[int] = None) -> VideoSample:
    root = Path(root)
    img_dir = root / "JPEGImages" / name
    if not img_dir.is_dir():
        raise DatasetLayoutError(f"missing {img_dir}")
    images = _frame_files(img_dir, ".jpg")
    if max_frames:
        images = images[:max_frames]
    stems = [p.stem for p in images]

    def files_for(sub, suffix, required):
        d = root / sub / name
        if not d.is_dir():
            if required:
                raise DatasetLayoutError(f"missing {d}")
            return None
        found = _frame_files(d, suffix)
        if max_frames:
            found = found[:max_frames]
        if [p.stem for p in found] != stems:
            raise AlignmentError(f"{name}: {len(found)} {sub} files do not align with "
                                 f"{len(stems)} frames")
        return found

    ann = files_for("Annotations", ".png", with_gt)
    flo = files_for("Flow", ".flo", with_flow) if with_flow else None
    prp = files_for("Proposals", ".jsonl", with_proposals) if with_proposals else None

    frames, proposals, gt = [], [], [] if ann else None
    for i, ip in enumerate(images):
        image = read_image(ip)
        flow = read_flo(flo[i]) if flo else np.zeros(image.shape[:2] + (2,), dtype=np.float32)
        if flow.shape[:2] != image.shape[:2]:
            raise AlignmentError(f"{name}/{ip.stem}: flow size {flow.shape[:2]} != image size")
        frames.append(Frame(image, flow))
        proposals.append(read_proposals(prp[i], image, feature_dim) if prp else [])
        if ann:
            lab = read_label_png(ann[i])
            if lab.shape != image.shape[:2]:
                raise AlignmentError(f"{name}/{ip.stem}: annotation size mismatch")
            gt.append(lab)
    n_inst = None
    if gt:
        n_inst = int(max(g.max() for g in gt))
    return VideoSample(frames, proposals, gt, name, num_instances=n_inst)


def load_dataset(root, with_proposals: bool = True, with_flow: bool = True,
                 with_gt: bool = True, feature_dim: int = DEFAULT_FEATURE_DIM,
                 max_frames: Optional[int] = None) -> List[VideoSample]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"{root} is not a directory")
    names = sequence_names(root)
    if with_gt and not (root / "Annotations").is_dir():
        raise DatasetLayoutError(f"{root}: missing Annotations/")
    return [load_sequence(root, n, with_proposals, with_flow, with_gt, feature_dim, max_frames)
            for n in names]


def write_sequence(root, video: VideoSample, with_feature: bool = True):
    root = Path(root)
    dirs = {k: root / k / video.name for k in ("JPEGImages", "Annotations", "Flow", "Proposals")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(video.frames):
        stem = f"{t:05d}"
        write_image(dirs["JPEGImages"] / f"{stem}.jpg", frame.image)
        write_flo(dirs["Flow"] / f"{stem}.flo", frame.flow)
        write_proposals(dirs["Proposals"] / f"{stem}.jsonl", video.proposals[t], with_feature)
        if video.gt is not None:
            write_label_png(dirs["Annotations"] / f"{stem}.png", video.gt[t])


def write_labelmaps(out_dir, name: str, labelmaps: Sequence[np.ndarray]):
    d = Path(out_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    for t, lab in enumerate(labelmaps):
        write_label_png(d / f"{t:05d}.png", lab)


def read_labelmaps(directory) -> List[np.ndarray]:
    d = Path(directory)
    if not d.is_dir():
        raise DatasetLayoutError(f"missing {d}")
    return [read_label_png(p) for p in _frame_files(d, ".png")]
