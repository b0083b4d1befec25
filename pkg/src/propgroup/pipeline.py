"""Video-level segmentation for every rung of the ablation ladder."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import SegTensor, VideoSample, project_to_labelmap
from .metrics import Report, evaluate_video
from .models import AssignmentNet, SelectionNet, assign_frame, select_proposals


def rank_labelmap(props, shape, k_max: int) -> np.ndarray:
    """Naive grouping: the j-th proposal of the frame becomes object j."""
    seg = SegTensor.empty(*shape, k_max)
    for j, p in enumerate(props[:k_max]):
        seg = seg.commit(p.mask, j + 1)
    return project_to_labelmap(seg)


def segment_raw(video: VideoSample, k_max: int) -> List[np.ndarray]:
    return [rank_labelmap(props, video.shape, k_max) for props in video.proposals]


def selected(video: VideoSample, sel: SelectionNet) -> List[list]:
    return [[props[i] for i in select_proposals(sel, frame, props)]
            for frame, props in zip(video.frames, video.proposals)]


def segment_selected(video: VideoSample, sel: SelectionNet, k_max: int) -> List[np.ndarray]:
    return [rank_labelmap(props, video.shape, k_max) for props in selected(video, sel)]


def segment_model(video: VideoSample, sel: SelectionNet, asg: AssignmentNet,
                  chosen: Optional[List[list]] = None) -> List[np.ndarray]:
    """Selection followed by argmax sequential assignment, frame by frame."""
    chosen = chosen if chosen is not None else selected(video, sel)
    k_max = asg.cfg.k_max
    prev = SegTensor.empty(*video.shape, k_max)
    out = []
    for frame, props in zip(video.frames, chosen):
        prev = assign_frame(asg, frame, props, prev, mode="argmax").seg
        out.append(project_to_labelmap(prev))
    return out


def evaluate(videos: Sequence[VideoSample], segs: Sequence[List[np.ndarray]],
             k_max: Optional[int] = None) -> Report:
    report = Report()
    for v, seg in zip(videos, segs):
        report.sequences.append(evaluate_video(seg, v.gt, n_gt=v.num_instances, k_max=k_max,
                                               name=v.name))
    return report
