"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def iou_bf(a, b):
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            inter += bool(a[y, x]) and bool(b[y, x])
            union += bool(a[y, x]) or bool(b[y, x])
    return 1.0 if union == 0 else inter / union


def boundary_pixels_bf(m):
    h, w = m.shape
    out = []
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                    out.append((y, x))
                    break
    return out


def boundary_f_bf(pred, gt, tol):
    bp = boundary_pixels_bf(pred)
    bg = boundary_pixels_bf(gt)
    if not bp and not bg:
        return 1.0
    if not bp or not bg:
        return 0.0

    def matched(src, dst):
        # full pairwise distance matrix, in row blocks
        s = np.asarray(src, dtype=float)
        d = np.asarray(dst, dtype=float)
        n = 0
        for lo in range(0, len(s), 512):
            blk = s[lo:lo + 512]
            dist = np.hypot(blk[:, None, 0] - d[None, :, 0], blk[:, None, 1] - d[None, :, 1])
            n += int(np.count_nonzero(dist.min(axis=1) <= tol))
        return n

    precision = matched(bp, bg) / len(bp)
    recall = matched(bg, bp) / len(bg)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rle_bf(mask):
    runs, cur, n = [], 0, 0
    for v in np.asarray(mask).ravel():
        v = int(bool(v))
        if v != cur:
            runs.append(n)
            n, cur = 0, v
        n += 1
    runs.append(n)
    return " ".join(map(str, runs))


def exhaustive_assignment(masks, gt, n_instances):
    """Best mean-IoU labelling over all (instance or skip) choices per proposal,
    committing in the given order with earlier pixels winning."""
    best, best_choice = -1.0, None
    for choice in itertools.product(range(n_instances + 1), repeat=len(masks)):
        owner = np.zeros(gt.shape, dtype=int)
        for m, k in zip(masks, choice):
            if k:
                owner[(owner == 0) & m] = k
        score = np.mean([iou_bf(owner == k, gt == k) for k in range(1, n_instances + 1)])
        if score > best + 1e-12:
            best, best_choice = score, choice
    return best, best_choice


def exact_policy_gradient_bandit(theta, rewards):
    """d/dtheta of sum_a softmax(theta)_a r_a."""
    p = np.exp(theta - theta.max())
    p /= p.sum()
    expected = float(p @ rewards)
    return p * (rewards - expected)
