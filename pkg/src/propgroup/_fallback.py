"""Pure numpy versions of the compiled mask kernels."""

import numpy as np
from scipy import ndimage


def rle_runs(flat):
    flat = np.asarray(flat, dtype=bool)
    # run boundaries, with a leading virtual background pixel
    padded = np.concatenate([[False], flat, [not flat[-1]] if flat.size else [True]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return np.diff(np.concatenate([[0], edges])).astype(np.int64)


def rle_fill(runs, n):
    runs = np.asarray(runs, dtype=np.int64)
    vals = np.arange(len(runs)) % 2
    return np.repeat(vals, runs).astype(np.uint8)[:n]


def boundary(m):
    m = np.asarray(m, dtype=bool)
    eroded = ndimage.binary_erosion(m, structure=ndimage.generate_binary_structure(2, 1),
                                    border_value=0)
    return m & ~eroded


def disk(tol):
    r = np.arange(-tol, tol + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= tol * tol


def count_within(src, dst, tol):
    src = np.asarray(src, dtype=bool)
    dst = np.asarray(dst, dtype=bool)
    if not src.any() or not dst.any():
        return 0
    grown = ndimage.binary_dilation(dst, structure=disk(tol))
    return int(np.count_nonzero(src & grown))


def contingency(a, b, na, nb):
    idx = np.asarray(a, dtype=np.int64) * (nb + 1) + np.asarray(b, dtype=np.int64)
    return np.bincount(idx, minlength=(na + 1) * (nb + 1)).reshape(na + 1, nb + 1)
