"""Mask kernels with a compiled fast path.

The Cython extension ``propgroup._kernels`` is used when it was built; otherwise
(or when ``PROPGROUP_PURE_PYTHON=1``) the numpy versions in ``_fallback`` are
used. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("PROPGROUP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def _u8(a):
    return np.ascontiguousarray(a, dtype=np.uint8)


def rle_runs(mask, impl=None):
    impl = impl or _impl
    flat = _u8(np.asarray(mask).ravel())
    if flat.size == 0:
        return np.zeros(1, dtype=np.int64)
    return impl.rle_runs(flat)


def rle_fill(runs, n, impl=None):
    impl = impl or _impl
    return impl.rle_fill(np.ascontiguousarray(runs, dtype=np.int64), n).astype(bool)


def boundary(mask, impl=None):
    impl = impl or _impl
    return np.asarray(impl.boundary(_u8(mask)), dtype=bool)


def count_within(src, dst, tol, impl=None):
    """Number of ``src`` pixels lying within Euclidean distance ``tol`` of a ``dst`` pixel."""
    impl = impl or _impl
    return int(impl.count_within(_u8(src), _u8(dst), int(tol)))


def contingency(a, b, na, nb, impl=None):
    """Joint histogram of two integer label maps with labels in ``0..na`` and ``0..nb``."""
    impl = impl or _impl
    a = np.ascontiguousarray(np.asarray(a).ravel(), dtype=np.int64)
    b = np.ascontiguousarray(np.asarray(b).ravel(), dtype=np.int64)
    return impl.contingency(a, b, int(na), int(nb))
