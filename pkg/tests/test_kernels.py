import numpy as np

from propgroup import _fallback, kernels

from conftest import random_mask
from reference import boundary_pixels_bf, rle_bf


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_rle_runs_match_reference(impl, rng):
    for _ in range(300):
        m = random_mask(rng, 20)
        runs = kernels.rle_runs(m, impl)
        assert " ".join(map(str, runs)) == rle_bf(m)
        assert np.array_equal(kernels.rle_fill(runs, m.size, impl).reshape(m.shape), m)


def test_boundary_matches_reference(impl, rng):
    for _ in range(200):
        m = random_mask(rng, 16)
        expect = np.zeros_like(m)
        for y, x in boundary_pixels_bf(m):
            expect[y, x] = True
        assert np.array_equal(kernels.boundary(m, impl), expect)


def test_count_within_implementations_agree(rng):
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(1, 30, size=2))
        a = rng.random((h, w)) < 0.2
        b = rng.random((h, w)) < 0.2
        tol = int(rng.integers(1, 5))
        want = 0
        pts = np.argwhere(b)
        for y, x in np.argwhere(a):
            if len(pts) and np.min(np.hypot(pts[:, 0] - y, pts[:, 1] - x)) <= tol:
                want += 1
        assert kernels.count_within(a, b, tol, _fallback) == want
        if kernels.BACKEND == "cython":
            assert kernels.count_within(a, b, tol) == want


def test_contingency(impl, rng):
    a = rng.integers(0, 4, size=(9, 7))
    b = rng.integers(0, 3, size=(9, 7))
    c = kernels.contingency(a, b, 3, 2, impl)
    for i in range(4):
        for j in range(3):
            assert c[i, j] == np.count_nonzero((a == i) & (b == j))
