import numpy as np
import pytest

from propgroup import _fallback, kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["compiled", "python"])
def impl(request):
    if request.param == "compiled":
        if kernels.BACKEND != "cython":
            pytest.skip("compiled kernels not built")
        from propgroup import _kernels
        return _kernels
    return _fallback


def random_mask(rng, max_side=64, min_side=1):
    h, w = (int(v) for v in rng.integers(min_side, max_side + 1, size=2))
    return rng.random((h, w)) < rng.uniform(0.05, 0.95)


def blob_mask(rng, h, w):
    """Spatially coherent random mask (rectangle union)."""
    m = np.zeros((h, w), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        y0, x0 = int(rng.integers(0, h)), int(rng.integers(0, w))
        m[y0:y0 + int(rng.integers(1, h + 1)), x0:x0 + int(rng.integers(1, w + 1))] = True
    return m


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
