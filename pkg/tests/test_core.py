import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from propgroup.core import (BBox, SegTensor, project_to_labelmap, rle_decode, rle_encode)
from propgroup.errors import InvariantError, MalformedEncodingError

from conftest import random_mask
from reference import rle_bf


def test_rle_examples():
    assert rle_encode(np.zeros((2, 2), bool)) == "4"
    assert rle_encode(np.ones((2, 2), bool)) == "0 4"
    m = np.zeros((2, 2), bool)
    m[0, 1] = True
    assert rle_encode(m) == "1 1 2"


def test_rle_decode_examples():
    assert not rle_decode("4", 2, 2).any()
    assert rle_decode("0 4", 2, 2).all()
    with pytest.raises(MalformedEncodingError):
        rle_decode("3", 2, 2)
    with pytest.raises(MalformedEncodingError):
        rle_decode("1 x", 2, 2)


def test_rle_roundtrip_1000_random_masks(rng):
    for _ in range(1000):
        m = random_mask(rng)
        s = rle_encode(m)
        assert s == rle_bf(m)
        assert np.array_equal(rle_decode(s, *m.shape), m)


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 24), st.integers(1, 24))))
def test_rle_roundtrip_property(m):
    runs = [int(r) for r in rle_encode(m).split()]
    assert sum(runs) == m.size
    assert all(r > 0 for r in runs[1:])
    assert np.array_equal(rle_decode(rle_encode(m), *m.shape), m)


def test_project_examples():
    seg = SegTensor.empty(4, 5, 10)
    assert not project_to_labelmap(seg).any()
    m = np.zeros((4, 5), bool)
    m[2, 3] = True
    lab = project_to_labelmap(seg.commit(m, 3))
    assert lab[2, 3] == 3 and lab.sum() == 3


def test_project_two_disjoint_masks_bruteforce(rng):
    a = np.zeros((6, 6), bool)
    b = np.zeros((6, 6), bool)
    a[:3, :3] = True
    b[4:, 2:] = True
    lab = project_to_labelmap(SegTensor.empty(6, 6, 4).commit(a, 1).commit(b, 2))
    for y in range(6):
        for x in range(6):
            assert lab[y, x] == (1 if a[y, x] else 2 if b[y, x] else 0)


def test_project_rejects_overlap():
    slots = np.zeros((2, 2, 3), bool)
    slots[0, 0, 0] = slots[0, 0, 1] = True
    with pytest.raises(InvariantError):
        project_to_labelmap(SegTensor(slots))


def test_projection_restricted_to_slot_matches(rng):
    for _ in range(50):
        seg = SegTensor.empty(12, 9, 5)
        for _ in range(6):
            seg = seg.commit(rng.random((12, 9)) < 0.3, int(rng.integers(1, 6)))
        assert seg.is_disjoint()
        lab = project_to_labelmap(seg)
        for k in range(1, 6):
            assert np.array_equal(lab == k, seg.slot(k))


def test_commit_earlier_wins():
    a = np.zeros((3, 3), bool)
    a[:2] = True
    b = np.zeros((3, 3), bool)
    b[1:] = True
    seg = SegTensor.empty(3, 3, 2).commit(a, 1).commit(b, 2)
    assert seg.slot(1)[1].all() and not seg.slot(2)[1].any()
    assert seg.slot(2)[2].all()
    assert seg.cursor == 2
    # adding to the same slot keeps its own pixels
    seg2 = seg.commit(b, 1)
    assert seg2.slot(1)[1].all() and not seg2.slot(1)[2].any()


def test_bbox_from_mask_and_expand():
    m = np.zeros((10, 10), bool)
    m[2:5, 3:9] = True
    b = BBox.from_mask(m)
    assert (b.x, b.y, b.w, b.h) == (3, 2, 6, 3)
    e = b.expanded(0.2, 10, 10)
    assert e.x == 2 and e.y == 1 and e.x + e.w == 10
