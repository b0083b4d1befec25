import json
import shutil

import numpy as np
import pytest
import torch

from propgroup.checkpoint import MAGIC, PolicyParams, load_checkpoint, save_checkpoint
from propgroup.config import ModelConfig
from propgroup.core import BBox, Proposal
from propgroup.dataio import (load_dataset, read_flo, read_label_png, read_labelmaps,
                              read_proposals, write_flo, write_label_png, write_labelmaps,
                              write_proposals, write_sequence)
from propgroup.errors import AlignmentError, DatasetLayoutError, InputError, VersionError
from propgroup.models import build_nets
from propgroup.synthdata import ProposalNoise, generate_split

SMALL = ModelConfig(input_size=16, feature_dim=256)


def test_flo_roundtrip(tmp_path, rng):
    flow = rng.normal(size=(7, 9, 2)).astype(np.float32)
    write_flo(tmp_path / "a.flo", flow)
    raw = (tmp_path / "a.flo").read_bytes()
    assert raw[:4] == b"PIEH"
    assert np.array_equal(read_flo(tmp_path / "a.flo"), flow)


def test_flo_rejects_bad_magic(tmp_path):
    (tmp_path / "b.flo").write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(InputError):
        read_flo(tmp_path / "b.flo")


def test_label_png_roundtrip(tmp_path, rng):
    lab = rng.integers(0, 6, size=(11, 13))
    write_label_png(tmp_path / "l.png", lab)
    assert np.array_equal(read_label_png(tmp_path / "l.png"), lab)
    write_labelmaps(tmp_path / "out", "seq", [lab, lab[::-1]])
    maps = read_labelmaps(tmp_path / "out" / "seq")
    assert len(maps) == 2 and np.array_equal(maps[1], lab[::-1])


def test_low_confidence_proposals_are_dropped(tmp_path):
    image = np.zeros((8, 8, 3), np.float32)
    m = np.zeros((8, 8), bool)
    m[2:5, 2:5] = True
    props = [Proposal(m, BBox.from_mask(m), np.zeros(256, np.float32), s) for s in (0.04, 0.9)]
    write_proposals(tmp_path / "p.jsonl", props, with_feature=False)
    out = read_proposals(tmp_path / "p.jsonl", image)
    assert [p.confidence for p in out] == [0.9]
    assert out[0].feature.shape == (256,)


def test_bad_proposal_record(tmp_path):
    (tmp_path / "p.jsonl").write_text(json.dumps({"bbox": [0, 0, 1, 1], "score": 0.5,
                                                  "rle": "3 x"}) + "\n")
    with pytest.raises(InputError):
        read_proposals(tmp_path / "p.jsonl", np.zeros((2, 2, 3), np.float32))


@pytest.fixture
def mini_davis(tmp_path):
    videos = generate_split(2, 7, ProposalNoise(), frames=4)
    for v in videos:
        write_sequence(tmp_path / "davis", v)
    return tmp_path / "davis", videos


def test_dataset_roundtrip(mini_davis):
    root, videos = mini_davis
    loaded = load_dataset(root)
    assert [v.name for v in loaded] == sorted(v.name for v in videos)
    by_name = {v.name: v for v in videos}
    for v in loaded:
        ref = by_name[v.name]
        assert len(v) == len(ref)
        assert v.num_instances == ref.num_instances
        for a, b in zip(v.gt, ref.gt):
            assert np.array_equal(a, b)
        for fa, fb in zip(v.frames, ref.frames):
            assert np.allclose(fa.flow, fb.flow)
            assert np.abs(fa.image - fb.image).mean() < 0.05
        for pa, pb in zip(v.proposals, ref.proposals):
            kept = [p for p in pb if p.confidence >= 0.05]
            assert len(pa) == len(kept)
            for x, y in zip(pa, kept):
                assert np.array_equal(x.mask, y.mask)


def test_misaligned_flow_raises(mini_davis):
    root, videos = mini_davis
    name = sorted(v.name for v in videos)[0]
    flows = sorted((root / "Flow" / name).iterdir())
    flows[-1].unlink()
    with pytest.raises(AlignmentError):
        load_dataset(root)


def test_missing_layout_raises(tmp_path):
    with pytest.raises(DatasetLayoutError):
        load_dataset(tmp_path)


def test_checkpoint_roundtrip_is_exact(tmp_path):
    sel, asg = build_nets(SMALL, seed=3)
    data = save_checkpoint(tmp_path / "m.ckpt", sel, asg, init_seed=3, train_seed=5)
    assert data.startswith(MAGIC)
    sel2, asg2, params = load_checkpoint(tmp_path / "m.ckpt", expected=SMALL)
    for a, b in ((sel, sel2), (asg, asg2)):
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb and torch.equal(va, vb)
    assert params.meta["train_seed"] == 5
    # deterministic bytes
    again = save_checkpoint(tmp_path / "n.ckpt", sel2, asg2, init_seed=3, train_seed=5)
    assert again == data


def test_checkpoint_config_mismatch(tmp_path):
    sel, asg = build_nets(SMALL, seed=0)
    save_checkpoint(tmp_path / "m.ckpt", sel, asg)
    with pytest.raises(VersionError):
        load_checkpoint(tmp_path / "m.ckpt", expected=ModelConfig(input_size=32))


def test_checkpoint_bad_magic():
    with pytest.raises(VersionError):
        PolicyParams.from_bytes(b"NOTACKPT" + bytes(16))
