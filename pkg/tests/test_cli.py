import dataclasses
import hashlib

import numpy as np
import pytest
from PIL import Image

from propgroup import cli
from propgroup.checkpoint import load_checkpoint
from propgroup.config import load_config
from propgroup.dataio import load_dataset, read_labelmaps, write_labelmaps
from propgroup.errors import NumericalError
from propgroup.models import build_nets
from propgroup.pipeline import segment_model


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("generate-data", "--config", "smoke", "--out", root / "data") == 0
    assert run("pretrain", "--config", "smoke", "--data", root / "data" / "train",
               "--out", root / "pre") == 0
    return root


def test_generate_data_is_deterministic(workspace, tmp_path):
    assert run("generate-data", "--config", "smoke", "--split", "test", "--out", tmp_path) == 0
    for sub in ("Annotations", "Flow", "Proposals", "JPEGImages"):
        a = sorted((workspace / "data" / "test" / sub).rglob("*.*"))
        b = sorted((tmp_path / "test" / sub).rglob("*.*"))
        assert [p.name for p in a] == [p.name for p in b] and a
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()


def test_make_oracle(workspace):
    assert run("make-oracle", "--config", "smoke", "--data", workspace / "data" / "test",
               "--out", workspace / "oracle") == 0
    assert len(list((workspace / "oracle").glob("*.json"))) == 2
    assert run("evaluate", "--pred", workspace / "oracle" / "labels",
               "--gt", workspace / "data" / "test") == 0


def test_infer_matches_in_memory_result(workspace):
    ckpt = workspace / "pre" / "supervised.ckpt"
    out = workspace / "pred"
    assert run("infer", "--config", "smoke", "--checkpoint", ckpt,
               "--data", workspace / "data" / "test", "--out", out) == 0
    sel, asg, _ = load_checkpoint(ckpt)
    for v in load_dataset(workspace / "data" / "test", feature_dim=asg.cfg.feature_dim):
        maps = segment_model(v, sel, asg)
        written = read_labelmaps(out / v.name)
        assert len(written) == len(maps)
        for a, b in zip(written, maps):
            assert np.array_equal(a, b)


def test_zero_selected_proposals_give_background(workspace, tmp_path):
    cfg = load_config("smoke")
    sel, asg, _ = load_checkpoint(workspace / "pre" / "supervised.ckpt")
    sel.cfg = dataclasses.replace(sel.cfg, select_threshold=1.0)
    v = load_dataset(workspace / "data" / "test", feature_dim=cfg.model.feature_dim)[0]
    maps = cli.infer_video(sel, asg, v, tmp_path)
    assert all(not m.any() for m in maps)
    assert all(not m.any() for m in read_labelmaps(tmp_path / v.name))


def test_evaluate_perfect_and_empty(workspace, tmp_path, capsys):
    gt_root = workspace / "data" / "test"
    assert run("evaluate", "--pred", gt_root / "Annotations", "--gt", gt_root,
               "--out", tmp_path / "perfect") == 0
    last = (tmp_path / "perfect" / "report.csv").read_text().strip().splitlines()[-1]
    assert last.split(",")[1] == "100.0"
    for seq in (gt_root / "Annotations").iterdir():
        maps = read_labelmaps(seq)
        write_labelmaps(tmp_path / "empty", seq.name, [np.zeros_like(m) for m in maps])
    assert run("evaluate", "--pred", tmp_path / "empty", "--gt", gt_root,
               "--out", tmp_path / "zero") == 0
    last = (tmp_path / "zero" / "report.csv").read_text().strip().splitlines()[-1]
    assert last.split(",")[1] == "0.0"


def test_evaluate_sequence_mismatch_exit_code(workspace, tmp_path):
    gt_root = workspace / "data" / "test"
    seq = sorted((gt_root / "Annotations").iterdir())[0]
    write_labelmaps(tmp_path / "pred", seq.name, read_labelmaps(seq))
    assert run("evaluate", "--pred", tmp_path / "pred", "--gt", gt_root) == 2


def test_config_errors_exit_3(workspace, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {input_size: 8}\n")
    assert run("generate-data", "--config", bad, "--out", tmp_path) == 3
    assert run("generate-data", "--config", tmp_path / "missing.yaml", "--out", tmp_path) == 3
    # checkpoint built for the smoke model, loaded under the default model config
    other = tmp_path / "other.yaml"
    other.write_text("model: {input_size: 32}\n")
    assert run("infer", "--config", other, "--checkpoint", workspace / "pre" / "supervised.ckpt",
               "--data", workspace / "data" / "test", "--out", tmp_path / "p") == 3


def test_missing_data_exit_2(tmp_path):
    assert run("pretrain", "--config", "smoke", "--data", tmp_path / "nothing",
               "--out", tmp_path) == 2


def test_numerical_error_exit_4(monkeypatch, tmp_path):
    def boom(args, cfg):
        raise NumericalError("nan loss", {"loss": float("nan")})
    monkeypatch.setattr(cli, "cmd_ablate", boom)
    assert run("ablate", "--config", "smoke", "--out", tmp_path) == 4


def test_train_rl(workspace):
    assert run("train-rl", "--config", "smoke", "--data", workspace / "data" / "train",
               "--val", workspace / "data" / "val", "--checkpoint",
               workspace / "pre" / "supervised.ckpt", "--out", workspace / "rl") == 0
    assert (workspace / "rl" / "rl.ckpt").exists()
    assert (workspace / "rl" / "rl_curve.csv").exists()
    assert len((workspace / "rl" / "rl_log.jsonl").read_text().splitlines()) == 2


def test_render_overlay_panels(workspace, tmp_path):
    data = workspace / "data" / "test"
    assert run("render-overlay", "--config", "smoke", "--data", data,
               "--pred", data / "Annotations", "--out", tmp_path) == 0
    seq = sorted((data / "Annotations").iterdir())[0]
    h, w = read_labelmaps(seq)[0].shape
    img = Image.open(sorted((tmp_path / seq.name).iterdir())[0])
    assert img.size == (4 * w, h)


def test_ablate_emits_all_rows(tmp_path, capsys):
    assert run("ablate", "--config", "smoke", "--out", tmp_path) == 0
    rows = [l.split(",")[0] for l in (tmp_path / "ablation.csv").read_text().splitlines()[1:]]
    assert rows == ["Raw proposals", "S", "S+A", "S+A+T", "S+A+T+RL", "Oracle"]
    assert (tmp_path / "seed0" / "rl.ckpt").exists()
