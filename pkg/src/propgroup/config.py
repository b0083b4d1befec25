"""Run configuration: dataclasses plus YAML loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from .errors import ConfigurationError
from .synthdata import ProposalNoise

PRESET_DIR = Path(__file__).parent / "presets"


@dataclass
class ModelConfig:
    k_max: int = 10
    feature_dim: int = 256
    input_size: int = 256
    widths: Tuple[int, ...] = (16, 16, 32, 32, 64, 64, 128, 128, 128)
    head: Tuple[int, ...] = (256, 128, 64, 32)
    crop_margin: float = 0.2
    # pixels/frame that map to unit input activation
    flow_scale: float = 4.0
    select_threshold: float = 0.5

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.head = tuple(int(w) for w in self.head)
        if len(self.widths) != 9:
            raise ConfigurationError("encoder needs exactly 9 conv widths")
        if len(self.head) != 4:
            raise ConfigurationError("head needs 4 hidden widths (5 linear layers)")
        if self.input_size < 16:
            raise ConfigurationError("input_size must be >= 16 for 4 pooling stages")


@dataclass
class PretrainConfig:
    lr: float = 1e-4
    batch: int = 16
    epochs: int = 30
    flip: bool = True
    seed: int = 0


@dataclass
class RLConfig:
    gamma: float = 0.99
    lr: float = 1e-4
    batch: int = 4
    iters: int = 200
    baseline: bool = True
    # "ema": moving average of returns per (episode, frame);
    # "greedy": returns of the argmax rollout on the same episode
    baseline_mode: str = "ema"
    baseline_decay: float = 0.9
    sample_temperature: float = 1.0
    optimizer: str = "adam"
    eval_every: int = 10
    max_frames: Optional[int] = None
    # train on randomly mirrored copies of the episodes
    flip: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError("gamma must be in [0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.baseline_mode not in ("ema", "greedy"):
            raise ConfigurationError(f"unknown baseline mode {self.baseline_mode!r}")
        if self.batch < 1:
            raise ConfigurationError("batch must be >= 1")


@dataclass
class SplitConfig:
    videos: int = 20
    seed: int = 0
    num_objects: Tuple[int, int] = (2, 4)
    num_distractors: Tuple[int, int] = (1, 3)
    frames: int = 24
    resolution: Tuple[int, int] = (64, 64)
    speed: int = 2
    direction_change_prob: float = 0.05
    object_size: Tuple[int, int] = (10, 18)
    noise: ProposalNoise = field(default_factory=ProposalNoise)

    def scene_kwargs(self) -> Dict[str, Any]:
        return dict(num_objects=tuple(self.num_objects), num_distractors=tuple(self.num_distractors),
                    frames=self.frames, resolution=tuple(self.resolution), speed=self.speed,
                    direction_change_prob=self.direction_change_prob,
                    object_size=tuple(self.object_size))


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    splits: Dict[str, SplitConfig] = field(default_factory=lambda: {
        "train": SplitConfig(20, 1000), "val": SplitConfig(10, 2000), "test": SplitConfig(10, 3000)})
    device: str = "cpu"


def _build(cls, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{cls.__name__} section must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(data)
    if cls is SplitConfig and "noise" in kwargs:
        kwargs["noise"] = _build(ProposalNoise, kwargs["noise"])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def from_dict(data: Dict[str, Any]) -> RunConfig:
    data = dict(data or {})
    known = {"model", "pretrain", "rl", "splits", "device"}
    if set(data) - known:
        raise ConfigurationError(f"unknown config sections: {sorted(set(data) - known)}")
    cfg = RunConfig(model=_build(ModelConfig, data.get("model")),
                    pretrain=_build(PretrainConfig, data.get("pretrain")),
                    rl=_build(RLConfig, data.get("rl")),
                    device=data.get("device", "cpu"))
    if "splits" in data:
        cfg.splits = {name: _build(SplitConfig, s) for name, s in data["splits"].items()}
    return cfg


def load_config(path) -> RunConfig:
    """Load a YAML config; a bare name like ``desk`` picks a bundled preset."""
    p = Path(path)
    if not p.exists() and (PRESET_DIR / f"{path}.yaml").exists():
        p = PRESET_DIR / f"{path}.yaml"
    try:
        data = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
    return from_dict(data)


def to_dict(obj) -> Dict[str, Any]:
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, (tuple, list)):
            return [conv(x) for x in v]
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return v
    return conv(obj)
