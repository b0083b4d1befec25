"""Parameter collections and the versioned checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a JSON
header (config echo, seeds, array table), then the raw little-endian arrays in
header order. Serialisation is byte-for-byte deterministic.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from .config import ModelConfig, to_dict
from .errors import ConfigurationError, VersionError
from .models import AssignmentNet, SelectionNet

MAGIC = b"PGCKPT\x00\x01"
FORMAT_VERSION = 1


@dataclass
class PolicyParams:
    arrays: "OrderedDict[str, np.ndarray]"
    init_seed: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_nets(cls, sel: Optional[SelectionNet], asg: Optional[AssignmentNet],
                  init_seed: int = 0, **meta) -> "PolicyParams":
        arrays = OrderedDict()
        for prefix, net in (("selection", sel), ("assignment", asg)):
            if net is None:
                continue
            for name, t in net.state_dict().items():
                arrays[f"{prefix}.{name}"] = t.detach().cpu().numpy().copy()
        return cls(arrays, init_seed, dict(meta))

    def load_into(self, sel: Optional[SelectionNet], asg: Optional[AssignmentNet]):
        for prefix, net in (("selection", sel), ("assignment", asg)):
            if net is None:
                continue
            state = OrderedDict((k[len(prefix) + 1:], torch.from_numpy(v.copy()))
                                for k, v in self.arrays.items() if k.startswith(prefix + "."))
            try:
                net.load_state_dict(state)
            except RuntimeError as exc:
                raise VersionError(f"parameters do not fit the {prefix} network: {exc}") from exc

    def count(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def to_bytes(self) -> bytes:
        table, blobs, offset = [], [], 0
        for name, arr in self.arrays.items():
            a = np.ascontiguousarray(arr)
            a = a.astype(a.dtype.newbyteorder("<"), copy=False)
            raw = a.tobytes()
            table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                          "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
        header = json.dumps({"format_version": FORMAT_VERSION, "init_seed": self.init_seed,
                             "meta": self.meta, "arrays": table},
                            sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PolicyParams":
        if data[:8] != MAGIC:
            raise VersionError("not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<IQ", data[8:20])
        if version != FORMAT_VERSION:
            raise VersionError(f"checkpoint format {version}, expected {FORMAT_VERSION}")
        header = json.loads(data[20:20 + hlen])
        body = memoryview(data)[20 + hlen:]
        arrays = OrderedDict()
        for rec in header["arrays"]:
            raw = body[rec["offset"]:rec["offset"] + rec["nbytes"]]
            arrays[rec["name"]] = np.frombuffer(raw, dtype=np.dtype(rec["dtype"])) \
                .reshape(rec["shape"]).copy()
        return cls(arrays, int(header["init_seed"]), header.get("meta", {}))


def save_checkpoint(path, sel: SelectionNet, asg: AssignmentNet, init_seed: int = 0,
                    train_seed: int = 0, **extra) -> bytes:
    params = PolicyParams.from_nets(sel, asg, init_seed,
                                    config=to_dict(asg.cfg), temporal=bool(asg.temporal),
                                    train_seed=train_seed, **extra)
    data = params.to_bytes()
    Path(path).write_bytes(data)
    return data


def load_checkpoint(path, expected: Optional[ModelConfig] = None):
    """Rebuild both networks. A config that differs from ``expected`` is an error."""
    from .models import build_nets

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from exc
    params = PolicyParams.from_bytes(data)
    try:
        cfg = ModelConfig(**params.meta["config"])
    except (KeyError, TypeError) as exc:
        raise VersionError(f"checkpoint {path} has no usable config echo") from exc
    if expected is not None and to_dict(expected) != to_dict(cfg):
        raise VersionError(f"checkpoint config {to_dict(cfg)} does not match {to_dict(expected)}")
    sel, asg = build_nets(cfg, params.init_seed, temporal=params.meta.get("temporal", True))
    params.load_into(sel, asg)
    sel.eval()
    asg.eval()
    return sel, asg, params
