"""Binary checkpoint format.

Layout::

    b"CKV1" | u64 little-endian header length | UTF-8 JSON header | payload

The header carries ``version``, ``arch``, ``epoch``, ``metrics``,
``channel_means`` and a ``tensors`` index of ``{name, shape, offset}``
entries; offsets are byte offsets into the payload, which stores every tensor
as little-endian float32 in index order.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..architectures import ArchitectureSpec, ModelInstance, build

MAGIC = b"CKV1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")
_F32 = np.dtype("<f4")


class CheckpointError(Exception):
    """Base class for checkpoint failures."""


class NotACheckpointError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CorruptHeaderError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    arch: ArchitectureSpec
    tensors: "OrderedDict[str, np.ndarray]"
    epoch: int = 0
    metrics: dict = field(default_factory=dict)
    channel_means: list[float] | None = None
    normalization: dict | None = None
    class_names: list[str] | None = None
    optimizer_step: int | None = None
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: ModelInstance, epoch: int = 0, metrics: dict | None = None,
                   normalization: dict | None = None, class_names=None, optimizer=None) -> "Checkpoint":
        """Snapshot (copy) of the model state, optionally with Adam moments."""
        tensors = OrderedDict((n, np.array(a, dtype=np.float32)) for n, a in model.state_dict().items())
        step = None
        if optimizer is not None:
            step = optimizer.state.t
            for n, m in optimizer.state.m.items():
                tensors[f"optimizer.m.{n}"] = np.array(m, dtype=np.float32)
            for n, v in optimizer.state.v.items():
                tensors[f"optimizer.v.{n}"] = np.array(v, dtype=np.float32)
        means = normalization.get("mean_rgb") if normalization else None
        return cls(model.spec, tensors, epoch, dict(metrics or {}), means, normalization,
                   list(class_names) if class_names is not None else None, step)

    def model_state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, a) for n, a in self.tensors.items() if not n.startswith("optimizer."))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    index, offset = [], 0
    for name, arr in ckpt.tensors.items():
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 4
    header = {
        "version": ckpt.version,
        "arch": ckpt.arch.to_dict(),
        "epoch": ckpt.epoch,
        "metrics": ckpt.metrics,
        "channel_means": ckpt.channel_means,
        "normalization": ckpt.normalization,
        "class_names": ckpt.class_names,
        "optimizer_step": ckpt.optimizer_step,
        "tensors": index,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(_LEN.pack(len(raw)))
        f.write(raw)
        for arr in ckpt.tensors.values():
            f.write(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC):
        raise TruncatedCheckpointError(f"{path}: file too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise NotACheckpointError(f"{path}: not a checkpoint (bad magic {data[:4]!r})")
    if len(data) < 4 + _LEN.size:
        raise TruncatedCheckpointError(f"{path}: truncated before header length")
    (hlen,) = _LEN.unpack_from(data, 4)
    start = 4 + _LEN.size
    if start + hlen > len(data):
        raise TruncatedCheckpointError(f"{path}: header claims {hlen} bytes, file has {len(data) - start}")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        version = header["version"]
        index = header["tensors"]
        arch_dict = header["arch"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: corrupt checkpoint header ({exc})") from exc
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        arch = ArchitectureSpec.from_dict(arch_dict)
    except (TypeError, ValueError) as exc:
        raise CorruptHeaderError(f"{path}: invalid architecture in header ({exc})") from exc

    payload = memoryview(data)[start + hlen:]
    tensors = OrderedDict()
    for item in index:
        shape = tuple(int(s) for s in item["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        off = int(item["offset"])
        if off + 4 * count > len(payload):
            raise TruncatedCheckpointError(f"{path}: payload truncated inside tensor {item['name']!r}")
        tensors[item["name"]] = np.frombuffer(payload, dtype=_F32, count=count, offset=off) \
            .reshape(shape).astype(np.float32)
    return Checkpoint(arch, tensors, header.get("epoch", 0), header.get("metrics") or {},
                      header.get("channel_means"), header.get("normalization"),
                      header.get("class_names"), header.get("optimizer_step"), version)


def restore_model(ckpt: Checkpoint, seed: int = 0) -> ModelInstance:
    """Build the checkpoint's architecture and load its tensors (eval mode)."""
    model = build(ckpt.arch, seed)
    try:
        model.load_state_dict(ckpt.model_state())
    except (KeyError, ValueError) as exc:
        raise CheckpointShapeError(f"checkpoint does not match its {ckpt.arch.family} spec: {exc}") from exc
    return model.eval()
