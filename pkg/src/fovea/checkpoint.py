"""Binary model checkpoints.

Single-file format, all values little-endian, layout documented in
docs/checkpoint-format.md. The writer goes through a temp file in the
same directory plus an atomic rename, so readers never observe a
half-written checkpoint. Loading then re-saving a checkpoint reproduces
the file byte for byte.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import FormatError
from .model import Model, ModelConfig

MAGIC = b"FVNT"
VERSION = 1

_ACTIVATION_CODES = {"relu": 0, "leaky_relu": 1, "elu": 2}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


@dataclass
class CheckpointData:
    model: Model
    steps: int
    seed: int
    adam: nn.AdamState | None


def _pack_config(cfg: ModelConfig) -> bytes:
    return struct.pack(
        "<8IIBddd",
        *cfg.filter_sizes,
        cfg.in_channels,
        _ACTIVATION_CODES[cfg.activation],
        cfg.leaky_slope,
        cfg.elu_alpha,
        cfg.dropout_rate,
    )


def _f32_le(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(path, net: Model, steps: int, seed: int,
                    adam: nn.AdamState | None = None) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_config(net.config)]
    parts.append(struct.pack("<QQ", steps, seed))
    parts.append(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        parts.append(struct.pack("<4I", *layer.weights.shape))
        parts.append(_f32_le(layer.weights))
        parts.append(struct.pack("<I", layer.bias.size))
        parts.append(_f32_le(layer.bias))
    if adam is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<4dQQ", adam.lr, adam.beta1, adam.beta2,
                                 adam.epsilon, adam.step, adam.m.size))
        parts.append(_f32_le(adam.m))
        parts.append(_f32_le(adam.v))
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(parts))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise FormatError(f"truncated checkpoint: needed {size} bytes at offset {self.pos}")
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out

    def take_f32(self, count: int) -> np.ndarray:
        size = 4 * count
        if self.pos + size > len(self.blob):
            raise FormatError(f"truncated checkpoint: needed {size} bytes at offset {self.pos}")
        arr = np.frombuffer(self.blob, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        return arr.astype(np.float32)  # copy, drop the read-only buffer view


def load_checkpoint(path) -> CheckpointData:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    r = _Reader(blob)
    r.pos = 4
    (version,) = r.take("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    raw = r.take("<8IIBddd")
    act_code = raw[9]
    if act_code not in _ACTIVATION_NAMES:
        raise FormatError(f"unknown activation code {act_code}")
    cfg = ModelConfig(
        filter_sizes=raw[:8],
        in_channels=raw[8],
        activation=_ACTIVATION_NAMES[act_code],
        leaky_slope=raw[10],
        elu_alpha=raw[11],
        dropout_rate=raw[12],
    )
    steps, seed = r.take("<QQ")
    (n_layers,) = r.take("<I")
    expected = cfg.layer_shapes()
    if n_layers != len(expected):
        raise FormatError(f"checkpoint has {n_layers} layers, config implies {len(expected)}")
    layers = []
    for shape in expected:
        dims = r.take("<4I")
        if dims != shape:
            raise FormatError(f"layer dims {dims} do not match config shape {shape}")
        w = r.take_f32(int(np.prod(dims))).reshape(dims)
        (bias_len,) = r.take("<I")
        if bias_len != dims[0]:
            raise FormatError(f"bias length {bias_len} does not match {dims[0]} filters")
        b = r.take_f32(bias_len)
        layers.append(nn.ConvLayer(w, b))
    (has_adam,) = r.take("<B")
    adam = None
    if has_adam:
        lr, beta1, beta2, epsilon, step, n = r.take("<4dQQ")
        m = r.take_f32(n)
        v = r.take_f32(n)
        adam = nn.AdamState(lr=lr, m=m, v=v, beta1=beta1, beta2=beta2,
                            epsilon=epsilon, step=step)
    if r.pos != len(blob):
        raise FormatError(f"{len(blob) - r.pos} trailing bytes after checkpoint payload")
    return CheckpointData(Model(cfg, layers), steps, seed, adam)
