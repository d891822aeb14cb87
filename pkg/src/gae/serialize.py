"""Binary model container.

Layout::

    b"GAEMODEL"            8-byte magic
    u32 little-endian      format version
    u32 little-endian      header length in bytes
    header                 UTF-8 JSON (sorted keys): layer count, dims,
                           per-layer configs, graph recipe, objective kind
    payload                per layer: W_H, b_H, W_Q, b_Q as row-major
                           little-endian float64

The writer is deterministic, so identical models give identical bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autoencoder import LayerParams, TrainConfig
from .stack import GaeModel

MAGIC = b"GAEMODEL"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps(model: GaeModel) -> bytes:
    header = {
        "layers": len(model.layers),
        "dims": model.dims,
        "kind": model.kind,
        "graph_spec": model.graph_spec,
        "configs": [asdict(c) for c in model.configs],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    for p in model.layers:
        for a in (p.W_H, p.b_H, p.W_Q, p.b_Q):
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(raw: bytes) -> GaeModel:
    if raw[:8] != MAGIC:
        raise FormatError("not a GAE model file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version}")
    header = json.loads(raw[16:16 + hlen].decode())
    dims = header["dims"]
    if len(dims) != header["layers"] + 1:
        raise FormatError("header dims do not match layer count")
    pos = 16 + hlen
    layers = []

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape))
        end = pos + 8 * count
        if end > len(raw):
            raise FormatError("truncated model payload")
        arr = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).astype(float)
        pos = end
        return arr

    for m, l in zip(dims, dims[1:]):
        layers.append(LayerParams(take((l, m)), take((l,)), take((m, l)), take((m,))))
    if pos != len(raw):
        raise FormatError("trailing bytes after model payload")
    configs = tuple(TrainConfig(**c) for c in header.get("configs", []))
    return GaeModel(tuple(layers), configs, header.get("graph_spec", {}), header.get("kind", "gae"))


def save_model(model: GaeModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def load_model(path) -> GaeModel:
    return loads(Path(path).read_bytes())
