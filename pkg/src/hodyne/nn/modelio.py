"""QNN1 model files: magic, version, layer-spec table, then raw parameters.

Layout: ``QNN1`` | u32 format version | u32 header length | UTF-8 JSON header
(input shape + layer table) | little-endian float64 parameter arrays in
declaration order (weights then bias per parameterized layer).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .._io import atomic_write_bytes
from . import layers as L
from .network import Network, infer_shapes, init_params

_MAGIC = b"QNN1"
_VERSION = 1

_SPEC_CODECS = {
    "conv2d": (
        L.Conv2d,
        lambda s: {"kernel": list(s.kernel), "out_maps": s.out_maps, "stride": s.stride},
        lambda d: L.Conv2d(tuple(d["kernel"]), d["out_maps"], d["stride"]),
    ),
    "tconv2d": (
        L.TransposeConv2d,
        lambda s: {"kernel": list(s.kernel), "out_maps": s.out_maps, "stride": s.stride},
        lambda d: L.TransposeConv2d(tuple(d["kernel"]), d["out_maps"], d["stride"]),
    ),
    "maxpool2d": (
        L.MaxPool2d,
        lambda s: {"kernel": list(s.kernel), "stride": s.stride},
        lambda d: L.MaxPool2d(tuple(d["kernel"]), d["stride"]),
    ),
    "dense": (L.Dense, lambda s: {"out_units": s.out_units}, lambda d: L.Dense(d["out_units"])),
    "dropout": (L.Dropout, lambda s: {"drop_rate": s.drop_rate}, lambda d: L.Dropout(d["drop_rate"])),
    "relu": (L.Relu, lambda s: {}, lambda d: L.Relu()),
    "linear": (L.Linear, lambda s: {}, lambda d: L.Linear()),
    "reshape": (L.Reshape, lambda s: {"shape": list(s.shape)}, lambda d: L.Reshape(tuple(d["shape"]))),
}

_TYPE_NAMES = {cls: name for name, (cls, _, _) in _SPEC_CODECS.items()}


def _spec_to_dict(spec) -> dict:
    name = _TYPE_NAMES[type(spec)]
    d = _SPEC_CODECS[name][1](spec)
    d["type"] = name
    return d


def _spec_from_dict(d: dict):
    d = dict(d)
    name = d.pop("type")
    if name not in _SPEC_CODECS:
        raise ValueError(f"unknown layer type {name!r} in model file")
    return _SPEC_CODECS[name][2](d)


def save_network(net: Network, path: str | Path) -> None:
    header = {
        "input_shape": list(net.input_shape),
        "layers": [_spec_to_dict(s) for s in net.layers],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(header_bytes)), header_bytes]
    for arr in net.parameter_arrays():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_network(path: str | Path) -> Network:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a QNN1 model file")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    specs = [_spec_from_dict(d) for d in header["layers"]]
    input_shape = tuple(header["input_shape"])
    # template params give the authoritative shapes for this architecture
    params = init_params(specs, input_shape, np.random.default_rng(0))
    infer_shapes(specs, input_shape)
    offset = 12 + header_len
    for p in params:
        if not p:
            continue
        for key in ("w", "b"):
            n = p[key].size
            end = offset + 8 * n
            if end > len(blob):
                raise ValueError(f"{path}: parameter data truncated")
            p[key] = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(
                p[key].shape
            ).copy()
            offset = end
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes; shape mismatch")
    return Network(specs, params, input_shape)
