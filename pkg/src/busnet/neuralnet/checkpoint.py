"""Binary checkpoint files.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"BUSNCKPT"
    8       4     uint32 format version (1)
    12      4     uint32 header length H in bytes
    16      H     UTF-8 JSON header
    16+H    ...   parameter blocks, float32 little-endian, C order,
                  one per tensor, in sorted name order

The header holds ``spec`` (ModelSpec as a dict), ``seed``, ``epoch``,
``frozen`` (sorted names) and ``tensors``: a list of ``{"name", "shape"}``
in the same order as the blocks. Extra header keys are preserved on load.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from busnet.neuralnet.model import ModelSpec, Parameters, check_compatible, layer_shapes

MAGIC = b"BUSNCKPT"
VERSION = 1


def dumps(params: Parameters, spec: ModelSpec, epoch: int, extra: dict | None = None) -> bytes:
    names = sorted(params.tensors)
    header = {
        "spec": spec.to_dict(),
        "seed": int(params.init_seed),
        "epoch": int(epoch),
        "frozen": sorted(params.frozen),
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in names],
        **(extra or {}),
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = b"".join(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes() for n in names)
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + blocks


def loads(data: bytes) -> tuple[Parameters, ModelSpec, dict]:
    if data[:8] != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    spec = ModelSpec.from_dict(header["spec"])
    offset = 16 + hlen
    loaded = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        n = int(np.prod(shape)) if shape else 1
        loaded[t["name"]] = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 4 * n
    if offset != len(data):
        raise ValueError(f"checkpoint has {len(data) - offset} trailing bytes")
    # restore the graph order the model code iterates in
    tensors = {name: loaded[name] for name in layer_shapes(spec) if name in loaded}
    params = Parameters(tensors, header["seed"], frozenset(header.get("frozen", ())))
    check_compatible(params, spec)
    return params, spec, header


def save(path, params: Parameters, spec: ModelSpec, epoch: int, extra: dict | None = None) -> None:
    Path(path).write_bytes(dumps(params, spec, epoch, extra))


def load(path) -> tuple[Parameters, ModelSpec, dict]:
    return loads(Path(path).read_bytes())
