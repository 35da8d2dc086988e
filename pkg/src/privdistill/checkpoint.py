"""Binary checkpoint IO for parameter sets.

Layout (little-endian):
    magic "DGDW" | version u32 | entry count u32
    per entry: name length u32 | UTF-8 name | rank u32 | dims u32*rank |
               float64 payload (row-major)

The architecture and feature boundary travel in a JSON sidecar entry so a
checkpoint alone reconstructs the ParamSet. Round trips are bit-exact.
"""

import json
import struct

import numpy as np

from .errors import FormatError
from .network import ParamSet

MAGIC = b"DGDW"
VERSION = 1
_META_NAME = "__meta__"


def _pack_meta(net):
    meta = {
        "architecture": [list(layer) for layer in net.architecture],
        "feature_boundary": net.feature_boundary,
    }
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)


def _unpack_meta(arr):
    raw = arr.astype(np.uint8).tobytes()
    meta = json.loads(raw.decode("utf-8"))
    arch = [tuple(layer) for layer in meta["architecture"]]
    return arch, meta["feature_boundary"]


def write_checkpoint(net, path):
    tensors = [(_META_NAME, _pack_meta(net))]
    tensors += [(k, np.ascontiguousarray(v, dtype=np.float64)) for k, v in net.entries.items()]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated checkpoint while reading {what}", offset=fh.tell())
    return data


def read_checkpoint(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", offset=4)
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            size = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 8 * size, f"payload of {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if _META_NAME not in tensors:
        raise FormatError("checkpoint missing architecture metadata")
    arch, fb = _unpack_meta(tensors.pop(_META_NAME))
    return ParamSet(arch, tensors, fb)
