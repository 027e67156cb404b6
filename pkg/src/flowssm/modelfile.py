"""
Model file (``.ntgm``) reading and writing.

Layout, little-endian::

    b"NTGM"
    u32 header_len | header_len bytes of UTF-8 JSON {"config": {...}, "labels": [...]}
    u32 n_tensors
    n_tensors x:
        u16 name_len | name (UTF-8)
        u8 ndim | ndim x u32 dim
        prod(dims) x f32 values, row-major

Tensors appear in ``ModelParameters.named_tensors()`` order.
"""

from __future__ import annotations

import json
import struct
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ModelFormatError
from .ssm import ModelConfig, ModelParameters

MAGIC = b"NTGM"


def dumps_model(params: ModelParameters, cfg: ModelConfig, labels: Sequence[str] = ()) -> bytes:
    header = json.dumps({"config": cfg.to_dict(), "labels": list(labels)}).encode()
    named = list(params.named_tensors())
    out = [MAGIC, struct.pack("<I", len(header)), header, struct.pack("<I", len(named))]
    for name, t in named:
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(out)


def loads_model(buf: bytes, dtype=np.float64) -> Tuple[ModelParameters, ModelConfig, List[str]]:
    if buf[:4] != MAGIC:
        raise ModelFormatError("not an NTGM model file")
    try:
        off = 4
        (hlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        header = json.loads(buf[off:off + hlen].decode())
        off += hlen
        cfg = ModelConfig(**header["config"])
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        named = {}
        for _ in range(n):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            if off + 4 * count > len(buf):
                raise ModelFormatError(f"tensor {name} is truncated")
            named[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape).astype(dtype)
            off += 4 * count
        params = ModelParameters.from_named(named, cfg.n_layers)
    except (struct.error, KeyError, ValueError, TypeError) as e:
        raise ModelFormatError(f"corrupt model file: {e}") from e
    return params, cfg, list(header.get("labels", []))


def save_model(path, params: ModelParameters, cfg: ModelConfig, labels: Sequence[str] = ()) -> None:
    with open(path, "wb") as f:
        f.write(dumps_model(params, cfg, labels))


def load_model(path, dtype=np.float64):
    with open(path, "rb") as f:
        return loads_model(f.read(), dtype)
