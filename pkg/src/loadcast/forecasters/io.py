"""Versioned binary model files.

Layout: 8-byte magic, uint32 format version, 8-byte ASCII kind tag, uint32
header length, UTF-8 JSON header (spec, layout, array names and shapes),
then every array as little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .base import ForecasterError, ForecasterSpec

MAGIC = b"LDCASTM\x00"
FORMAT_VERSION = 1


class CorruptModelFileError(ForecasterError):
    pass


class ModelVersionError(ForecasterError):
    pass


class ModelKindError(ForecasterError):
    pass


def save(model, path) -> None:
    names = list(model.params)
    header = {
        "spec": model.spec.to_dict(),
        "layout": model.layout,
        "target_scale": list(model.target_scale),
        "arrays": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    kind = model.kind.encode("ascii").ljust(8, b"\x00")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(kind)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load(path, kind: str | None = None):
    """Read a model file; ``kind`` (if given) must match the stored kind tag."""
    from . import make_model

    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != MAGIC:
        raise CorruptModelFileError(f"{path}: not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    stored_kind = raw[12:20].rstrip(b"\x00").decode("ascii", errors="replace")
    if kind is not None and stored_kind != kind:
        raise ModelKindError(f"{path}: holds a {stored_kind!r} model, expected {kind!r}")
    (hlen,) = struct.unpack_from("<I", raw, 20)
    try:
        header = json.loads(raw[24:24 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelFileError(f"{path}: unreadable header") from exc
    spec = ForecasterSpec.from_dict(header["spec"])
    if spec.kind != stored_kind:
        raise CorruptModelFileError(f"{path}: kind tag {stored_kind!r} disagrees with header {spec.kind!r}")
    model = make_model(spec)
    offset = 24 + hlen
    params = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CorruptModelFileError(f"{path}: truncated array {entry['name']!r}")
        params[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(float).reshape(shape)
        offset = end
    if offset != len(raw):
        raise CorruptModelFileError(f"{path}: {len(raw) - offset} trailing bytes")
    model.params = params
    model.layout = header["layout"]
    model.target_scale = tuple(header["target_scale"])
    return model
