"""Checkpoint file format.

Layout (all integers little-endian)::

    b"BSCG"            4-byte magic
    uint32             format version (currently 1)
    uint64             header length in bytes
    header             UTF-8 JSON: {"fingerprint", "config", "meta", "tensors": [
                           {"name", "shape", "offset"} ...]}
    data               raw little-endian float32 blobs; ``offset`` counts from
                       the first byte after the header

Tensors are written in parameter enumeration order, back to back.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"BSCG"
VERSION = 1


class CheckpointError(ValueError):
    pass


def fingerprint(config: Optional[dict]) -> Optional[str]:
    if config is None:
        return None
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save(module, path, config: Optional[dict] = None, meta: Optional[dict] = None) -> None:
    """``config`` is fingerprinted and checked on load; ``meta`` is stored verbatim."""
    entries, blobs, offset = [], [], 0
    for name, p in module.named_parameters():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"fingerprint": fingerprint(config), "config": config, "meta": meta,
                         "tensors": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read(path) -> tuple:
    """Return ``(header, {name: float32 array})``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + entry["offset"]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4", count=count,
                                               offset=start).reshape(shape).copy()
    return header, tensors


def load_into(module, path, config: Optional[dict] = None) -> dict:
    """Overwrite ``module``'s parameters; any name or shape mismatch is an error.

    When ``config`` is given, the stored fingerprint must match it.
    """
    header, tensors = read(path)
    if config is not None and header.get("fingerprint") != fingerprint(config):
        raise CheckpointError(f"{path}: model configuration fingerprint mismatch "
                              f"(file {header.get('fingerprint')}, model {fingerprint(config)})")
    params = dict(module.named_parameters())
    missing = sorted(set(params) - set(tensors))
    unknown = sorted(set(tensors) - set(params))
    mismatched = sorted(name for name in set(params) & set(tensors)
                        if tuple(params[name].shape) != tensors[name].shape)
    problems = []
    if missing:
        problems.append(f"missing tensors: {', '.join(missing)}")
    if unknown:
        problems.append(f"unknown tensors: {', '.join(unknown)}")
    if mismatched:
        problems.append("shape mismatch: " + ", ".join(
            f"{n} (file {tensors[n].shape}, model {tuple(params[n].shape)})" for n in mismatched))
    if problems:
        raise CheckpointError(f"{path}: " + "; ".join(problems))
    for name, p in params.items():
        p.data = tensors[name].astype(p.data.dtype)
        p.zero_grad()
    return header
