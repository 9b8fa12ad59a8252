"""Versioned binary checkpoint files for policy parameters.

Layout (all integers little-endian u32 unless noted):

    magic           4 bytes, b"OMCK"
    format_version  u32 (currently 1)
    obs_dim, act_dim
    n_arrays
    per array:      name_len, name (ascii), ndim, dims...
    per array:      raw little-endian float64 data, C order
    meta_present    u32 (0 or 1)
    if present:     meta_iteration, mode_len + mode (ascii),
                    fingerprint_len + fingerprint (ascii),
                    rng_len + rng state (JSON, utf-8)

Round trips are bit-exact. Files are written to a temporary sibling and
renamed into place so partial checkpoints never appear.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from metadr.net import PARAM_FIELD_NAMES, PolicyParams

MAGIC = b"OMCK"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Malformed, truncated, or unsupported checkpoint file."""


@dataclass(frozen=True)
class MetaInfo:
    """Meta-training context stored alongside the parameters."""

    meta_iteration: int
    meta_grad_mode: str
    config_fingerprint: str
    rng_state: dict


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes, path: str):
        self._data = data
        self._pos = 0
        self._path = path

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise CheckpointError(
                f"truncated checkpoint {self._path}: wanted {n} bytes at "
                f"offset {self._pos}, file has {len(self._data)}"
            )
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def done(self) -> bool:
        return self._pos == len(self._data)


def serialize(params: PolicyParams, meta: MetaInfo | None = None) -> bytes:
    chunks = [MAGIC, struct.pack("<III", FORMAT_VERSION, params.obs_dim, params.act_dim)]
    arrays = params.arrays()
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in zip(PARAM_FIELD_NAMES, arrays):
        chunks.append(_pack_str(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in arrays:
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if meta is None:
        chunks.append(struct.pack("<I", 0))
    else:
        chunks.append(struct.pack("<II", 1, meta.meta_iteration))
        chunks.append(_pack_str(meta.meta_grad_mode))
        chunks.append(_pack_str(meta.config_fingerprint))
        chunks.append(_pack_str(json.dumps(meta.rng_state, sort_keys=True)))
    return b"".join(chunks)


def deserialize(data: bytes, path: str = "<bytes>") -> tuple[PolicyParams, MetaInfo | None]:
    r = _Reader(data, path)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(
            f"bad magic in {path}: expected {MAGIC!r}, found {magic!r}"
        )
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} in {path} "
            f"(this build reads version {FORMAT_VERSION})"
        )
    r.u32(), r.u32()  # obs_dim, act_dim; re-derived from the shapes below
    n_arrays = r.u32()
    if n_arrays != len(PARAM_FIELD_NAMES):
        raise CheckpointError(
            f"{path} holds {n_arrays} arrays, expected {len(PARAM_FIELD_NAMES)}"
        )
    shapes = []
    for expected in PARAM_FIELD_NAMES:
        name = r.string()
        if name != expected:
            raise CheckpointError(f"{path}: array {name!r} where {expected!r} expected")
        ndim = r.u32()
        shapes.append(struct.unpack(f"<{ndim}I", r.take(4 * ndim)))
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        buf = r.take(8 * count)
        arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    params = PolicyParams(*arrays)
    meta = None
    if r.u32():
        meta = MetaInfo(
            meta_iteration=r.u32(),
            meta_grad_mode=r.string(),
            config_fingerprint=r.string(),
            rng_state=json.loads(r.string()),
        )
    if not r.done():
        raise CheckpointError(f"{path} has trailing bytes after the checkpoint payload")
    return params, meta


def save_checkpoint(path, params: PolicyParams, meta: MetaInfo | None = None) -> None:
    """Write atomically (write-then-rename)."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(serialize(params, meta))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[PolicyParams, MetaInfo | None]:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    return deserialize(data, path)
