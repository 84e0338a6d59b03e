"""Binary checkpoint format shared by teacher and student.

Layout, all integers little-endian::

    b"S2PD"                      magic
    u16 version                  currently 1
    u8  kind                     1 = teacher, 2 = student
    u16 n_config, u32 * n_config config fields in declaration order
    u32 n_params
    per parameter:
        u16 name length, name bytes (utf-8)
        u32 rank, u32 * rank dims
        f32 * prod(dims) payload (row-major)

Writing the same model twice produces identical bytes.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .student import EMBED_PREFIX, StudentConfig, StudentModel
from .teacher import TeacherConfig, TeacherModel

MAGIC = b"S2PD"
VERSION = 1
KIND_TEACHER = 1
KIND_STUDENT = 2


class CheckpointError(ValueError):
    pass


def _config_for(model):
    if isinstance(model, TeacherModel):
        return KIND_TEACHER, model.config
    if isinstance(model, StudentModel):
        return KIND_STUDENT, model.config
    raise TypeError(f"cannot serialize {type(model).__name__}")


def to_bytes(model, skip_embedding: bool = False) -> bytes:
    kind, cfg = _config_for(model)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", VERSION, kind))
    values = [getattr(cfg, f.name) for f in fields(cfg)]
    buf.write(struct.pack(f"<H{len(values)}I", len(values), *values))
    items = [(n, p) for n, p in model.params.items()
             if not (skip_embedding and kind == KIND_STUDENT and n.startswith(EMBED_PREFIX))]
    buf.write(struct.pack("<I", len(items)))
    for name, p in items:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack(f"<I{p.data.ndim}I", p.data.ndim, *p.data.shape))
        buf.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return buf.getvalue()


def save(model, path: str | Path, skip_embedding: bool = False) -> int:
    """Write ``model`` to ``path``; returns bytes written."""
    blob = to_bytes(model, skip_embedding)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return len(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def from_bytes(blob: bytes, skip_embedding: bool = False):
    r = _Reader(blob)
    if r.raw(4) != MAGIC:
        raise CheckpointError("bad magic; not an S2PD checkpoint")
    version, kind = r.take("<HB")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n_cfg,) = r.take("<H")
    values = r.take(f"<{n_cfg}I")
    if kind == KIND_TEACHER:
        cfg_cls, model_cls = TeacherConfig, TeacherModel
    elif kind == KIND_STUDENT:
        cfg_cls, model_cls = StudentConfig, StudentModel
    else:
        raise CheckpointError(f"unknown model kind {kind}")
    names = [f.name for f in fields(cfg_cls)]
    if len(values) != len(names):
        raise CheckpointError(f"config block has {len(values)} fields, expected {len(names)}")
    try:
        cfg = cfg_cls(**dict(zip(names, values)))
    except ValueError as exc:
        raise CheckpointError(f"invalid config block: {exc}") from exc

    (n_params,) = r.take("<I")
    state: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (n_len,) = r.take("<H")
        name = r.raw(n_len).decode("utf-8")
        (rank,) = r.take("<I")
        dims = r.take(f"<{rank}I")
        count = int(np.prod(dims)) if rank else 1
        payload = np.frombuffer(r.raw(4 * count), dtype="<f4").reshape(dims)
        state[name] = payload.astype(np.float32)
    if r.pos != len(blob):
        raise CheckpointError(f"{len(blob) - r.pos} trailing bytes after last parameter")

    if kind == KIND_TEACHER:
        model = model_cls(cfg)
        _load(model, state, strict=True)
    else:
        has_embed = any(n.startswith(EMBED_PREFIX) for n in state)
        model = model_cls(cfg, with_embedding=has_embed and not skip_embedding)
        _load(model, state, strict=True)
    return model


def _load(model, state, strict):
    try:
        extra = set(state) - set(model.params)
        if isinstance(model, StudentModel) and not model.has_embedding:
            extra = {n for n in extra if not n.startswith(EMBED_PREFIX)}
        if extra:
            raise CheckpointError(f"unexpected parameters: {sorted(extra)}")
        model.load_state(state, strict=strict)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(str(exc)) from exc


def load(path: str | Path, skip_embedding: bool = False):
    return from_bytes(Path(path).read_bytes(), skip_embedding)


def measure_disk(path: str | Path) -> int:
    """Exact size in bytes of a serialized checkpoint."""
    return os.stat(path).st_size
