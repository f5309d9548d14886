"""Named parameter storage, Adam, and the binary checkpoint container."""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .tensor import Tensor

CHECKPOINT_MAGIC = b"MMAN"
CHECKPOINT_VERSION = 1


class MissingGradient(KeyError):
    pass


class CheckpointError(ValueError):
    pass


class ParameterSet:
    """Ordered map of parameter path -> Tensor plus Adam moments.

    Parameters are exposed as differentiable leaf tensors; ``adam_step``
    replaces them in place with fresh tensors (tensors themselves are never
    mutated).
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params = {}
        self.m = {}
        self.v = {}
        self.t = 0

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self._params[name] = Tensor(arr, requires_grad=True, name=name)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def tensors(self):
        return dict(self._params)

    def set(self, name, value):
        arr = np.array(value, dtype=self.dtype)
        if arr.shape != self._params[name].shape:
            raise ValueError(f"{name}: shape {arr.shape} != {self._params[name].shape}")
        self._params[name] = Tensor(arr, requires_grad=True, name=name)

    def copy(self):
        out = ParameterSet(self.dtype)
        for name, p in self._params.items():
            out._params[name] = Tensor(p.data.copy(), requires_grad=True, name=name)
            out.m[name] = self.m[name].copy()
            out.v[name] = self.v[name].copy()
        out.t = self.t
        return out

    def astype(self, dtype):
        out = ParameterSet(dtype)
        for name, p in self._params.items():
            out._params[name] = Tensor(p.data.astype(dtype), requires_grad=True, name=name)
            out.m[name] = self.m[name].astype(dtype)
            out.v[name] = self.v[name].astype(dtype)
        out.t = self.t
        return out


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: (g * scale).astype(g.dtype) for k, g in grads.items()}, norm


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update applied to ``params`` (returned for chaining)."""
    missing = [n for n in params if n not in grads]
    if missing:
        raise MissingGradient(f"no gradient for {missing[0]!r}")
    params.t += 1
    t = params.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in params.names():
        g = np.asarray(grads[name], dtype=params.dtype)
        m = beta1 * params.m[name] + (1.0 - beta1) * g
        v = beta2 * params.v[name] + (1.0 - beta2) * g * g
        params.m[name] = m.astype(params.dtype)
        params.v[name] = v.astype(params.dtype)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        params.set(name, params[name].data - update.astype(params.dtype))
    return params


# ---------------------------------------------------------------------------
# checkpoint container
#
#   "MMAN" | u16 version | u8 precision bytes (4|8) | u64 adam step
#   | u32 meta length | meta JSON (utf-8)
#   | u32 entry count | entries
#   entry: u16 name length | name | u8 rank | rank * u32 dims | LE raw values
#
# Entries hold every parameter followed by "adam.m/<name>" and "adam.v/<name>".
# ---------------------------------------------------------------------------


def _write_entry(buf, name, arr, dtype):
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=dtype.newbyteorder("<")).tobytes())


def checkpoint_bytes(params, meta=None):
    dtype = params.dtype
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<HBQ", CHECKPOINT_VERSION, dtype.itemsize, params.t))
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_raw)))
    buf.write(meta_raw)
    entries = []
    for name, p in params.items():
        entries.append((name, p.data))
    for name in params.names():
        entries.append(("adam.m/" + name, params.m[name]))
        entries.append(("adam.v/" + name, params.v[name]))
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        _write_entry(buf, name, arr, dtype)
    return buf.getvalue()


def save_checkpoint(path, params, meta=None):
    data = checkpoint_bytes(params, meta)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def parse_checkpoint(data):
    """Return ``(params, meta)`` from checkpoint bytes."""
    buf = io.BytesIO(data)

    def read(n):
        chunk = buf.read(n)
        if len(chunk) != n:
            raise CheckpointError("truncated checkpoint")
        return chunk

    if read(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    version, itemsize, step = struct.unpack("<HBQ", read(11))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if itemsize not in (4, 8):
        raise CheckpointError(f"bad precision flag {itemsize}")
    dtype = np.dtype(np.float32 if itemsize == 4 else np.float64)
    (meta_len,) = struct.unpack("<I", read(4))
    meta = json.loads(read(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", read(4))
    params = ParameterSet(dtype)
    moments = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", read(2))
        name = read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", read(1))
        shape = struct.unpack(f"<{rank}I", read(4 * rank)) if rank else ()
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(read(n * itemsize), dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)
        if name.startswith("adam."):
            moments[name] = arr
        else:
            params.add(name, arr)
    for name in params.names():
        params.m[name] = moments.get("adam.m/" + name, np.zeros_like(params[name].data))
        params.v[name] = moments.get("adam.v/" + name, np.zeros_like(params[name].data))
    params.t = step
    return params, meta


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    params, meta = parse_checkpoint(data)
    return params, meta, hashlib.sha256(data).hexdigest()
