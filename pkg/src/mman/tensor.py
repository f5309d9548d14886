"""Dense tensors with tape-based reverse-mode differentiation.

Every primitive computes its value with numpy and, when a :class:`Tape` is
active and at least one input is differentiable, appends a record holding
the inputs and a vector-Jacobian product.  ``Tape.backward`` replays the
records in reverse.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeMismatch(ValueError):
    def __init__(self, op, a, b):
        super().__init__(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")
        self.shapes = (tuple(a), tuple(b))


class NotScalar(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


class Tensor:
    """Immutable array value; ``requires_grad`` marks it as tape-tracked."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar; all routes go through the recorded primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


class _Record:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


_local = threading.local()


def _active_tape():
    return getattr(_local, "tape", None)


class Tape:
    """Ordered record of executed primitives for one forward/backward pass.

    Used as a context manager; tapes are thread-local so independent passes
    may run on separate threads.
    """

    def __init__(self):
        self.records = []
        self._prev = None

    def __enter__(self):
        self._prev = _active_tape()
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = self._prev
        return False

    def __len__(self):
        return len(self.records)

    def backward(self, loss, params=None):
        """Return ``{name: gradient}`` for ``params`` (a name->Tensor map).

        Parameters not reachable from ``loss`` get zero gradients.  With
        ``params=None`` the gradients of every named leaf seen on the tape are
        returned.
        """
        if loss.data.ndim != 0:
            raise NotScalar(f"loss must be 0-dimensional, got shape {loss.shape}")
        grads = {id(loss): np.ones((), dtype=loss.dtype)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            in_grads = rec.vjp(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        if params is None:
            params = {}
            for rec in self.records:
                for t in rec.inputs:
                    if t.requires_grad and t.name is not None:
                        params[t.name] = t
        out = {}
        for name, p in params.items():
            g = grads.get(id(p))
            out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype)
        return out


def backward(tape, loss, params=None):
    return tape.backward(loss, params)


def _finish(value, inputs, vjp):
    if not np.all(np.isfinite(value)):
        raise NonFinite("primitive produced a non-finite value")
    tracked = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=tracked)
    tape = _active_tape()
    if tracked and tape is not None:
        tape.records.append(_Record(out, inputs, vjp))
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


def _pair(a, b):
    if isinstance(a, Tensor):
        dtype = a.dtype
    elif isinstance(b, Tensor):
        dtype = b.dtype
    else:
        dtype = None
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=dtype))
    b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=dtype))
    return a, b


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _finish(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    da, db = a.data, b.data
    return _finish(
        da * db,
        (a, b),
        lambda g: (_unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)),
    )


def neg(a):
    return mul(as_tensor(a), -1.0)


def matmul(a, b):
    """``a @ b`` for 2-D ``b``; ``a`` may carry leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    da, db = a.data, b.data

    def vjp(g):
        ga = g @ db.T
        gb = da.reshape(-1, da.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _finish(da @ db, (a, b), vjp)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return _finish(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _finish(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    a = as_tensor(a)
    x = a.data
    y = np.maximum(x, 0.0).astype(x.dtype)
    return _finish(y, (a,), lambda g: (g * (x > 0),))


def masked_softmax(scores, mask=None):
    """Softmax along the last axis; positions with ``mask == 0`` get exactly 0."""
    scores = as_tensor(scores)
    x = scores.data
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        m = np.asarray(mask).astype(bool)
        if m.shape != x.shape:
            raise ShapeMismatch("masked_softmax", x.shape, m.shape)
    if not np.all(m.any(axis=-1)):
        raise ValueError("masked_softmax: a row has every position masked")
    shifted = np.where(m, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _finish(y, (scores,), vjp)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeMismatch("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _finish(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), vjp)


def embedding_lookup(table, indices):
    """Rows of a 2-D ``table`` at integer ``indices`` (any shape)."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch("embedding_lookup", table.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding_lookup: index out of range for {table.shape[0]} rows")
    shape = table.shape

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return _finish(table.data[idx], (table,), vjp)


def sum_axis(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _finish(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", old, shape) from None
    return _finish(y, (a,), lambda g: (g.reshape(old),))


def dropout(a, p, training, rng=None):
    """Inverted dropout; exact identity when not training or ``p == 0``."""
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    rng = rng if rng is not None else np.random.default_rng()
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    return _finish(a.data * keep, (a,), lambda g: (g * keep,))


def cosine(a, b, eps=1e-8):
    """Cosine similarity along the last axis; norms are clamped below by ``eps``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch("cosine", a.shape, b.shape)
    x, y = a.data, b.data
    nx = np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), eps)
    ny = np.maximum(np.linalg.norm(y, axis=-1, keepdims=True), eps)
    dot = (x * y).sum(axis=-1, keepdims=True)
    c = dot / (nx * ny)

    def vjp(g):
        g = np.expand_dims(g, -1)
        ga = g * (y / (nx * ny) - c * x / (nx * nx))
        gb = g * (x / (nx * ny) - c * y / (ny * ny))
        return ga, gb

    return _finish(c[..., 0], (a, b), vjp)


def slice_last(a, start, stop):
    """``a[..., start:stop]``."""
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[..., start:stop] = g
        return (out,)

    return _finish(a.data[..., start:stop], (a,), vjp)


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "masked_softmax": masked_softmax,
    "concat": concat,
    "embedding_lookup": embedding_lookup,
    "sum_axis": sum_axis,
    "dropout": dropout,
    "cosine": cosine,
    "relu": relu,
    "reshape": reshape,
    "slice_last": slice_last,
}
