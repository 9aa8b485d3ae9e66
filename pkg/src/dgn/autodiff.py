"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Deliberately small: the operations below (elementwise arithmetic, matmul,
concatenation, swish, segment reductions, row gathers and a fused softmax
cross-entropy) are exactly what the graph blocks need. Each op registers a
pullback on the active tape; ``backward`` replays the tape in reverse
creation order, which is a valid reverse topological order because operands
always exist before their consumers. Gradients accumulate additively when a
tensor feeds more than one consumer.

Broadcasting is restricted to scalar-with-tensor (plus the dedicated
``add_bias`` op for row-vector biases) so every gradient rule stays
auditable. Everything is float64; there is no float32 mode.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse

__all__ = [
    "SegmentPlan",
    "Tape",
    "Tensor",
    "add",
    "add_bias",
    "affine",
    "backward",
    "concat",
    "constant",
    "make_segment_plan",
    "matmul",
    "mul",
    "parameter",
    "row_sum",
    "scale",
    "segment_sum",
    "softmax_cross_entropy",
    "sub",
    "sum_all",
    "swish",
    "take_rows",
]

_STATE = threading.local()


def _active_tape():
    return getattr(_STATE, "tape", None)


class Tape:
    """Operation record for one forward/backward pass.

    A tape is confined to the thread that opened it; independent passes may
    run in parallel, each with its own tape. Ops executed while no tape is
    active are plain numpy evaluations (no recording), which is how
    inference-only passes run.
    """

    def __init__(self):
        self._ops = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _STATE.tape = None

    def _record(self, out, inputs, pullback):
        out.requires_grad = True
        out.tape = self
        self._ops.append((out, inputs, pullback))


class Tensor:
    """Dense float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "tape")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(data):
    """Tensor that never receives a gradient (inputs, index-derived values)."""
    return Tensor(data)


def parameter(data):
    """Trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    if np.isscalar(value):
        return Tensor(value)
    raise TypeError(f"expected a Tensor or scalar, got {type(value).__name__}")


def _maybe_record(out, inputs, pullback):
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape._record(out, inputs, pullback)
    return out


def _check_elementwise(op, a, b):
    # Exact shape match or a 0-d scalar operand; nothing else broadcasts.
    if a.data.shape == b.data.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise ValueError(f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}")


def _fit(g, shape):
    # Collapse an elementwise gradient onto a 0-d scalar operand.
    if g.shape == shape:
        return g
    return np.asarray(g.sum())


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("add", a, b)
    out = Tensor(a.data + b.data)

    def pullback(g):
        return _fit(g, a.data.shape), _fit(g, b.data.shape)

    return _maybe_record(out, (a, b), pullback)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("sub", a, b)
    out = Tensor(a.data - b.data)

    def pullback(g):
        return _fit(g, a.data.shape), _fit(-g, b.data.shape)

    return _maybe_record(out, (a, b), pullback)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("mul", a, b)
    out = Tensor(a.data * b.data)

    def pullback(g):
        return _fit(g * b.data, a.data.shape), _fit(g * a.data, b.data.shape)

    return _maybe_record(out, (a, b), pullback)


def scale(a, s):
    """Multiply by a plain python scalar."""
    s = float(s)
    out = Tensor(a.data * s)

    def pullback(g):
        return (g * s,)

    return _maybe_record(out, (a,), pullback)


def add_bias(m, b):
    """Add a length-d bias row vector to every row of an (n, d) matrix."""
    if m.data.ndim != 2 or b.data.ndim != 1 or m.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"add_bias: incompatible shapes {m.data.shape} and {b.data.shape}")
    out = Tensor(m.data + b.data)

    def pullback(g):
        return g, g.sum(axis=0)

    return _maybe_record(out, (m, b), pullback)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul: expected 2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def pullback(g):
        return g @ b.data.T, a.data.T @ g

    return _maybe_record(out, (a, b), pullback)


def affine(x, w, b):
    """x @ w + b in one op (the bias adds into the product's own buffer)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ValueError(
            f"affine: expected (n,k) @ (k,d) + (d,), got {x.data.shape}, {w.data.shape}, {b.data.shape}"
        )
    if x.data.shape[1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"affine: incompatible shapes {x.data.shape} @ {w.data.shape} + {b.data.shape}"
        )
    prod = x.data @ w.data
    np.add(prod, b.data, out=prod)
    out = Tensor(prod)

    def pullback(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _maybe_record(out, (x, w, b), pullback)


def concat(parts):
    """Concatenate 2-d tensors along the last axis; gradient is slicing."""
    parts = tuple(parts)
    if not parts:
        raise ValueError("concat: need at least one tensor")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ValueError(f"concat: rows disagree: {[q.data.shape for q in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.data.shape[1] for p in parts]
    offsets = np.concatenate(([0], np.cumsum(widths)))

    def pullback(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _maybe_record(out, parts, pullback)


def _sigmoid(x):
    # 1/(1+exp(-x)) with in-place passes; exp overflow saturates to the
    # correct limit (sigmoid -> 0), so the flag is silenced rather than handled
    with np.errstate(over="ignore"):
        out = np.negative(x)
        np.exp(out, out=out)
        out += 1.0
        np.reciprocal(out, out=out)
    return out


def swish(x):
    """x * sigmoid(x), elementwise."""
    s = _sigmoid(x.data)
    tape = _active_tape()
    if tape is not None and x.requires_grad:
        out = Tensor(x.data * s)

        def pullback(g):
            return (g * (s + x.data * s * (1.0 - s)),)

        tape._record(out, (x,), pullback)
        return out
    # inference path: fold the product into the sigmoid buffer
    s *= x.data
    return Tensor(s)


class SegmentPlan:
    """Precomputed scatter matrix for one (ids, num_segments) pairing.

    ``matrix`` is the (num_segments, m) indicator in CSR form with sorted
    column indices, so summing a segment walks its members in original row
    order (segment-major, then original index) - the same fixed order
    np.add.at applies.
    """

    __slots__ = ("ids", "num_segments", "matrix")

    def __init__(self, ids, num_segments):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
            raise ValueError(f"segment id out of range [0, {num_segments})")
        self.ids = ids
        self.num_segments = int(num_segments)
        m = scipy.sparse.csr_matrix(
            (np.ones(len(ids)), (ids, np.arange(len(ids)))),
            shape=(self.num_segments, len(ids)),
        )
        m.sort_indices()
        self.matrix = m


def make_segment_plan(ids, num_segments):
    return SegmentPlan(ids, num_segments)


def segment_sum(values, segment_ids, num_segments, plan=None):
    """Sum rows of an (m, d) tensor into ``num_segments`` buckets.

    Empty segments yield zero rows. Accumulation order is fixed
    (segment-major, then original row index), so repeated calls are
    bit-identical. Passing a precomputed ``plan`` skips re-validating and
    re-building the scatter matrix.
    """
    if plan is None:
        plan = SegmentPlan(segment_ids, num_segments)
    elif plan.num_segments != num_segments:
        raise ValueError("segment plan does not match num_segments")
    if values.data.ndim != 2:
        raise ValueError(f"segment_sum: expected (m, d) values, got {values.data.shape}")
    if plan.ids.shape != (values.data.shape[0],):
        raise ValueError(
            f"segment_sum: ids shape {plan.ids.shape} does not match {values.data.shape[0]} rows"
        )
    ids = plan.ids
    out = Tensor(plan.matrix @ values.data)

    def pullback(g):
        return (g[ids],)

    return _maybe_record(out, (values,), pullback)


def take_rows(t, indices, plan=None):
    """Gather rows by index; the gradient scatter-adds back.

    ``plan``, if given, must be a SegmentPlan over (indices, t rows); it is
    used for the scatter in the pullback.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if t.data.ndim != 2:
        raise ValueError(f"take_rows: expected a 2-d tensor, got {t.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= t.data.shape[0]):
        raise ValueError(f"take_rows: index out of range [0, {t.data.shape[0]})")
    out = Tensor(t.data[idx])

    if plan is not None:

        def pullback(g):
            return (plan.matrix @ g,)

    else:

        def pullback(g):
            acc = np.zeros_like(t.data)
            np.add.at(acc, idx, g)
            return (acc,)

    return _maybe_record(out, (t,), pullback)


def row_sum(t):
    """Sum an (m, d) tensor along its last axis, keeping an (m, 1) shape."""
    if t.data.ndim != 2:
        raise ValueError(f"row_sum: expected a 2-d tensor, got {t.data.shape}")
    out = Tensor(t.data.sum(axis=1, keepdims=True))

    def pullback(g):
        return (np.broadcast_to(g, t.data.shape),)

    return _maybe_record(out, (t,), pullback)


def sum_all(t):
    """Sum every entry into a 0-d scalar."""
    out = Tensor(t.data.sum())

    def pullback(g):
        return (np.broadcast_to(g, t.data.shape),)

    return _maybe_record(out, (t,), pullback)


def softmax_cross_entropy(logits, labels):
    """Mean over rows of -log softmax(logits)[label], max-shifted for stability."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: expected (n, c) logits, got {z.shape}")
    n, c = z.shape
    if labels.shape != (n,):
        raise ValueError(f"softmax_cross_entropy: labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = Tensor(-logp[np.arange(n), labels].mean())

    def pullback(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (float(g) / n),)

    return _maybe_record(out, (logits,), pullback)


def backward(loss, params):
    """Gradients of a scalar loss for every tensor in ``params``.

    Parameters the loss never touched get zero gradients. Raises if the loss
    is not a scalar.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    params = list(params)
    tape = loss.tape
    if tape is None:
        return {p: np.zeros_like(p.data) for p in params}
    grads = {id(loss): np.ones((), dtype=np.float64)}
    for out, inputs, pullback in reversed(tape._ops):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gt in zip(inputs, pullback(g)):
            if not t.requires_grad:
                continue
            acc = grads.get(id(t))
            if acc is None:
                grads[id(t)] = np.array(gt)
            else:
                acc += gt
    return {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}
