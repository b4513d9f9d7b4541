"""Reverse-mode automatic differentiation over a small numpy operation set.

All values are float64 numpy arrays: matrices for activations, vectors for
biases, 0-d arrays for losses. Operations record onto a tape only while one
is active (``with Tape(): ...``); without a tape the same functions run as
plain numpy computations, so inference pays no graph-building cost.

The operation vocabulary is fixed to what the vector-field predictor needs:
matmul, broadcast add/mul, slicing/concat, transpose, layer norm, row
softmax, gelu, abs, and reductions.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StateError

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Records the operation graph of one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A float64 array plus an optional gradient accumulator."""

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def value_of(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _make(value, tensor_parents, vjp):
    """Create an output node; record it only if a tape is active."""
    tape = _active_tape()
    if tape is None or not tensor_parents:
        return Tensor(value)
    out = Tensor(value, parents=tuple(tensor_parents), vjp=vjp)
    tape.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor):
    """Accumulate gradients of a scalar loss into every reachable Tensor.

    Parameter tensors (created outside the tape) keep their accumulated
    ``.grad``; the caller is responsible for zeroing them between passes.
    """
    if tape is None or not tape.nodes:
        raise StateError("backward called without a recorded tape")
    if loss.value.size != 1:
        raise StateError(f"loss must be scalar, got shape {loss.value.shape}")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shapes {av.shape} x {bv.shape}")
    parents, slots = _collect(a, b)

    def vjp(g):
        return _emit(slots, g @ bv.T, av.T @ g)

    return _make(av @ bv, parents, vjp)


def _collect(*operands):
    """Split operands into recorded parents and per-slot tensor flags."""
    parents = [op for op in operands if isinstance(op, Tensor)]
    slots = [isinstance(op, Tensor) for op in operands]
    return parents, slots


def _emit(slots, *grads):
    return [g for s, g in zip(slots, grads) if s]


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to a broadcast operand's shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # row-vector bias (h,) or (1, h) broadcast over rows
    summed = g.sum(axis=0)
    return summed.reshape(shape)


def add(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    out = av + bv
    parents, slots = _collect(a, b)

    def vjp(g):
        return _emit(slots, _reduce_to(g, av.shape), _reduce_to(g, bv.shape))

    return _make(out, parents, vjp)


def sub(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    out = av - bv
    parents, slots = _collect(a, b)

    def vjp(g):
        return _emit(slots, _reduce_to(g, av.shape), _reduce_to(-g, bv.shape))

    return _make(out, parents, vjp)


def mul(a, b) -> Tensor:
    av, bv = value_of(a), value_of(b)
    out = av * bv
    parents, slots = _collect(a, b)

    def vjp(g):
        return _emit(slots, _reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape))

    return _make(out, parents, vjp)


def neg(a) -> Tensor:
    av = value_of(a)
    parents, slots = _collect(a)

    def vjp(g):
        return _emit(slots, -g)

    return _make(-av, parents, vjp)


def scale(a, s: float) -> Tensor:
    return mul(a, float(s))


def absolute(a) -> Tensor:
    av = value_of(a)
    sign = np.sign(av)
    parents, slots = _collect(a)

    def vjp(g):
        return _emit(slots, g * sign)

    return _make(np.abs(av), parents, vjp)


def square(a) -> Tensor:
    return mul(a, a)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """Tanh-form GELU (matches the widely used approximation)."""
    av = value_of(a)
    sq = av * av
    inner = _GELU_C * (av + 0.044715 * (sq * av))
    t = np.tanh(inner)
    out = 0.5 * av * (1.0 + t)
    parents, slots = _collect(a)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * sq)
        local = 0.5 * (1.0 + t) + 0.5 * av * (1.0 - t * t) * dinner
        return _emit(slots, g * local)

    return _make(out, parents, vjp)


def layer_norm(a, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization to zero mean, unit population variance."""
    av = value_of(a)
    if av.ndim != 2 or av.shape[1] < 1:
        raise ShapeError(f"layer_norm expects a matrix, got shape {av.shape}")
    mean = av.mean(axis=1, keepdims=True)
    centered = av - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = centered * inv
    parents, slots = _collect(a)

    def vjp(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * y).mean(axis=1, keepdims=True)
        return _emit(slots, (g - gm - y * gy) * inv)

    return _make(y, parents, vjp)


def softmax_rows(a) -> Tensor:
    """Row softmax; -inf entries become exact zeros."""
    av = value_of(a)
    m = np.max(av, axis=1, keepdims=True)
    e = np.exp(av - m)
    s = e / e.sum(axis=1, keepdims=True)
    parents, slots = _collect(a)

    def vjp(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return _emit(slots, s * (g - dot))

    return _make(s, parents, vjp)


def transpose(a) -> Tensor:
    av = value_of(a)
    parents, slots = _collect(a)

    def vjp(g):
        return _emit(slots, g.T)

    return _make(av.T.copy(), parents, vjp)


def slice_rows(a, i0: int, i1: int) -> Tensor:
    av = value_of(a)
    parents, slots = _collect(a)

    def vjp(g):
        full = np.zeros_like(av)
        full[i0:i1] = g
        return _emit(slots, full)

    return _make(av[i0:i1].copy(), parents, vjp)


def slice_cols(a, j0: int, j1: int) -> Tensor:
    av = value_of(a)
    parents, slots = _collect(a)

    def vjp(g):
        full = np.zeros_like(av)
        full[:, j0:j1] = g
        return _emit(slots, full)

    return _make(av[:, j0:j1].copy(), parents, vjp)


def concat_rows(parts) -> Tensor:
    values = [value_of(p) for p in parts]
    sizes = [v.shape[0] for v in values]
    parents, slots = _collect(*parts)
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        pieces = [g[offsets[i]:offsets[i + 1]] for i in range(len(values))]
        return _emit(slots, *pieces)

    return _make(np.concatenate(values, axis=0), parents, vjp)


def concat_cols(parts) -> Tensor:
    values = [value_of(p) for p in parts]
    sizes = [v.shape[1] for v in values]
    parents, slots = _collect(*parts)
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        pieces = [g[:, offsets[i]:offsets[i + 1]] for i in range(len(values))]
        return _emit(slots, *pieces)

    return _make(np.concatenate(values, axis=1), parents, vjp)


def banded_softmax_attention(q, k, v, offsets, index_lists) -> Tensor:
    """Softmax attention restricted to a diagonal band.

    ``offsets`` are the relative key positions (e.g. -T..T) and
    ``index_lists[j]`` the query rows for which ``row + offsets[j]`` is a
    valid same-sequence key. Scores are scaled by 1/sqrt(head_dim); excluded
    positions get exactly zero weight, so out-of-band inputs cannot leak.
    """
    qv, kv, vv = value_of(q), value_of(k), value_of(v)
    if qv.shape != kv.shape or qv.shape != vv.shape:
        raise ShapeError(f"q/k/v shapes differ: {qv.shape}, {kv.shape}, {vv.shape}")
    n, head_dim = qv.shape
    scale_factor = 1.0 / np.sqrt(head_dim)
    width = len(offsets)
    scores = np.full((n, width), -np.inf)
    for j, (off, rows) in enumerate(zip(offsets, index_lists)):
        scores[rows, j] = np.einsum("ij,ij->i", qv[rows], kv[rows + off]) * scale_factor
    peak = scores.max(axis=1, keepdims=True)
    expd = np.exp(scores - peak)
    weights = expd / expd.sum(axis=1, keepdims=True)
    out = np.zeros_like(qv)
    for j, (off, rows) in enumerate(zip(offsets, index_lists)):
        out[rows] += weights[rows, j, None] * vv[rows + off]
    parents, slots = _collect(q, k, v)

    def vjp(g):
        d_weights = np.zeros((n, width))
        dv = np.zeros_like(vv)
        for j, (off, rows) in enumerate(zip(offsets, index_lists)):
            d_weights[rows, j] = np.einsum("ij,ij->i", g[rows], vv[rows + off])
            dv[rows + off] += weights[rows, j, None] * g[rows]
        d_scores = weights * (d_weights - (d_weights * weights).sum(axis=1, keepdims=True))
        dq = np.zeros_like(qv)
        dk = np.zeros_like(kv)
        for j, (off, rows) in enumerate(zip(offsets, index_lists)):
            dq[rows] += d_scores[rows, j, None] * kv[rows + off] * scale_factor
            dk[rows + off] += d_scores[rows, j, None] * qv[rows] * scale_factor
        return _emit(slots, dq, dk, dv)

    return _make(out, parents, vjp)


def sum_all(a) -> Tensor:
    av = value_of(a)
    parents, slots = _collect(a)

    def vjp(g):
        return _emit(slots, np.full_like(av, float(g)))

    return _make(np.asarray(av.sum()), parents, vjp)


def mean_all(a) -> Tensor:
    av = value_of(a)
    return scale(sum_all(a), 1.0 / av.size)
