"""Dense tensors with reverse-mode automatic differentiation.

Ops compute eagerly on numpy arrays. When a Tape is active, every op
appends a node (inputs, output, backward rule) so that gradients of a
scalar can be pulled back to any leaf tensor marked requires_grad.
Tensors are treated as immutable once created; parameter updates go
through the optimizer, which owns the arrays.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class Tensor:
    """An n-dimensional array of reals, optionally a gradient leaf."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, name={self.name})"


class Node:
    """One recorded primitive op: inputs, output, and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of ops; inputs of a node always precede it.

    A tape may be backward()-ed once; a second backward without
    re-running the forward pass is rejected.
    """

    def __init__(self):
        self.nodes = []
        self._used = False

    def __enter__(self):
        push_tape(self)
        return self

    def __exit__(self, *exc):
        pop_tape(self)
        return False


_TAPE_STACK: list[Tape] = []


def push_tape(tape):
    _TAPE_STACK.append(tape)


def pop_tape(tape):
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise AutodiffError("tape stack corrupted")
    _TAPE_STACK.pop()


def _record(op, inputs, out_data, backward_fn):
    out = Tensor(out_data)
    if _TAPE_STACK:
        _TAPE_STACK[-1].nodes.append(Node(op, inputs, out, backward_fn))
    return out


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    # Sum grad down to `shape` after numpy broadcasting in the forward op.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise and reduction ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", (a, b), out, bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", (a, b), out, bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", (a, b), out, bwd)


def relu(a):
    a = _as_tensor(a)
    out = np.maximum(a.data, 0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _record("relu", (a,), out, bwd)


def sigmoid(a):
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g, out=out):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (a,), out, bwd)


def tanh(a):
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g, out=out):
        return (g * (1.0 - out * out),)

    return _record("tanh", (a,), out, bwd)


def softmax(a, axis=-1):
    """Shift-invariant softmax via max subtraction."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g, out=out):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (a,), out, bwd)


def reduce_sum(a, axis=None):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record("sum", (a,), out, bwd)


def reduce_max(a, axis):
    """Max along one axis; gradient flows to the first argmax on ties."""
    a = _as_tensor(a)
    out = a.data.max(axis=axis)
    idx = a.data.argmax(axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(
            full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
        )
        return (full,)

    return _record("max", (a,), out, bwd)


def squared_error(pred, target):
    """Elementwise (pred - target)^2."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    diff = pred.data - target.data
    out = diff * diff

    def bwd(g):
        return (
            _unbroadcast(2.0 * g * diff, pred.shape),
            _unbroadcast(-2.0 * g * diff, target.shape),
        )

    return _record("squared_error", (pred, target), out, bwd)


def stop_gradient(a):
    """Identity forward; blocks all gradient flow."""
    a = _as_tensor(a)

    def bwd(g):
        return (None,)

    return _record("stop_gradient", (a,), a.data.copy(), bwd)


# ---------------------------------------------------------------------------
# Shape ops


def reshape(a, shape):
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.shape),)

    return _record("reshape", (a,), out, bwd)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", tuple(tensors), out, bwd)


def slice_axis(a, axis, start, stop):
    a = _as_tensor(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = a.data[index]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _record("slice", (a,), out, bwd)


def select_actions(q, actions):
    """Row-wise pick: out[b] = q[b, actions[b]] for a 2-D q."""
    q = _as_tensor(q)
    if q.data.ndim != 2:
        raise ShapeError(f"select_actions expects 2-D values, got {q.shape}")
    actions = np.asarray(actions, dtype=np.int64)
    rows = np.arange(q.data.shape[0])
    out = q.data[rows, actions]

    def bwd(g):
        full = np.zeros_like(q.data)
        full[rows, actions] = g
        return (full,)

    return _record("select_actions", (q,), out, bwd)


# ---------------------------------------------------------------------------
# Linear algebra / network ops


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", (a, b), out, bwd)


def _im2col(x, kh, kw, stride):
    b, h, w, c = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sb, sh, sw, sc = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, oh, ow, kh, kw, c),
        strides=(sb, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    return cols.reshape(b, oh * ow, kh * kw * c), oh, ow


def conv2d(x, w, stride=1, padding=0):
    """2-D convolution with symmetric zero padding; x is NHWC, w is
    (kh, kw, cin, cout)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects NHWC input and 4-D filters, got {x.shape}, {w.shape}")
    b, h, wid, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if cin != wcin:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs filters {w.shape}")
    if h + 2 * padding < kh or wid + 2 * padding < kw:
        raise ShapeError(f"conv2d input {x.shape} smaller than kernel {w.shape}")
    if padding:
        xdata = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xdata = x.data
    cols, oh, ow = _im2col(xdata, kh, kw, stride)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ wmat).reshape(b, oh, ow, cout)

    def bwd(g):
        gmat = g.reshape(b, oh * ow, cout)
        gw = np.einsum("bpk,bpo->ko", cols, gmat).reshape(w.shape)
        gcols = gmat @ wmat.T  # (b, oh*ow, kh*kw*cin)
        gx = np.zeros_like(xdata)
        gcols = gcols.reshape(b, oh, ow, kh, kw, cin)
        for i in range(kh):
            for j in range(kw):
                gx[:, i : i + oh * stride : stride, j : j + ow * stride : stride, :] += gcols[
                    :, :, :, i, j, :
                ]
        if padding:
            gx = gx[:, padding:-padding, padding:-padding, :]
        return gx, gw

    return _record("conv2d", (x, w), out, bwd)


def lstm_cell(x, h, c, w, b):
    """One step of an LSTM cell with packed weights.

    x: (B, I), h/c: (B, H), w: (I+H, 4H), b: (4H,). Gate order is
    [input, forget, candidate, output]; returns (h', c').
    Built from recorded primitives, so it is differentiable end to end.
    """
    x, h, c = _as_tensor(x), _as_tensor(h), _as_tensor(c)
    hidden = h.data.shape[-1]
    if w.data.shape != (x.data.shape[-1] + hidden, 4 * hidden):
        raise ShapeError(
            f"lstm_cell weights {w.data.shape} do not match input {x.shape} + hidden {h.shape}"
        )
    xh = concat([x, h], axis=-1)
    gates = add(matmul(xh, w), b)
    i = sigmoid(slice_axis(gates, -1, 0, hidden))
    f = sigmoid(slice_axis(gates, -1, hidden, 2 * hidden))
    g = tanh(slice_axis(gates, -1, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(gates, -1, 3 * hidden, 4 * hidden))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


# ---------------------------------------------------------------------------
# Backward pass


def backward(tape, loss):
    """Gradients of a scalar loss w.r.t. every requires_grad leaf on the tape.

    Visits each node exactly once in reverse topological order. Returns a
    dict keyed by leaf Tensor (identity).
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._used:
        raise AutodiffError("tape already backward()-ed; re-run the forward pass")
    tape._used = True

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        in_grads = node.backward_fn(g_out)
        for t, g in zip(node.inputs, in_grads):
            if g is None:
                continue
            g = g.astype(t.data.dtype, copy=False)
            cur = grads.get(id(t))
            grads[id(t)] = g if cur is None else cur + g
    # Leaves are never node outputs, so their accumulated grads survive the
    # pops above; collect them keyed by tensor identity.
    out = {}
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and t not in out and id(t) in grads:
                out[t] = grads[id(t)]
    if loss.requires_grad:
        out.setdefault(loss, np.ones_like(loss.data))
    return out
