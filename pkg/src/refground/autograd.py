"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations the grounding network needs are implemented. Tensors
wrap a numpy array, remember their parents, and accumulate gradients on
``backward()``. Wrapping plain numbers or arrays in an op produces
constant (non-differentiable) inputs, which is how dataset features enter
the graph. dtype is carried by the underlying arrays: build parameters in
float32 or float64 and the whole graph follows.
"""

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):
            self.data = np.asarray(data)  # 0-d, keeps the scalar's dtype
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._backward is not None:
                node._backward(node.grad)
            node._backward = None
            node._parents = ()

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self):
        return mean(self)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _toposort(root):
    seen = set()
    order = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order[::-1]


def _as_tensor(x, ref_dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=ref_dtype if ref_dtype is not None else np.float64)
    return Tensor(arr)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data, parents, backward):
    rg = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=rg, parents=tuple(p for p in parents if p.requires_grad), backward=backward if rg else None)


# -- arithmetic ---------------------------------------------------------

def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out_data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out_data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(np.asarray(out_data), (a,), backward)


def mean(a):
    a = _as_tensor(a)
    n = a.data.size
    out_data = np.asarray(a.data.mean())

    def backward(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _make(out_data, (a,), backward)


# -- nonlinearities -----------------------------------------------------

def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    out_data = a.data * mask

    def backward(g):
        _accum(a, g * mask)

    return _make(out_data, (a,), backward)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def sigmoid(a):
    a = _as_tensor(a)
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    a = _as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), backward)


def clamp(a, lo, hi):
    a = _as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)

    def backward(g):
        _accum(a, g * mask)

    return _make(out_data, (a,), backward)


# -- shape ops ----------------------------------------------------------

def reshape(a, shape):
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def transpose(a):
    a = _as_tensor(a)

    def backward(g):
        _accum(a, g.T)

    return _make(a.data.T, (a,), backward)


def getitem(a, key):
    """Basic (non-fancy) indexing; each output element maps to one input."""
    a = _as_tensor(a)
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accum(a, full)

    return _make(np.ascontiguousarray(out_data), (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accum(t, g[tuple(index)])
            offset += size

    return _make(out_data, tuple(tensors), backward)


def tile_rows(a, n):
    """Repeat a (1, D) row n times to (n, D)."""
    a = _as_tensor(a)
    out_data = np.broadcast_to(a.data, (n, a.data.shape[1])).copy()

    def backward(g):
        _accum(a, g.sum(axis=0, keepdims=True))

    return _make(out_data, (a,), backward)


def flip0(a):
    a = _as_tensor(a)
    out_data = np.ascontiguousarray(a.data[::-1])

    def backward(g):
        _accum(a, np.ascontiguousarray(g[::-1]))

    return _make(out_data, (a,), backward)


def embedding(table, ids):
    """Select rows of a (V, D) table by an integer id array."""
    ids = np.asarray(ids, dtype=np.int64)
    out_data = np.ascontiguousarray(table.data[ids])

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _accum(table, full)

    return _make(out_data, (table,), backward)


# -- fused ops ----------------------------------------------------------

def softmax(a, axis, mask=None):
    """Softmax along ``axis``; entries where ``mask`` is False are exactly 0
    and excluded from the normalization."""
    a = _as_tensor(a)
    x = a.data
    if mask is None:
        xm = x.max(axis=axis, keepdims=True)
        e = np.exp(x - xm)
    else:
        mask = np.asarray(mask, dtype=bool)
        neg = np.where(mask, x, -np.inf)
        xm = neg.max(axis=axis, keepdims=True)
        xm = np.where(np.isfinite(xm), xm, 0.0)
        e = np.where(mask, np.exp(x - xm), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    z = np.where(z == 0.0, 1.0, z)
    y = e / z

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(a, y * (g - dot))

    return _make(y, (a,), backward)


def lstm(x, wx, wh, b):
    """LSTM over a (T, Din) sequence with zero initial state -> (T, H).

    The input projection runs as one matmul; the recurrence goes through
    the active kernel backend.
    """
    x = _as_tensor(x)
    xg = x.data @ wx.data + b.data
    h_seq, c_seq, gates = kernels.lstm_forward(xg, wh.data)

    def backward(g):
        dxg, dwh = kernels.lstm_backward(np.ascontiguousarray(g), wh.data, h_seq, c_seq, gates)
        _accum(wh, dwh)
        _accum(b, dxg.sum(axis=0))
        if wx.requires_grad:
            _accum(wx, x.data.T @ dxg)
        if x.requires_grad:
            _accum(x, dxg @ wx.data.T)

    return _make(h_seq, (x, wx, wh, b), backward)


def rowwise_weighted_sum(weights, feats):
    """out[i] = sum_j weights[i, j] * feats[i, j, :] for constant feats."""
    weights = _as_tensor(weights)
    feats = np.asarray(feats)
    out_data = np.einsum("nm,nmd->nd", weights.data, feats)

    def backward(g):
        _accum(weights, np.einsum("nd,nmd->nm", g, feats))

    return _make(out_data, (weights,), backward)


def cross_entropy_sum(logits, targets):
    """Sum over rows of -log softmax(logits)[target]."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    x = logits.data
    xm = x.max(axis=1, keepdims=True)
    e = np.exp(x - xm)
    z = e.sum(axis=1, keepdims=True)
    logp = (x - xm) - np.log(z)
    rows = np.arange(x.shape[0])
    out_data = np.asarray(-logp[rows, targets].sum())

    def backward(g):
        d = e / z
        d[rows, targets] -= 1.0
        _accum(logits, d * g)

    return _make(out_data, (logits,), backward)


def weighted_bce_logits(logits, targets, weights):
    """Mean over classes of per-class-weighted binary cross entropy."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype)
    z = logits.data
    per = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray((weights * per).mean())
    n = per.size

    def backward(g):
        sig = np.empty_like(z)
        pos = z >= 0
        sig[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ex = np.exp(z[~pos])
        sig[~pos] = ex / (1.0 + ex)
        _accum(logits, g * weights * (sig - targets) / n)

    return _make(out_data, (logits,), backward)
