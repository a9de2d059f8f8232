"""Minimal reverse-mode autodiff over float32 numpy arrays.

Only the ops the training losses need. Results of ops on tensors that do
not require gradients carry no tape, so target-network and rollout
forwards stay graph-free. Set EGRPO_CHECK_FINITE=1 to assert finiteness
after every op (slow; off by default — train loops guard at the loss).
"""

import os

import numpy as np

from .. import _kernels as K

_CHECK_FINITE = os.environ.get("EGRPO_CHECK_FINITE", "0") == "1"


class Tensor:
    """float32 array with an optional gradient slot and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        """Raw values, outside the graph."""
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar loss into every reachable .grad."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None:
                node._bwd(node.grad)
                # free the closure; graphs are single-use
                node._bwd = None
                node._parents = ()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.grad is not None else 'no'})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, bwd):
    out = Tensor(data)
    if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite values produced by an op")
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(g, shape):
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(np.float32, copy=False)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd)


def scale(a, s):
    a = _as_tensor(a)
    s = np.float32(s)
    data = a.data * s

    def bwd(g):
        a._accum(g * s)

    return _make(data, (a,), bwd)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def bwd(g):
        if a.requires_grad or a._parents:
            a._accum(g @ b.data.T)
        if b.requires_grad or b._parents:
            b._accum(a.data.T @ g)

    return _make(data, (a, b), bwd)


def square(a):
    a = _as_tensor(a)
    data = a.data * a.data

    def bwd(g):
        a._accum(g * (2.0 * a.data))

    return _make(data, (a,), bwd)


def tanh(a):
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - data * data))

    return _make(data, (a,), bwd)


def exp(a):
    a = _as_tensor(a)
    data = np.exp(a.data)

    def bwd(g):
        a._accum(g * data)

    return _make(data, (a,), bwd)


def gelu(a):
    a = _as_tensor(a)
    data = K.gelu_fwd(a.data)

    def bwd(g):
        a._accum(K.gelu_bwd(a.data, g))

    return _make(data, (a,), bwd)


def layernorm(a, ln_scale, ln_shift):
    """Row-wise layer norm over the last axis of a 2-D tensor."""
    a, ln_scale, ln_shift = _as_tensor(a), _as_tensor(ln_scale), _as_tensor(ln_shift)
    data, mean, rstd = K.layernorm_fwd(a.data, ln_scale.data, ln_shift.data)

    def bwd(g):
        gx, gscale, gshift = K.layernorm_bwd(a.data, ln_scale.data, mean, rstd, g)
        if a.requires_grad or a._parents:
            a._accum(gx)
        if ln_scale.requires_grad:
            ln_scale._accum(gscale)
        if ln_shift.requires_grad:
            ln_shift._accum(gshift)

    return _make(data, (a, ln_scale, ln_shift), bwd)


def l2normalize(a):
    """Normalize each row of a 2-D tensor to unit L2 norm."""
    a = _as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    norm = np.maximum(norm, np.float32(1e-12))
    data = a.data / norm

    def bwd(g):
        # d(x/|x|) = (g - xhat * <g, xhat>) / |x|
        dot = (g * data).sum(axis=1, keepdims=True)
        a._accum((g - data * dot) / norm)

    return _make(data, (a,), bwd)


def concat(parts, axis=-1):
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bwd(g):
        offs = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offs[:-1], offs[1:]):
            if p.requires_grad or p._parents:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p._accum(np.ascontiguousarray(g[tuple(idx)]))

    return _make(data, tuple(parts), bwd)


def row_sum(a):
    """Sum over the last axis of a 2-D tensor, giving shape (B,)."""
    a = _as_tensor(a)
    data = a.data.sum(axis=1)

    def bwd(g):
        a._accum(np.broadcast_to(g[:, None], a.data.shape).astype(np.float32))

    return _make(data, (a,), bwd)


def mean(a):
    a = _as_tensor(a)
    data = np.float32(a.data.mean())

    def bwd(g):
        a._accum(np.full_like(a.data, g / a.data.size))

    return _make(np.asarray(data), (a,), bwd)


def expectile(residual, tau):
    """Asymmetric square loss |tau - 1(x<0)| * x^2, elementwise.

    The weight factor is treated as locally constant (exact a.e.), so the
    gradient is weight * 2x.
    """
    residual = _as_tensor(residual)
    x = residual.data
    w = np.where(x < 0.0, np.float32(1.0 - tau), np.float32(tau))
    data = w * x * x

    def bwd(g):
        residual._accum(g * w * (2.0 * x))

    return _make(data, (residual,), bwd)


def assert_finite(t, what="loss"):
    data = t.data if isinstance(t, Tensor) else t
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite {what}")
    return t
