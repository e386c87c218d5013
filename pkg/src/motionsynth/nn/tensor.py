"""Dense float64 tensors with reverse-mode gradients.

Every op records its parents and a closure that pushes the output gradient
back to them. ``Tensor.backward`` walks the graph in reverse topological
order. Broadcasting follows numpy; gradients are summed back to the operand
shape.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ShapeMismatch

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100
    # make numpy operators defer to the Tensor's reflected methods
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # -- basics --------------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.shape)
        else:
            self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None):
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if grad is None:
            if self.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar --------------------------------------------------------
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

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def _topological(root: Tensor) -> list:
    order, seen = [], set()
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
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                            unbroadcast(g * a.data, b.shape) if b.requires_grad else None))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                            unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data ** exponent, (a,),
                 lambda g: (g * exponent * a.data ** (exponent - 1),))


def _unary(a, value: np.ndarray, local: Callable[[], np.ndarray]) -> Tensor:
    a = as_tensor(a)
    return _make(value, (a,), lambda g: (g * local(),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _unary(a, out, lambda: out)


def log(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.log(a.data), lambda: 1.0 / a.data)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _unary(a, out, lambda: 0.5 / out)


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.sin(a.data), lambda: np.cos(a.data))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.cos(a.data), lambda: -np.sin(a.data))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _unary(a, out, lambda: 1.0 - out * out)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _unary(a, out, lambda: out * (1.0 - out))


LEAKY_SLOPE = 0.2


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    local = np.where(a.data > 0, 1.0, slope)
    return _unary(a, a.data * local, lambda: local)


# -- reductions and shape ---------------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make(out, (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)

    def back(g):
        full = np.zeros(a.shape)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _make(a.data[index], (a,), back)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)
    return _make(out, ts, lambda g: tuple(np.moveaxis(g, axis, 0)))


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select ``a`` where ``mask`` (a constant boolean array) holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    return _make(np.where(mask, a.data, b.data), (a, b),
                 lambda g: (unbroadcast(np.where(mask, g, 0.0), a.shape),
                            unbroadcast(np.where(mask, 0.0, g), b.shape)))


# -- linear algebra -----------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1,) + a.shape), b), b.shape[:-2] + b.shape[-1:])
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def back(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), back)


def dense(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def conv1d(x, weight, bias=None) -> Tensor:
    """Same-length temporal cross-correlation.

    ``x`` is ``(C_in, T)`` or ``(B, C_in, T)``; ``weight`` is ``(C_out, C_in, K)``
    with odd ``K``; zeros pad ``(K-1)/2`` frames on each side.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3:
        raise ShapeMismatch("conv1d expects input (B, C, T) and weight (C_out, C_in, K)")
    B, C, T = xd.shape
    O, Ci, K = weight.shape
    if Ci != C:
        raise ShapeMismatch(f"conv1d input has {C} channels, weight expects {Ci}")
    if K % 2 != 1:
        raise ShapeMismatch("conv1d kernel width must be odd")
    pad = (K - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, T, axis=2)  # (B, C, K, T)
    out = np.einsum("bckt,ock->bot", cols, weight.data, optimize=True)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (O,):
            raise ShapeMismatch(f"conv1d bias must have shape ({O},)")
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def back(g):
        gb = g[None] if squeeze and g.ndim == 2 else g
        gx = gw = None
        if x.requires_grad:
            gcols = np.einsum("bot,ock->bckt", gb, weight.data, optimize=True)
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[:, :, k:k + T] += gcols[:, :, k, :]
            gx = gxp[:, :, pad:pad + T]
            if squeeze:
                gx = gx[0]
        if weight.requires_grad:
            gw = np.einsum("bot,bckt->ock", gb, cols, optimize=True)
        grads = [gx, gw]
        if bias is not None:
            grads.append(gb.sum(axis=(0, 2)))
        return tuple(grads)

    return _make(out[0] if squeeze else out, parents, back)


def bilinear(h_c, h_s, weight) -> Tensor:
    """``out[..., o] = sum_ij h_c[..., i] W[i, o, j] h_s[..., j]``."""
    h_c, h_s, weight = as_tensor(h_c), as_tensor(h_s), as_tensor(weight)
    if weight.ndim != 3 or h_c.shape[-1] != weight.shape[0] or h_s.shape[-1] != weight.shape[2]:
        raise ShapeMismatch(f"bilinear shapes {h_c.shape}, {h_s.shape}, {weight.shape} do not match")
    if h_c.shape[:-1] != h_s.shape[:-1]:
        raise ShapeMismatch("bilinear operands must share leading dimensions")
    I, O, S = weight.shape
    lead = h_c.shape[:-1]
    c = h_c.data.reshape(-1, I)
    st = h_s.data.reshape(-1, S)
    w2 = weight.data.reshape(I * O, S)
    z = (st @ w2.T).reshape(-1, I, O)  # z[n, i, o] = sum_j W[i, o, j] h_s[n, j]
    out = np.einsum("ni,nio->no", c, z).reshape(lead + (O,))

    def back(g):
        g2 = g.reshape(-1, O)
        gc = np.einsum("no,nio->ni", g2, z).reshape(h_c.shape) if h_c.requires_grad else None
        gs = gw = None
        if h_s.requires_grad or weight.requires_grad:
            u = (c[:, :, None] * g2[:, None, :]).reshape(-1, I * O)
            if h_s.requires_grad:
                gs = (u @ w2).reshape(h_s.shape)
            if weight.requires_grad:
                gw = (u.T @ st).reshape(I, O, S)
        return gc, gs, gw

    return _make(out, (h_c, h_s, weight), back)


def gram(h) -> Tensor:
    """``H @ H^T`` over the last two axes: ``(..., T, C) -> (..., T, T)``."""
    h = as_tensor(h)
    return matmul(h, h.swapaxes(-1, -2))


def mse_loss(pred, target) -> Tensor:
    """Mean of squared differences."""
    d = sub(pred, target)
    return mean(d * d)


def norm(a, axis: int = -1, keepdims: bool = True) -> Tensor:
    return sqrt(tsum(a * a, axis=axis, keepdims=keepdims))


def normalize(a, axis: int = -1) -> Tensor:
    return a / norm(a, axis=axis, keepdims=True)
