"""Reverse-mode automatic differentiation on numpy arrays.

Each operation records parent links and a backward closure on the produced
tensor; ``Tensor.backward`` replays the recorded graph in reverse topological
order and accumulates gradients into leaf tensors that carry
``requires_grad``. Gradient accumulation is additive: calling backward twice
without clearing ``grad`` doubles it. The engine is deliberately small —
only the primitives needed by the encoder are implemented — and stays in
whatever float dtype the inputs carry (float32 for training, float64 for
finite-difference checks).
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of self w.r.t. every recorded leaf.

        ``grad`` seeds the backward pass; it defaults to 1 and is only
        optional for scalar tensors.
        """
        if self._backward is None:
            raise GraphError("backward on a tensor with no recorded computation")
        if grad is None:
            if self.data.size != 1:
                raise GraphError("implicit backward gradient requires a scalar")
            grad = np.ones_like(self.data)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in _toposort(self):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or (not parent.requires_grad and parent._backward is None):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar; scalars and ndarrays are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()  # root first
    return order


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _record(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear algebra primitives


def add(x, y) -> Tensor:
    x, y = _wrap(x), _wrap(y)
    data = x.data + y.data

    def bwd(g):
        return _unbroadcast(g, x.data.shape), _unbroadcast(g, y.data.shape)

    return _record(data, (x, y), bwd)


def mul(x, y) -> Tensor:
    x, y = _wrap(x), _wrap(y)
    data = x.data * y.data

    def bwd(g):
        return _unbroadcast(g * y.data, x.data.shape), _unbroadcast(g * x.data, y.data.shape)

    return _record(data, (x, y), bwd)


def matmul(x, y) -> Tensor:
    x, y = _wrap(x), _wrap(y)
    if x.data.ndim < 2 or y.data.ndim < 2:
        raise GraphError("matmul requires operands with at least 2 dimensions")
    data = x.data @ y.data

    def bwd(g):
        gx = g @ np.swapaxes(y.data, -1, -2)
        gy = np.swapaxes(x.data, -1, -2) @ g
        return _unbroadcast(gx, x.data.shape), _unbroadcast(gy, y.data.shape)

    return _record(data, (x, y), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _wrap(x)
    data = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.data.shape),)

    return _record(data, (x,), bwd)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    x = _wrap(x)
    data = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        return (np.transpose(g, inverse),)

    return _record(data, (x,), bwd)


def mean(x: Tensor, axis: int) -> Tensor:
    x = _wrap(x)
    data = x.data.mean(axis=axis)
    n = x.data.shape[axis]

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.data.shape) / n,)

    return _record(data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    x = _wrap(x)
    data = np.asarray(x.data.sum())

    def bwd(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    return _record(data, (x,), bwd)


# ---------------------------------------------------------------------------
# activations and normalization


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = _sigmoid(x.data)

    def bwd(g):
        return (g * s * (1.0 - s),)

    return _record(s, (x,), bwd)


def swish(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = _sigmoid(x.data)
    data = x.data * s

    def bwd(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return _record(data, (x,), bwd)


def glu(x: Tensor, axis: int = -1) -> Tensor:
    """Gated linear unit: split ``axis`` in half, first half gated by sigmoid of second."""
    x = _wrap(x)
    n = x.data.shape[axis]
    if n % 2:
        raise GraphError("glu axis length must be even")
    a, b = np.split(x.data, 2, axis=axis)
    sb = _sigmoid(b)
    data = a * sb

    def bwd(g):
        ga = g * sb
        gb = g * a * sb * (1.0 - sb)
        return (np.concatenate([ga, gb], axis=axis),)

    return _record(data, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((g - dot) * s,)

    return _record(s, (x,), bwd)


def axis_norm(x: Tensor, gain: Tensor, bias: Tensor, axis: int, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit population variance along ``axis``,
    then scale and shift with broadcastable ``gain``/``bias``."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    mu = x.data.mean(axis=axis, keepdims=True)
    var = x.data.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def bwd(g):
        gy = g * gain.data
        m1 = gy.mean(axis=axis, keepdims=True)
        m2 = (gy * xhat).mean(axis=axis, keepdims=True)
        gx = (gy - m1 - xhat * m2) * inv
        ggain = _unbroadcast(g * xhat, gain.data.shape)
        gbias = _unbroadcast(g, bias.data.shape)
        return gx, ggain, gbias

    return _record(data, (x, gain, bias), bwd)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return _wrap(x)
    if rng is None:
        raise GraphError("training-mode dropout requires an rng")
    x = _wrap(x)
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    data = x.data * keep

    def bwd(g):
        return (g * keep,)

    return _record(data, (x,), bwd)


# ---------------------------------------------------------------------------
# 1-D convolutions (stride 1, odd kernel, same-length padding)


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(x, k, axis=-1)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Full cross-channel conv: x [B,Ci,T], w [Co,Ci,K], b [Co] -> [B,Co,T]."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    k = w.data.shape[-1]
    if k % 2 == 0:
        raise GraphError("conv1d kernel must be odd for same-length output")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    win = _windows(xp, k)  # [B,Ci,T,K]
    data = np.einsum("bitk,oik->bot", win, w.data, optimize=True) + b.data[:, None]

    def bwd(g):
        dw = np.einsum("bot,bitk->oik", g, win, optimize=True)
        db = g.sum(axis=(0, 2))
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad)))
        gwin = _windows(gp, k)  # [B,Co,T,K]
        dx = np.einsum("botk,oik->bit", gwin, w.data[:, :, ::-1], optimize=True)
        return dx, dw, db

    return _record(data, (x, w, b), bwd)


def depthwise_conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-channel temporal conv: x [B,C,T], w [C,K], b [C] -> [B,C,T]."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    k = w.data.shape[-1]
    if k % 2 == 0:
        raise GraphError("depthwise kernel must be odd for same-length output")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    win = _windows(xp, k)  # [B,C,T,K]
    data = np.einsum("bctk,ck->bct", win, w.data, optimize=True) + b.data[:, None]

    def bwd(g):
        dw = np.einsum("bct,bctk->ck", g, win, optimize=True)
        db = g.sum(axis=(0, 2))
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad)))
        gwin = _windows(gp, k)
        dx = np.einsum("bctk,ck->bct", gwin, w.data[:, ::-1], optimize=True)
        return dx, dw, db

    return _record(data, (x, w, b), bwd)


# ---------------------------------------------------------------------------
# loss injection


def scalar_with_grad(source: Tensor, value: float, grad_wrt_source: np.ndarray) -> Tensor:
    """Place an externally computed scalar loss on the tape.

    ``grad_wrt_source`` is d(value)/d(source); backward seeds the recorded
    graph below ``source`` with it.
    """
    source = _wrap(source)
    g0 = np.asarray(grad_wrt_source, dtype=source.data.dtype)
    if g0.shape != source.data.shape:
        raise GraphError("loss gradient shape must match the source tensor")

    def bwd(g):
        return (g * g0,)

    return _record(np.asarray(value, dtype=source.data.dtype), (source,), bwd)
