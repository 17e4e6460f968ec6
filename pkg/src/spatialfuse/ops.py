"""Differentiable primitives: matmul, conv2d, layer norm, softmax, GRU cell and
pointwise arithmetic.

All ops accept leading batch axes where that makes sense.  Each op's backward
closure returns one gradient (or None) per parent, in parent order.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError
from .tensor import Tensor, as_tensor

_faults: set[str] = set()


@contextmanager
def inject_fault(op: str):
    """Test hook: corrupt the backward pass of ``op`` (g -> 1.5 g + 0.01) while active."""
    _faults.add(op)
    try:
        yield
    finally:
        _faults.discard(op)


def _fault(op: str, g):
    if op in _faults and g is not None:
        return g * 1.5 + 0.01
    return g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# pointwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), bw, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, k: float) -> Tensor:
    """Multiply by a constant python scalar."""
    a = as_tensor(a)
    k = a.data.dtype.type(k)
    return Tensor._from_op(a.data * k, (a,), lambda g: (g * k,), "scale")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._from_op(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.dtype)
    return Tensor._from_op(y, (a,), lambda g: (g * y * (1 - y),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return Tensor._from_op(y, (a,), lambda g: (g * (1 - y * y),), "tanh")


def sign(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(np.sign(a.data), (a,), lambda g: (np.zeros_like(g),), "sign")


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    s = np.sign(a.data)
    return Tensor._from_op(np.abs(a.data), (a,), lambda g: (g * s,), "abs")


_POINTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "sign": sign,
    "abs": abs,
}


def elementwise(kind: str, *operands) -> Tensor:
    """Dispatch a pointwise op by name: add, sub, mul, relu, sigmoid, tanh, sign, abs."""
    try:
        fn = _POINTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(np.asarray(out, dtype=a.dtype), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    out = np.ascontiguousarray(np.transpose(a.data, axes))
    return Tensor._from_op(out, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] += g
        return (full,)

    return Tensor._from_op(np.array(out, dtype=a.dtype), (a,), bw, "getitem")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ContractError("concat needs at least one tensor")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise DimensionError(f"concat: shapes {ts[0].shape} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        out = []
        for i in range(len(ts)):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return out

    return Tensor._from_op(np.concatenate([t.data for t in ts], axis=ax), ts, bw, "concat")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product ``a @ b`` with numpy broadcasting on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _fault("matmul", _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            gb = _fault("matmul", _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
        return ga, gb

    return Tensor._from_op(np.matmul(a.data, b.data), (a, b), bw, "matmul")


def linear(x, w, b=None) -> Tensor:
    """Affine map ``x @ w + b`` with ``w`` stored as [in, out]."""
    y = matmul(x, w) if as_tensor(x).ndim >= 2 else reshape(matmul(reshape(x, (1, -1)), w), (-1,))
    return y if b is None else add(y, b)


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    ``x`` is [Cin, H, W] or [B, Cin, H, W]; ``w`` is [Cout, Cin, kh, kw].
    """
    x, w = as_tensor(x), as_tensor(w)
    unbatched = x.ndim == 3
    if unbatched:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if stride < 1 or pad < 0:
        raise ContractError(f"conv2d: need stride >= 1 and pad >= 0, got {stride}, {pad}")
    B, C, H, W = x.shape
    Cout, _, kh, kw = w.shape
    Hp, Wp = H + 2 * pad, W + 2 * pad
    if kh > Hp or kw > Wp:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho, Wo = (Hp - kh) // stride + 1, (Wp - kw) // stride + 1
    K = C * kh * kw
    w2 = w.data.reshape(Cout, K)

    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        cols = x.data.reshape(B, C, H * W)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(B, K, Ho * Wo)
    out = np.matmul(w2, cols)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (Cout,):
            raise DimensionError(f"conv2d: bias shape {b.shape} != ({Cout},)")
        out += b.data[:, None]
    out = out.reshape(B, Cout, Ho, Wo)

    def bw(g):
        g2 = g.reshape(B, Cout, Ho * Wo)
        gw = gb = gx = None
        if w.requires_grad:
            gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g2.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            if kh == 1 and kw == 1 and stride == 1 and pad == 0:
                gx = gcols.reshape(x.shape)
            else:
                gcols = gcols.reshape(B, C, kh, kw, Ho, Wo)
                gxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gcols[:, :, i, j]
                gx = gxp[:, :, pad:pad + H, pad:pad + W] if pad else gxp
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    y = Tensor._from_op(out, parents, bw, "conv2d")
    return reshape(y, y.shape[1:]) if unbatched else y


# ---------------------------------------------------------------------------
# normalisation and attention pieces
# ---------------------------------------------------------------------------

def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis with the biased variance, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm: last dimension is empty")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must be ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gb = g.sum(axis=lead) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return Tensor._from_op(out, (x, gamma, beta), bw, "layer_norm")


def softmax(x) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax: need a nonempty last axis, got {x.shape}")
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), bw, "softmax")


def attention(q, k, v, keep_weights: bool = False):
    """softmax(q k^T / sqrt(d)) v over [B, H, M, d] inputs, fused.

    Works one batch element at a time so every buffer stays small.  Same
    result as composing :func:`matmul` and :func:`softmax`.  With
    ``keep_weights`` the attention weights are returned as a second value
    (a plain array, not part of the graph).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 4 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must be equal [B, H, M, d]")
    B = q.shape[0]
    sc = q.dtype.type(1.0 / np.sqrt(q.shape[-1]))
    weights = []
    out = np.empty_like(q.data)
    for b in range(B):
        s = np.matmul(q.data[b], np.swapaxes(k.data[b], -1, -2))
        s *= sc
        s -= s.max(axis=-1, keepdims=True)
        np.exp(s, out=s)
        s /= s.sum(axis=-1, keepdims=True)
        np.matmul(s, v.data[b], out=out[b])
        weights.append(s)

    def bw(g):
        gq, gk, gv = np.empty_like(q.data), np.empty_like(k.data), np.empty_like(v.data)
        for b in range(B):
            a = weights[b]
            np.matmul(np.swapaxes(a, -1, -2), g[b], out=gv[b])
            da = np.matmul(g[b], np.swapaxes(v.data[b], -1, -2))
            row = (da * a).sum(axis=-1, keepdims=True)
            da -= row
            da *= a
            da *= sc
            np.matmul(da, k.data[b], out=gq[b])
            np.matmul(np.swapaxes(da, -1, -2), q.data[b], out=gk[b])
        return gq, gk, gv

    res = Tensor._from_op(out, (q, k, v), bw, "attention")
    if keep_weights:
        return res, np.stack(weights)
    return res


GRU_KEYS =("W_r", "U_r", "b_r", "W_u", "U_u", "b_u", "W_n", "U_n", "b_n")


def gru_cell(x, h, params: Mapping[str, Tensor]) -> Tensor:
    """One GRU step.

    r = sigmoid(x W_r + h U_r + b_r)
    u = sigmoid(x W_u + h U_u + b_u)
    n = tanh(x W_n + r * (h U_n) + b_n)
    h' = (1 - u) * n + u * h

    Weights are stored [in, out]; ``x`` is [di] or [B, di], ``h`` is [dh] or [B, dh].
    """
    x, h = as_tensor(x), as_tensor(h)
    di, dh = params["W_r"].shape
    if x.shape[-1] != di or h.shape[-1] != dh:
        raise DimensionError(f"gru_cell: x {x.shape} / h {h.shape} do not match W_r {params['W_r'].shape}")
    for k in ("U_r", "U_u", "U_n"):
        if params[k].shape != (dh, dh):
            raise DimensionError(f"gru_cell: {k} has shape {params[k].shape}, expected ({dh}, {dh})")
    r = sigmoid(add(add(linear(x, params["W_r"]), linear(h, params["U_r"])), params["b_r"]))
    u = sigmoid(add(add(linear(x, params["W_u"]), linear(h, params["U_u"])), params["b_u"]))
    n = tanh(add(add(linear(x, params["W_n"]), mul(r, linear(h, params["U_n"]))), params["b_n"]))
    return add(mul(sub(1.0, u), n), mul(u, h))


# ---------------------------------------------------------------------------
# operator overloads
# ---------------------------------------------------------------------------

Tensor.__add__ = lambda self, o: add(self, o)
Tensor.__radd__ = lambda self, o: add(o, self)
Tensor.__sub__ = lambda self, o: sub(self, o)
Tensor.__rsub__ = lambda self, o: sub(o, self)
Tensor.__mul__ = lambda self, o: mul(self, o)
Tensor.__rmul__ = lambda self, o: mul(o, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, o: matmul(self, o)
Tensor.__getitem__ = lambda self, idx: getitem(self, idx)
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
Tensor.T = property(lambda self: transpose(self))
