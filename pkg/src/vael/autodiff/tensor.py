"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Ops record onto a module-level active tape whenever gradients are enabled and
any input requires them.  ``backward`` walks the tape once in reverse
execution order (a valid topological order), accumulates gradients into leaf
tensors, and consumes the tape; a second backward without a fresh forward
pass raises.  A tape is single-owner: do not interleave independent graphs
you intend to differentiate separately.

Every op traps non-finite outputs.  There is no broadcasting beyond
``bias_add``; shapes must match exactly elsewhere.
"""
from __future__ import annotations

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeMismatchError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class TapeError(AutodiffError):
    pass


class Tape:
    """Execution-ordered record of differentiable ops."""

    __slots__ = ("nodes", "consumed")

    def __init__(self):
        self.nodes = []
        self.consumed = False


class _Node:
    __slots__ = ("out", "inputs", "backward_fn", "tape")

    def __init__(self, out, inputs, backward_fn, tape):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.tape = tape


_active_tape = Tape()
_grad_enabled = True


def active_tape() -> Tape:
    return _active_tape


class no_grad:
    """Context manager disabling tape recording (inference paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """Dense float64 array that can participate in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def _check_finite(arr, op_name):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {op_name}")


def _record(out: Tensor, inputs, backward_fn):
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = _Node(out, tuple(inputs), backward_fn, _active_tape)
        _active_tape.nodes.append(node)
        out._node = node


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Returns a map from leaf tensor to the gradient contributed by this call.
    The tape is consumed: a new forward pass is required before the next
    backward.
    """
    global _active_tape
    if loss.data.size != 1:
        raise TapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    node = loss._node
    if node is None:
        raise TapeError("loss is not connected to any recorded operation")
    tape = node.tape
    if tape.consumed:
        raise TapeError("tape already consumed; run a new forward pass before backward")

    grads = {id(loss): np.ones_like(loss.data)}
    leaf_grads = {}
    for nd in reversed(tape.nodes):
        g_out = grads.pop(id(nd.out), None)
        if g_out is None:
            continue
        for t, g in zip(nd.inputs, nd.backward_fn(g_out)):
            if g is None or not t.requires_grad:
                continue
            if t._node is None:  # leaf (parameter or grad-enabled input)
                t.grad = g if t.grad is None else t.grad + g
                leaf_grads[t] = g if t not in leaf_grads else leaf_grads[t] + g
            else:
                k = id(t)
                grads[k] = g if k not in grads else grads[k] + g

    tape.consumed = True
    tape.nodes.clear()
    if tape is _active_tape:
        _active_tape = Tape()
    return leaf_grads


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops
# ---------------------------------------------------------------------------

def _same_shape(a, b, name):
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"{name}: {a.data.shape} vs {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    _check_finite(out.data, "add")
    _record(out, (a, b), lambda g: (g, g))
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    _check_finite(out.data, "sub")
    _record(out, (a, b), lambda g: (g, -g))
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    _check_finite(out.data, "mul")
    ad, bd = a.data, b.data
    _record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c)
    _check_finite(out.data, "scale")
    _record(out, (a,), lambda g: (g * c,))
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.data.shape} @ {b.data.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = Tensor(a.data @ b.data)
    _check_finite(out.data, "matmul")
    ad, bd = a.data, b.data
    _record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def bias_add(x, b) -> Tensor:
    """The one sanctioned broadcast: (B, N) + (N,) or (B, C, H, W) + (C,)."""
    x, b = as_tensor(x), as_tensor(b)
    if x.data.ndim == 2 and b.data.shape == (x.data.shape[1],):
        out = Tensor(x.data + b.data[None, :])
        axes = (0,)
    elif x.data.ndim == 4 and b.data.shape == (x.data.shape[1],):
        out = Tensor(x.data + b.data[None, :, None, None])
        axes = (0, 2, 3)
    else:
        raise ShapeMismatchError(f"bias_add: {x.data.shape} + {b.data.shape}")
    _check_finite(out.data, "bias_add")
    _record(out, (x, b), lambda g: (g, g.sum(axis=axes)))
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0
    _record(out, (x,), lambda g: (g * mask,))
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out_data = np.empty_like(xd)
    pos = xd >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out_data[~pos] = e / (1.0 + e)
    out = Tensor(out_data)
    _check_finite(out.data, "sigmoid")
    _record(out, (x,), lambda g: (g * out_data * (1.0 - out_data),))
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = Tensor(np.log(x.data))
    _check_finite(out.data, "log")
    xd = x.data
    _record(out, (x,), lambda g: (g / xd,))
    return out


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = Tensor(np.exp(x.data))
    _check_finite(out.data, "exp")
    od = out.data
    _record(out, (x,), lambda g: (g * od,))
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.tanh(x.data))
    od = out.data
    _record(out, (x,), lambda g: (g * (1.0 - od * od),))
    return out


def absval(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.abs(x.data))
    sign = np.sign(x.data)
    _record(out, (x,), lambda g: (g * sign,))
    return out


def clamp_min(x, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x exceeds the floor."""
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, floor))
    mask = x.data > floor
    _record(out, (x,), lambda g: (g * mask,))
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-sample normalization over all non-batch axes with a per-channel affine.

    ``gamma``/``beta`` have shape (C,) for 4-D input (C = axis 1) or (F,) for
    2-D input.  Stateless and deterministic, so checkpoints stay bit-exact.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    if xd.ndim == 4:
        if gamma.data.shape != (xd.shape[1],) or beta.data.shape != (xd.shape[1],):
            raise ShapeMismatchError(f"layer_norm affine {gamma.data.shape} vs channels {xd.shape[1]}")
        affine_shape = (1, -1, 1, 1)
        affine_axes = (0, 2, 3)
    elif xd.ndim == 2:
        if gamma.data.shape != (xd.shape[1],) or beta.data.shape != (xd.shape[1],):
            raise ShapeMismatchError(f"layer_norm affine {gamma.data.shape} vs features {xd.shape[1]}")
        affine_shape = (1, -1)
        affine_axes = (0,)
    else:
        raise ShapeMismatchError(f"layer_norm wants 2-D or 4-D input, got {xd.shape}")
    stat_axes = tuple(range(1, xd.ndim))
    mu = xd.mean(axis=stat_axes, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=stat_axes, keepdims=True)
    s = np.sqrt(var + eps)
    x_hat = (xd - mu) / s
    gam = gamma.data.reshape(affine_shape)
    out = Tensor(x_hat * gam + beta.data.reshape(affine_shape))
    _check_finite(out.data, "layer_norm")

    def bwd(g):
        dgamma = (g * x_hat).sum(axis=affine_axes)
        dbeta = g.sum(axis=affine_axes)
        dx_hat = g * gam
        m1 = dx_hat.mean(axis=stat_axes, keepdims=True)
        m2 = (dx_hat * x_hat).mean(axis=stat_axes, keepdims=True)
        dx = (dx_hat - m1 - x_hat * m2) / s
        return dx, dgamma, dbeta

    _record(out, (x, gamma, beta), bwd)
    return out


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(out_data)
    _check_finite(out.data, "softmax")

    def bwd(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    _record(out, (x,), bwd)
    return out


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    out = Tensor(out_data)
    _check_finite(out.data, "log_softmax")

    def bwd(g):
        return (g - np.exp(out_data) * g.sum(axis=axis, keepdims=True),)

    _record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.data.ndim)
    out = Tensor(x.data.sum(axis=axes))
    _check_finite(out.data, "sum")
    shape = x.data.shape

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    _record(out, (x,), bwd)
    return out


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.data.ndim)
    count = 1
    for a in axes:
        count *= x.data.shape[a]
    out = Tensor(x.data.mean(axis=axes))
    _check_finite(out.data, "mean")
    shape = x.data.shape

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g, axes), shape) / count,)

    _record(out, (x,), bwd)
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape))
    orig = x.data.shape
    _record(out, (x,), lambda g: (g.reshape(orig),))
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    _check_finite(out.data, "concat")
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    _record(out, tuple(tensors), bwd)
    return out


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis (reverse pads with zeros)."""
    x = as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(x.data[index])
    shape = x.data.shape

    def bwd(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    _record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# 2-D convolution and its transpose (NCHW, im2col lowering)
# ---------------------------------------------------------------------------

def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _gather(canvas, kh, kw, sh, sw, nh, nw):
    """(B, C, H, W) canvas -> (B, C*kh*kw, nh*nw) patch matrix."""
    bsz, ch = canvas.shape[:2]
    cols = np.empty((bsz, ch, kh, kw, nh, nw), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = canvas[:, :, i : i + sh * nh : sh, j : j + sw * nw : sw]
    return cols.reshape(bsz, ch * kh * kw, nh * nw)


def _scatter(cols, canvas_shape, kh, kw, sh, sw, nh, nw):
    """Adjoint of _gather: scatter-add patches back onto a zero canvas."""
    bsz, ch = canvas_shape[:2]
    canvas = np.zeros(canvas_shape, dtype=np.float64)
    cols = cols.reshape(bsz, ch, kh, kw, nh, nw)
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i : i + sh * nh : sh, j : j + sw * nw : sw] += cols[:, :, i, j]
    return canvas


def conv2d(x, w, b=None, stride=1, padding=0) -> Tensor:
    """x: (B, Cin, H, W), w: (Cout, Cin, kh, kw) -> (B, Cout, Ho, Wo)."""
    x, w = as_tensor(x), as_tensor(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatchError(f"conv2d: x {x.data.shape}, w {w.data.shape}")
    bsz, cin, h, wdt = x.data.shape
    cout, _, kh, kw = w.data.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wdt + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeMismatchError(f"conv2d: kernel {w.data.shape} too large for input {x.data.shape}")

    canvas = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _gather(canvas, kh, kw, sh, sw, ho, wo)  # (B, K, L)
    wr = w.data.reshape(cout, -1)
    out_data = (wr @ cols).reshape(bsz, cout, ho, wo)
    out = Tensor(out_data)
    _check_finite(out.data, "conv2d")

    def bwd(g):
        g2 = g.reshape(bsz, cout, ho * wo)
        dw = np.einsum("bol,bkl->ok", g2, cols).reshape(w.data.shape)
        dcols = wr.T @ g2
        dcanvas = _scatter(dcols, canvas.shape, kh, kw, sh, sw, ho, wo)
        dx = dcanvas[:, :, ph : ph + h, pw : pw + wdt]
        return dx, dw

    _record(out, (x, w), bwd)
    if b is not None:
        out = bias_add(out, b)
    return out


def conv_transpose2d(x, w, b=None, stride=1, padding=0, output_padding=0) -> Tensor:
    """x: (B, Cin, H, W), w: (Cin, Cout, kh, kw) -> (B, Cout, Ho, Wo).

    Ho = (H-1)*stride - 2*padding + kh + output_padding.  Exact adjoint of
    conv2d with the same geometry when weights are shared.
    """
    x, w = as_tensor(x), as_tensor(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oph, opw = _pair(output_padding)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatchError(f"conv_transpose2d: x {x.data.shape}, w {w.data.shape}")
    bsz, cin, h, wdt = x.data.shape
    _, cout, kh, kw = w.data.shape
    ho = (h - 1) * sh - 2 * ph + kh + oph
    wo = (wdt - 1) * sw - 2 * pw + kw + opw
    if ho <= 0 or wo <= 0:
        raise ShapeMismatchError("conv_transpose2d: empty output")

    canvas_shape = (bsz, cout, ho + 2 * ph, wo + 2 * pw)
    wr = w.data.reshape(cin, cout * kh * kw)
    xr = x.data.reshape(bsz, cin, h * wdt)
    cols = np.matmul(wr.T[None], xr)  # (B, K, H*W)
    canvas = _scatter(cols, canvas_shape, kh, kw, sh, sw, h, wdt)
    out_data = canvas[:, :, ph : ph + ho, pw : pw + wo]
    out = Tensor(out_data)
    _check_finite(out.data, "conv_transpose2d")

    def bwd(g):
        gc = np.zeros(canvas_shape)
        gc[:, :, ph : ph + ho, pw : pw + wo] = g
        dcols = _gather(gc, kh, kw, sh, sw, h, wdt)  # (B, K, H*W)
        dx = np.matmul(wr[None], dcols).reshape(x.data.shape)
        dw = np.einsum("bih,bkh->ik", xr, dcols).reshape(w.data.shape)
        return dx, dw

    _record(out, (x, w), bwd)
    if b is not None:
        out = bias_add(out, b)
    return out
