"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

The engine is deliberately small: a :class:`Tensor` wraps a numpy array plus an
optional graph node, every differentiable operation is a module-level function
building one node, and :func:`backward` runs a reverse topological sweep.  Only
the operator set the networks and losses actually need is provided.  There is
no general broadcasting; binary elementwise ops accept equal shapes or one
scalar (size-1) operand.

Precision is selectable per tensor (float32 for training, float64 for the
finite-difference gradient tests).  A graph is consumed by ``backward``;
calling it a second time on the same graph raises :class:`StateError` so
gradients can never silently double-accumulate.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, DomainError, StateError, ValidationError


class PaddingMode(Enum):
    ZERO = "zero"
    WRAP = "wrap"  # circular in W (longitude), zero in H


class _Node:
    """Backward-graph record: parents and a function mapping the output
    gradient to one gradient array per parent (or None)."""

    __slots__ = ("op", "parents", "backward_fn", "consumed")

    def __init__(self, op: str, parents: Sequence["Tensor"],
                 backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.op = op
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.consumed = False


class Tensor:
    """Dense N-dimensional float array with an optional autodiff node."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None, node: Optional[_Node] = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def _tracked(self) -> bool:
        return self.requires_grad or self.node is not None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # operator sugar used throughout the networks / losses
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if any(p._tracked() for p in parents):
        return Tensor(data, node=_Node(op, parents, backward_fn))
    return Tensor(data)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    """Require numpy-broadcastable shapes (mismatched axes must be size 1)."""
    sa, sb = a.data.shape, b.data.shape
    for axis in range(1, min(len(sa), len(sb)) + 1):
        da, db = sa[-axis], sb[-axis]
        if da != db and da != 1 and db != 1:
            raise DimensionError(
                f"{op}: shapes {sa} and {sb} not broadcastable (axis {-axis})")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise suite
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_shape(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _make(out, "add", [a, b], bwd)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_shape(a, b, "sub")
    out = a.data - b.data

    def bwd(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _make(out, "sub", [a, b], bwd)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, "neg", [a], lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_shape(a, b, "mul")
    out = a.data * b.data

    def bwd(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _make(out, "mul", [a, b], bwd)


def div(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    _check_same_shape(a, b, "div")
    out = a.data / b.data

    def bwd(g):
        return (_reduce_to(g / b.data, a.shape),
                _reduce_to(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, "div", [a, b], bwd)


def abs_(a) -> Tensor:
    a = _as_tensor(a)
    out = np.abs(a.data)
    sign = np.sign(a.data)
    return _make(out, "abs", [a], lambda g: (g * sign,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, "sigmoid", [a], lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), "relu", [a], lambda g: (g * mask,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: non-positive input")
    out = np.log(a.data)
    return _make(out, "log", [a], lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative input")
    out = np.sqrt(a.data)
    return _make(out, "sqrt", [a], lambda g: (g / (2.0 * out),))


def asin(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(np.abs(a.data) > 1):
        raise DomainError("asin: |input| > 1")
    out = np.arcsin(a.data)

    def bwd(g):
        return (g / np.sqrt(np.maximum(1.0 - a.data * a.data, 1e-300)),)

    return _make(out, "asin", [a], bwd)


def atan2(y, x) -> Tensor:
    y = _as_tensor(y)
    x = _as_tensor(x, y.dtype)
    _check_same_shape(y, x, "atan2")
    out = np.arctan2(y.data, x.data)
    denom = y.data * y.data + x.data * x.data

    def bwd(g):
        return (_reduce_to(g * x.data / denom, y.shape),
                _reduce_to(-g * y.data / denom, x.shape))

    return _make(out, "atan2", [y, x], bwd)


def clip(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(out, "clip", [a], lambda g: (g * inside,))


def custom_unary(a, fn, dfn, name: str = "custom") -> Tensor:
    """Elementwise op from a user-supplied function and its derivative.

    Used by callers that need smooth scalar functions not in the core set
    (e.g. series-expanded rotation coefficients)."""
    a = _as_tensor(a)
    out = np.asarray(fn(a.data), dtype=a.dtype)
    return _make(out, name, [a], lambda g: (g * np.asarray(dfn(a.data), dtype=a.dtype),))


# ---------------------------------------------------------------------------
# shape / reduction ops
# ---------------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        for ax, (da, db) in enumerate(zip(ref, t.data.shape)):
            if ax != (axis % len(ref)) and da != db:
                raise DimensionError(f"concat: axis {ax} mismatch ({da} vs {db})")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        parts = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            parts.append(g[tuple(sl)])
        return parts

    return _make(out, "concat", tensors, bwd)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)
    orig = a.data.shape
    return _make(out, "reshape", [a], lambda g: (g.reshape(orig),))


def slice_(a, key) -> Tensor:
    """Basic (non-fancy) slicing; backward scatters into a zero tensor."""
    a = _as_tensor(a)
    out = a.data[key]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _make(out, "slice", [a], bwd)


def roll(a, shift: int, axis: int) -> Tensor:
    a = _as_tensor(a)
    out = np.roll(a.data, shift, axis=axis)
    return _make(out, "roll", [a], lambda g: (np.roll(g, -shift, axis=axis),))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    orig = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, orig).astype(a.dtype),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, orig).astype(a.dtype),)

    return _make(np.asarray(out), "sum", [a], bwd)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    orig = a.data.shape
    n = a.data.size if axis is None else orig[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, orig).astype(a.dtype),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / n, orig).astype(a.dtype),)

    return _make(np.asarray(out), "mean", [a], bwd)


def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.dtype)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul: 2-D operands required")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: axis 1 of lhs ({a.data.shape[1]}) != axis 0 of rhs ({b.data.shape[0]})")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, "matmul", [a, b], bwd)


# ---------------------------------------------------------------------------
# convolution / resampling ops
# ---------------------------------------------------------------------------

def _pad_input(x: np.ndarray, ph: int, pw: int, padding: PaddingMode) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    if padding is PaddingMode.ZERO:
        return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # wrap-longitude: circular in W, zero in H
    xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (pw, pw)), mode="wrap")
    return np.pad(xp, ((0, 0), (0, 0), (ph, ph), (0, 0)))


def conv2d(x, w, b, stride: int = 1, padding: PaddingMode = PaddingMode.ZERO) -> Tensor:
    """Cross-correlation with same-style padding of (kh//2, kw//2).

    x: [N,C,H,W], w: [K,C,kh,kw], b: [K].  Wrap padding is circular along W
    and zero along H (for equirectangular feature maps)."""
    x = _as_tensor(x)
    w = _as_tensor(w, x.dtype)
    b = _as_tensor(b, x.dtype)
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d: input rank {x.data.ndim}, expected 4 (N,C,H,W)")
    if w.data.ndim != 4:
        raise DimensionError(f"conv2d: weight rank {w.data.ndim}, expected 4 (K,C,kh,kw)")
    N, C, H, W = x.data.shape
    K, Cw, kh, kw = w.data.shape
    if Cw != C:
        raise DimensionError(f"conv2d: channel axis mismatch (input {C}, weight {Cw})")
    if b.data.shape != (K,):
        raise DimensionError(f"conv2d: bias axis 0 is {b.data.shape}, expected ({K},)")
    ph, pw = kh // 2, kw // 2
    if H + 2 * ph < kh or W + 2 * pw < kw:
        raise DimensionError("conv2d: kernel larger than padded input")
    xp = _pad_input(x.data, ph, pw, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(N * Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(K, C * kh * kw)
    out = (cols @ wmat.T).reshape(N, Ho, Wo, K).transpose(0, 3, 1, 2) + b.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def bwd(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(N * Ho * Wo, K)
        gw = (g2.T @ cols).reshape(K, C, kh, kw)
        gb = g.sum(axis=(0, 2, 3))
        gcols = (g2 @ wmat).reshape(N, Ho, Wo, C, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                view = gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
                view += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph:ph + H, :]
        if padding is PaddingMode.WRAP and pw > 0:
            core = gx[:, :, :, pw:pw + W].copy()
            core[:, :, :, -pw:] += gx[:, :, :, :pw]
            core[:, :, :, :pw] += gx[:, :, :, pw + W:]
            gx = core
        elif pw > 0:
            gx = gx[:, :, :, pw:pw + W]
        return gx, gw, gb

    return _make(out, "conv2d", [x, w, b], bwd)


def pixel_shuffle(x, r: int) -> Tensor:
    """[N, C*r*r, H, W] -> [N, C, H*r, W*r], channel index c*r*r + i*r + j."""
    x = _as_tensor(x)
    N, Cr, H, W = x.data.shape
    if Cr % (r * r) != 0:
        raise DimensionError(f"pixel_shuffle: channel axis {Cr} not divisible by r^2={r * r}")
    C = Cr // (r * r)
    out = (x.data.reshape(N, C, r, r, H, W)
           .transpose(0, 1, 4, 2, 5, 3)
           .reshape(N, C, H * r, W * r))

    def bwd(g):
        return (g.reshape(N, C, H, r, W, r)
                .transpose(0, 1, 3, 5, 2, 4)
                .reshape(N, Cr, H, W),)

    return _make(np.ascontiguousarray(out), "pixel_shuffle", [x], bwd)


def pixel_unshuffle(x, r: int) -> Tensor:
    """Inverse rearrangement of :func:`pixel_shuffle` (used in tests)."""
    x = _as_tensor(x)
    N, C, Hr, Wr = x.data.shape
    if Hr % r != 0 or Wr % r != 0:
        raise DimensionError("pixel_unshuffle: spatial axes not divisible by r")
    H, W = Hr // r, Wr // r
    out = (x.data.reshape(N, C, H, r, W, r)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(N, C * r * r, H, W))

    def bwd(g):
        return (g.reshape(N, C, r, r, H, W)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(N, C, Hr, Wr),)

    return _make(np.ascontiguousarray(out), "pixel_unshuffle", [x], bwd)


def downsample2x(x) -> Tensor:
    """Area-average 2x2 downsampling on [..., H, W] with even H, W."""
    x = _as_tensor(x)
    *lead, H, W = x.data.shape
    if H % 2 != 0:
        raise DimensionError(f"downsample2x: H axis {H} not even")
    if W % 2 != 0:
        raise DimensionError(f"downsample2x: W axis {W} not even")
    out = x.data.reshape(*lead, H // 2, 2, W // 2, 2).mean(axis=(-3, -1))

    def bwd(g):
        gg = np.repeat(np.repeat(g, 2, axis=-1), 2, axis=-2) * 0.25
        return (gg.astype(x.dtype),)

    return _make(out, "downsample2x", [x], bwd)


def grid_sample(x, grid, wrap_longitude: bool = False) -> Tensor:
    """Bilinear sampling of x [N,C,H,W] at pixel coordinates grid [N,Ho,Wo,2].

    grid[..., 0] is x (column), grid[..., 1] is y (row).  With wrap_longitude
    the x coordinate wraps modulo W; y always clamps.  Differentiable w.r.t.
    both the image and the grid."""
    x = _as_tensor(x)
    grid = _as_tensor(grid, x.dtype)
    if x.data.ndim != 4 or grid.data.ndim != 4 or grid.data.shape[-1] != 2:
        raise DimensionError("grid_sample: expected x [N,C,H,W] and grid [N,Ho,Wo,2]")
    if np.any(~np.isfinite(grid.data)):
        raise ValidationError("grid_sample: non-finite coordinate in grid")
    N, C, H, W = x.data.shape
    if grid.data.shape[0] != N:
        raise DimensionError("grid_sample: batch axis mismatch between x and grid")
    Ho, Wo = grid.data.shape[1], grid.data.shape[2]
    gx = grid.data[..., 0]
    gy = grid.data[..., 1]

    if wrap_longitude:
        x0f = np.floor(gx)
        fx = gx - x0f
        xi0 = (x0f.astype(np.int64)) % W
        xi1 = (xi0 + 1) % W
        dx_active = np.ones_like(gx, dtype=bool)
    else:
        gxc = np.clip(gx, 0, W - 1)
        x0f = np.floor(gxc)
        fx = gxc - x0f
        xi0 = x0f.astype(np.int64)
        xi1 = np.minimum(xi0 + 1, W - 1)
        dx_active = (gx >= 0) & (gx <= W - 1)

    gyc = np.clip(gy, 0, H - 1)
    y0f = np.floor(gyc)
    fy = gyc - y0f
    yi0 = y0f.astype(np.int64)
    yi1 = np.minimum(yi0 + 1, H - 1)
    dy_active = (gy >= 0) & (gy <= H - 1)

    flat = x.data.reshape(N, C, H * W)
    L = Ho * Wo

    def gather(yi, xi):
        idx = (yi * W + xi).reshape(N, 1, L)
        return np.take_along_axis(flat, idx, axis=2).reshape(N, C, Ho, Wo)

    v00 = gather(yi0, xi0)
    v01 = gather(yi0, xi1)
    v10 = gather(yi1, xi0)
    v11 = gather(yi1, xi1)
    wfx = fx[:, None]
    wfy = fy[:, None]
    out = ((1 - wfy) * ((1 - wfx) * v00 + wfx * v01)
           + wfy * ((1 - wfx) * v10 + wfx * v11))

    def bwd(g):
        # image gradient: scatter the four corner weights
        gi = np.zeros_like(flat)
        n_idx = np.arange(N)[:, None, None]
        c_idx = np.arange(C)[None, :, None]
        gl = g.reshape(N, C, L)
        for yi, xi, wgt in ((yi0, xi0, (1 - fy) * (1 - fx)),
                            (yi0, xi1, (1 - fy) * fx),
                            (yi1, xi0, fy * (1 - fx)),
                            (yi1, xi1, fy * fx)):
            idx = (yi * W + xi).reshape(N, 1, L)
            np.add.at(gi, (n_idx, c_idx, idx), wgt.reshape(N, 1, L) * gl)
        gx_img = gi.reshape(N, C, H, W)
        # grid gradient: derivative of the bilinear weights, zero where clamped
        dgx = ((1 - fy)[:, None] * (v01 - v00) + fy[:, None] * (v11 - v10))
        dgy = ((1 - fx)[:, None] * (v10 - v00) + fx[:, None] * (v11 - v01))
        ggrid = np.zeros_like(grid.data)
        ggrid[..., 0] = (g * dgx).sum(axis=1) * dx_active
        ggrid[..., 1] = (g * dgy).sum(axis=1) * dy_active
        return gx_img, ggrid

    return _make(out, "grid_sample", [x, grid], bwd)


# ---------------------------------------------------------------------------
# backward sweep and optimizer
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Reverse topological sweep from a scalar loss; accumulates .grad on
    requires-grad leaves and consumes the graph."""
    if loss.data.size != 1:
        raise DimensionError(f"backward: loss has {loss.data.size} elements, expected scalar")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = (loss.grad if loss.grad is not None else 0) + np.ones_like(loss.data)
            return
        raise StateError("backward: loss is not connected to any graph")
    if loss.node.consumed:
        raise StateError("backward: graph already consumed by a previous backward call")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, processed = stack.pop()
        if processed:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node.consumed:
            raise StateError("backward: graph already consumed by a previous backward call")
        parent_grads = t.node.backward_fn(g)
        t.node.consumed = True
        for p, pg in zip(t.node.parents, parent_grads):
            if pg is None or not p._tracked():
                continue
            pg = np.asarray(pg, dtype=p.dtype).reshape(p.data.shape)
            if p.requires_grad:
                if p.grad is None:
                    p.grad = pg.copy()
                else:
                    p.grad = p.grad + pg
            if p.node is not None:
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


class Parameter:
    """A named requires-grad tensor with Adam moment state."""

    def __init__(self, name: str, data, dtype=np.float32):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=dtype), requires_grad=True)
        self.m = np.zeros_like(self.tensor.data)
        self.v = np.zeros_like(self.tensor.data)
        self.step_count = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value) -> None:
        arr = np.asarray(value, dtype=self.tensor.data.dtype)
        if arr.shape != self.tensor.data.shape:
            raise DimensionError(
                f"parameter {self.name}: assigned shape {arr.shape} != {self.tensor.data.shape}")
        self.tensor.data = arr
        self.m = np.zeros_like(arr)
        self.v = np.zeros_like(arr)
        self.step_count = 0

    @property
    def grad(self):
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"


def adam_step(params: Sequence[Parameter], lr: float = 3e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update; gradients are cleared afterwards."""
    if all(p.tensor.grad is None for p in params):
        raise StateError("adam_step: no accumulated gradients (call backward first)")
    for p in params:
        g = p.tensor.grad
        if g is None:
            continue
        p.step_count += 1
        p.m = beta1 * p.m + (1 - beta1) * g
        p.v = beta2 * p.v + (1 - beta2) * (g * g)
        mhat = p.m / (1 - beta1 ** p.step_count)
        vhat = p.v / (1 - beta2 ** p.step_count)
        p.tensor.data = p.tensor.data - lr * mhat / (np.sqrt(vhat) + eps)
        p.tensor.grad = None
