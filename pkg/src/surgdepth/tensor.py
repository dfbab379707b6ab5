"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap a flat row-major numpy buffer (float32 by default, float64
supported for verification work). Every differentiable op records its
inputs and a vector-Jacobian product on the output tensor; ``backward``
replays the implicit tape in reverse topological order. The tape is
rebuilt on every forward pass (define-by-run).

Reductions inside matmul / conv2d / pooling accumulate in float64 even
when the storage dtype is float32, so oracle comparisons stay tight.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import NumericError, ShapeError, UsageError

# Test hook used by the verify CLI's mutation check: when set to an op
# name (e.g. "bilinear_resize"), that kernel's output is deliberately
# perturbed so the corresponding oracle check must fail.
_SABOTAGE = None

_GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    """N-dimensional float array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None
        self.name = name

    # -- construction of op outputs ------------------------------------
    @classmethod
    def _from_op(cls, data, parents, vjp):
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    # -- conveniences ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float32)
    return Tensor(arr)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return Tensor._from_op(out, (a, b), vjp)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def gelu(x):
    """Gaussian error linear unit, tanh approximation."""
    x = as_tensor(x)
    d = x.data
    inner = _GELU_C * (d + 0.044715 * d ** 3)
    t = np.tanh(inner)
    out = 0.5 * d * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * d ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t ** 2) * dinner
        return (g * dx,)

    return Tensor._from_op(out.astype(d.dtype), (x,), vjp)


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return Tensor._from_op(np.asarray(out, dtype=x.dtype), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        n = x.shape[axis] if isinstance(axis, int) else int(np.prod([x.shape[a] for a in axis]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),))


def permute(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return Tensor._from_op(out, (x,), lambda g: (np.transpose(g, inv),))


def transpose(x):
    """Swap the last two axes."""
    x = as_tensor(x)
    axes = tuple(range(x.data.ndim - 2)) + (x.data.ndim - 1, x.data.ndim - 2)
    return permute(x, axes)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    ref = list(tensors[0].shape)
    ref[axis] = -1
    for t in tensors[1:]:
        s = list(t.shape)
        s[axis] = -1
        if s != ref:
            raise ShapeError(f"concat shape mismatch: {t.shape} vs {tensors[0].shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tensors, vjp)


def slice_axis(x, axis, start, stop):
    x = as_tensor(x)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = x.data[idx]

    def vjp(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return Tensor._from_op(out, (x,), vjp)


# ---------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------

def matmul(a, b):
    """Matrix product; stacked inputs allowed when leading dims agree."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul needs >=2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul leading dims disagree: {a.shape} @ {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype)
    out = np.matmul(a.data.astype(np.float64), b.data.astype(np.float64))

    def vjp(g):
        g64 = g.astype(np.float64)
        da = np.matmul(g64, np.swapaxes(b.data, -1, -2).astype(np.float64))
        db = np.matmul(np.swapaxes(a.data, -1, -2).astype(np.float64), g64)
        return da.astype(a.dtype), db.astype(b.dtype)

    return Tensor._from_op(out.astype(dtype), (a, b), vjp)


def softmax(x, axis=-1):
    """Numerically stabilized softmax along ``axis``."""
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return Tensor._from_op(s.astype(x.dtype), (x,), vjp)


def layer_norm(x, gamma, beta, eps=1e-6):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm affine params must have shape ({c},)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = x.data.astype(np.float64).var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x.data - mu) * inv).astype(x.dtype)
    out = xhat * gamma.data + beta.data

    def vjp(g):
        dgamma = (g * xhat).reshape(-1, c).sum(axis=0, dtype=np.float64).astype(gamma.dtype)
        dbeta = g.reshape(-1, c).sum(axis=0, dtype=np.float64).astype(beta.dtype)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = ((dxhat - m1 - xhat * m2) * inv).astype(x.dtype)
        return dx, dgamma, dbeta

    return Tensor._from_op(out.astype(x.dtype), (x, gamma, beta), vjp)


# ---------------------------------------------------------------------
# spatial kernels
# ---------------------------------------------------------------------

def _im2col(x, kh, kw, stride, padding):
    """(C,H,W) -> (C, kh*kw, Ho*Wo) patch matrix, float64."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    cols = np.empty((c, kh * kw, ho * wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride]
            cols[:, i * kw + j, :] = patch.reshape(c, -1)
    return cols, ho, wo


def _col2im(cols, c, h, w, kh, kw, stride, padding, ho, wo):
    xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    cols = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j]
    if padding:
        return xp[:, padding:-padding, padding:-padding]
    return xp


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation over a (C,H,W) input.

    groups=1 gives a dense convolution (patch embedding, 1x1 heads);
    groups=C_in gives a depthwise convolution (ConvNeXt 7x7).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if bias is not None:
        bias = as_tensor(bias)
    c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    if c_in % groups or c_out % groups:
        raise ShapeError("channel counts must be divisible by groups")
    if c_in_g != c_in // groups:
        raise ShapeError(f"weight expects {c_in_g * groups} input channels, got {c_in}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ShapeError("conv2d output size is not integral for this stride/padding")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    # (groups, c_in_g*kh*kw, L) and (groups, c_out_g, c_in_g*kh*kw)
    cols_g = cols.reshape(groups, c_in_g * kh * kw, ho * wo)
    w_g = weight.data.reshape(groups, c_out // groups, c_in_g * kh * kw).astype(np.float64)
    out = np.matmul(w_g, cols_g).reshape(c_out, ho, wo)
    if bias is not None:
        out = out + bias.data[:, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        g_g = g.reshape(groups, c_out // groups, ho * wo).astype(np.float64)
        dw = np.matmul(g_g, np.swapaxes(cols_g, 1, 2)).reshape(weight.shape).astype(weight.dtype)
        dcols = np.matmul(np.swapaxes(w_g, 1, 2), g_g).reshape(c_in, kh * kw, ho * wo)
        dx = _col2im(dcols, c_in, h, w, kh, kw, stride, padding, ho, wo).astype(x.dtype)
        if bias is None:
            return dx, dw
        db = g.sum(axis=(1, 2), dtype=np.float64).astype(bias.dtype)
        return dx, dw, db

    return Tensor._from_op(out.astype(x.dtype), parents, vjp)


def _pool_edges(n, k):
    starts = [(i * n) // k for i in range(k)]
    ends = [-(-((i + 1) * n) // k) for i in range(k)]
    return starts, ends


def adaptive_avg_pool2d(x, k):
    """Average-pool a (C,h,w) map down to (C,k,k); windows tile the input."""
    x = as_tensor(x)
    c, h, w = x.shape
    if not 1 <= k <= min(h, w):
        raise ShapeError(f"pool size {k} out of range for {h}x{w} input")
    rs, re = _pool_edges(h, k)
    cs, ce = _pool_edges(w, k)
    out = np.empty((c, k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out[:, i, j] = x.data[:, rs[i]:re[i], cs[j]:ce[j]].mean(axis=(1, 2), dtype=np.float64)

    def vjp(g):
        dx = np.zeros(x.shape, dtype=np.float64)
        for i in range(k):
            for j in range(k):
                area = (re[i] - rs[i]) * (ce[j] - cs[j])
                dx[:, rs[i]:re[i], cs[j]:ce[j]] += g[:, i, j, None, None] / area
        return (dx.astype(x.dtype),)

    return Tensor._from_op(out.astype(x.dtype), (x,), vjp)


def _interp_matrix(n_in, n_out, dtype):
    """Row-stochastic (n_out, n_in) bilinear weights, align_corners=false."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for d in range(n_out):
        src = (d + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        t = src - i0
        m[d, i0] += 1.0 - t
        m[d, i1] += t
    return m.astype(dtype)


def bilinear_resize(x, h_out, w_out):
    """Resize a (C,h,w) map with half-pixel-center bilinear sampling."""
    x = as_tensor(x)
    c, h, w = x.shape
    if h_out < 1 or w_out < 1:
        raise ShapeError("output size must be positive")
    r = _interp_matrix(h, h_out, np.float64)
    s = _interp_matrix(w, w_out, np.float64)
    out = np.einsum("ab,cbd,ed->cae", r, x.data.astype(np.float64), s)
    if _SABOTAGE == "bilinear_resize":
        out = out + 1e-3

    def vjp(g):
        dx = np.einsum("ab,cae,ed->cbd", r, g.astype(np.float64), s)
        return (dx.astype(x.dtype),)

    return Tensor._from_op(out.astype(x.dtype), (x,), vjp)


# ---------------------------------------------------------------------
# backward driver
# ---------------------------------------------------------------------

def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
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
            stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every requires-grad tensor reachable from loss.

    Grads accumulate across calls; use zero_grad / the optimizer to reset.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor")
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad and loss._vjp is None:
        warnings.warn("backward called on a detached graph; no grads to populate")
        return
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._vjp is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._vjp is not None:
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
