"""Reverse-mode autodiff over a recorded graph of numpy ops.

Deliberately small: only the operations the field trainer, the splat
trainer and their losses need (matmul, elementwise arithmetic, relu,
sigmoid, exp/log/sqrt, reductions, gather/scatter for grid corners,
windowed convolution for SSIM). Data is float32 by default; reductions
accumulate in float64. A float64 graph is supported so finite-difference
oracles are not drowned by rounding noise.
"""

import numpy as np

__all__ = [
    "Tensor", "TapeError", "no_grad", "add", "sub", "mul", "div", "neg",
    "matmul", "relu", "sigmoid", "exp", "log", "sqrt", "absval", "clamp",
    "tsum", "tmean", "concat", "crop", "reshape", "gather_rows", "scale",
    "weighted_corner_sum", "normalize_rows", "conv2d_separable",
]


class TapeError(Exception):
    """Contract violation in graph construction or backward()."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager: ops built inside record no graph (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A numpy array plus an optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False, name="", dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # operator sugar
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
        return div(self, _as_tensor(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return crop(self, key)

    def backward(self):
        """Propagate d(self)/d(leaf) into every participating grad buffer.

        self must be scalar (one element). The recorded graph is released
        afterwards; leaf gradients stay in place.
        """
        if self.data.size != 1:
            raise TapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)
        for node in order:
            node._parents = ()
            node._bwd = None


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False, dtype=dtype)


def _needs_graph(*tensors):
    return any(t.requires_grad or t._bwd is not None for t in tensors)


def _make(data, parents, bwd):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    if _GRAD_ENABLED and any(p.requires_grad or p._bwd is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    else:
        out.requires_grad = False
        out._parents = ()
        out._bwd = None
    return out


def _accum(t, g):
    if not (t.requires_grad or t._bwd is not None):
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
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
# elementwise


def add(a, b):
    a = _as_tensor(a, getattr(b, "dtype", np.float32)) if not isinstance(a, Tensor) else a
    b = _as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return _make(out_data, (a, b), bwd)


def sub(a, b):
    b = _as_tensor(b, a.dtype)
    out_data = a.data - b.data

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _make(out_data, (a, b), bwd)


def mul(a, b):
    b = _as_tensor(b, a.dtype)
    out_data = a.data * b.data

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(out_data, (a, b), bwd)


def div(a, b):
    b = _as_tensor(b, a.dtype)
    out_data = a.data / b.data

    def bwd(g):
        _accum(a, g / b.data)
        _accum(b, -g * out_data / b.data)

    return _make(out_data, (a, b), bwd)


def neg(a):
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def scale(a, k):
    """Multiply by a python scalar without creating a constant node."""
    k = a.data.dtype.type(k)

    def bwd(g):
        _accum(a, g * k)

    return _make(a.data * k, (a,), bwd)


def relu(a):
    out_data = np.maximum(a.data, 0)

    def bwd(g):
        _accum(a, g * (a.data > 0))

    return _make(out_data, (a,), bwd)


def sigmoid(a):
    out_data = np.exp(-np.logaddexp(0, -a.data))

    def bwd(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data.astype(a.data.dtype), (a,), bwd)


def exp(a):
    out_data = np.exp(a.data)

    def bwd(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), bwd)


def log(a):
    out_data = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), bwd)


def sqrt(a):
    out_data = np.sqrt(a.data)

    def bwd(g):
        _accum(a, g * (0.5 / out_data))

    return _make(out_data, (a,), bwd)


def absval(a):
    out_data = np.abs(a.data)

    def bwd(g):
        _accum(a, g * np.sign(a.data))

    return _make(out_data, (a,), bwd)


def clamp(a, lo, hi):
    out_data = np.clip(a.data, lo, hi)

    def bwd(g):
        inside = (a.data >= lo) & (a.data <= hi)
        _accum(a, g * inside)

    return _make(out_data, (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a, b):
    out_data = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, ga)
        _accum(b, gb)

    return _make(out_data, (a, b), bwd)


def tsum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, dtype=np.float64, keepdims=keepdims).astype(a.data.dtype)
    out_data = np.asarray(out_data)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g.reshape(()), a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape))

    return _make(out_data, (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.data.shape[ax]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors, axis=0):
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), bwd)


def crop(a, key):
    out_data = a.data[key]
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data)

    def bwd(g):
        if not (a.requires_grad or a._bwd is not None):
            return
        ga = np.zeros_like(a.data)
        ga[key] = g
        _accum(a, ga)

    return _make(out_data, (a,), bwd)


def reshape(a, shape):
    out_data = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), bwd)


def gather_rows(a, idx):
    """Select rows a[idx] (idx int array, any shape); scatter-adds on backward."""
    idx = np.asarray(idx)
    out_data = a.data[idx]

    def bwd(g):
        if not (a.requires_grad or a._bwd is not None):
            return
        flat_idx = idx.reshape(-1)
        gf = g.reshape(len(flat_idx), -1).astype(np.float64)
        ga = np.zeros((a.data.shape[0], gf.shape[1]))
        for c in range(gf.shape[1]):
            ga[:, c] = np.bincount(flat_idx, weights=gf[:, c], minlength=a.data.shape[0])
        _accum(a, ga.reshape(a.data.shape).astype(a.data.dtype))

    return _make(out_data, (a,), bwd)


def weighted_corner_sum(features, idx, w):
    """sum_k w[:, k] * features[idx[:, k]] -> (P, D).

    idx (P, K) int, w (P, K) float constants; gradient flows to features
    only, reduced with bincount so accumulation order is deterministic.
    """
    idx = np.asarray(idx)
    w = np.asarray(w, dtype=features.data.dtype)
    gathered = features.data[idx]                       # (P, K, D)
    out_data = np.einsum("pk,pkd->pd", w, gathered).astype(features.data.dtype)

    def bwd(g):
        if not (features.requires_grad or features._bwd is not None):
            return
        contrib = (w[:, :, None] * g[:, None, :]).reshape(-1, g.shape[-1]).astype(np.float64)
        flat_idx = idx.reshape(-1)
        gf = np.zeros(features.data.shape)
        for c in range(g.shape[-1]):
            gf[:, c] = np.bincount(flat_idx, weights=contrib[:, c], minlength=features.data.shape[0])
        _accum(features, gf.astype(features.data.dtype))

    return _make(out_data, (features,), bwd)


def normalize_rows(a, eps=1e-12):
    """Rows scaled to unit length; used for quaternion activation."""
    norms = np.sqrt((a.data.astype(np.float64) ** 2).sum(axis=-1, keepdims=True) + eps)
    norms = norms.astype(a.data.dtype)
    out_data = a.data / norms

    def bwd(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(a, (g - out_data * dot) / norms)

    return _make(out_data, (a,), bwd)


def conv2d_separable(img, k1d):
    """Valid separable 2D convolution over the two leading axes of (H, W[, C]).

    The kernel is a fixed (non-learnable) symmetric 1D window; gradient
    flows through the image argument only.
    """
    k1d = np.asarray(k1d, dtype=img.data.dtype)
    K = len(k1d)

    def _filt(x):
        H, W = x.shape[0], x.shape[1]
        outh = np.zeros((H - K + 1,) + x.shape[1:], dtype=x.dtype)
        for t in range(K):
            outh += k1d[t] * x[t:t + H - K + 1]
        out = np.zeros((H - K + 1, W - K + 1) + x.shape[2:], dtype=x.dtype)
        for t in range(K):
            out += k1d[t] * outh[:, t:t + W - K + 1]
        return out

    out_data = _filt(img.data)

    def bwd(g):
        if not (img.requires_grad or img._bwd is not None):
            return
        H, W = img.data.shape[0], img.data.shape[1]
        gh = np.zeros((H,) + g.shape[1:], dtype=g.dtype)
        for t in range(K):
            gh[t:t + g.shape[0]] += k1d[t] * g
        gi = np.zeros(img.data.shape, dtype=g.dtype)
        for t in range(K):
            gi[:, t:t + g.shape[1]] += k1d[t] * gh
        _accum(img, gi)

    return _make(out_data, (img,), bwd)
