"""Dense tensors with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays (float32 by default, float64 for
gradient checking). Every public operation validates that its output is
finite and raises ``NonFiniteError`` naming the op otherwise; silent
NaN/Inf propagation is never allowed. Broadcasting is deliberately
restricted: elementwise ops require identical shapes, and the only
broadcast form is ``add_bias`` (matrix + row vector).
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_DTYPE = np.float32

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class NumericsError(Exception):
    """Base error for tensor operations."""


class ShapeError(NumericsError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(NumericsError):
    """An op produced NaN or Inf."""


def _as_array(data, dtype):
    if dtype is None:
        # Preserve an existing float dtype; everything else becomes fp32.
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            dtype = data.dtype
        else:
            dtype = DEFAULT_DTYPE
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A dense n-dimensional value, optionally tracked for gradients.

    Tensors are immutable values after construction: ops return new
    tensors and record enough structure (parent links plus a backward
    closure) to run reverse-mode differentiation from any scalar result.
    ``grad`` is populated by ``backward`` and always mirrors ``data``'s
    shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor construction received non-finite values")
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return shift(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def _check_dtypes(op: str, *tensors: Tensor):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise NumericsError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


def _make(op: str, data: np.ndarray, parents, backward_fn) -> Tensor:
    """Assemble an op result, validating finiteness and wiring the graph."""
    if not np.isfinite(data).all():
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    out = Tensor.__new__(Tensor)
    data = np.asarray(data)
    if data.ndim and not data.flags["C_CONTIGUOUS"]:
        data = np.ascontiguousarray(data)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._op = op
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


# -- construction helpers ------------------------------------------------


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or DEFAULT_DTYPE), requires_grad=requires_grad)


def randn(shape, rng: np.random.Generator, std: float = 1.0,
          requires_grad: bool = False, dtype=None) -> Tensor:
    data = rng.standard_normal(shape) * std
    return Tensor(data.astype(dtype or DEFAULT_DTYPE), requires_grad=requires_grad)


# -- elementwise ops -----------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("add", a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")

    def back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make("add", a.data + b.data, (a, b), back)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Matrix plus row vector: the one sanctioned broadcast form."""
    _check_dtypes("add_bias", x, b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.shape} and {b.shape} incompatible")

    def back(g):
        _accumulate(x, g)
        _accumulate(b, g.sum(axis=0))

    return _make("add_bias", x.data + b.data[None, :], (x, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("mul", a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")

    def back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make("mul", a.data * b.data, (a, b), back)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def back(g):
        _accumulate(a, g * s)

    return _make("scale", a.data * np.asarray(s, dtype=a.dtype), (a,), back)


def shift(a: Tensor, s: float) -> Tensor:
    """Add a scalar constant."""
    s = float(s)

    def back(g):
        _accumulate(a, g)

    return _make("shift", a.data + np.asarray(s, dtype=a.dtype), (a,), back)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out_data = np.exp(a.data)

    def back(g):
        _accumulate(a, g * out_data)

    return _make("exp", out_data, (a,), back)


def log(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        out_data = np.log(a.data)

    def back(g):
        _accumulate(a, g / a.data)

    return _make("log", out_data, (a,), back)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = (a.data > floor).astype(a.dtype)

    def back(g):
        _accumulate(a, g * mask)

    return _make("clamp_min", np.maximum(a.data, a.dtype.type(floor)), (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(a.dtype)

    def back(g):
        _accumulate(a, g * mask)

    return _make("relu", a.data * mask, (a,), back)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximation GELU."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * x2 * x))
    half_1pt = 0.5 * (1.0 + t)
    out_data = x * half_1pt

    def back(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
        deriv = half_1pt + 0.5 * x * (1.0 - t * t) * du
        _accumulate(a, g * deriv)

    return _make("gelu", out_data, (a,), back)


# -- linear algebra ------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("matmul", a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} vs {b.shape}")

    def back(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make("matmul", a.data @ b.data, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got {a.shape}")

    def back(g):
        _accumulate(a, g.T)

    return _make("transpose", a.data.T, (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.shape

    def back(g):
        _accumulate(a, g.reshape(orig))

    return _make("reshape", a.data.reshape(shape), (a,), back)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: empty input list")
    _check_dtypes("concat", *parts)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(idx)])

    return _make("concat", np.concatenate([p.data for p in parts], axis=axis), parts, back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols: expected 2-D, got {a.shape}")

    def back(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            _accumulate(a, full)

    return _make("slice_cols", a.data[:, start:stop], (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, np.full_like(a.data, g))

    return _make("sum", a.data.sum(), (a,), back)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    def back(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.shape).copy())

    return _make("sum_axis", a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.shape[axis]
    if n == 0:
        raise ShapeError(f"mean_axis: axis {axis} of shape {a.shape} is empty")

    def back(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.shape) / a.dtype.type(n))

    return _make("mean_axis", a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


# -- normalization and attention primitives ------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax; slices along ``axis`` sum to 1."""
    axis = axis % a.data.ndim if a.data.ndim else 0
    if a.data.ndim == 0 or a.shape[axis] == 0:
        raise ShapeError(f"softmax: empty axis {axis} for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - inner))

    return _make("softmax", out_data, (a,), back)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = axis % a.data.ndim if a.data.ndim else 0
    if a.data.ndim == 0 or a.shape[axis] == 0:
        raise ShapeError(f"log_softmax: empty axis {axis} for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    soft = np.exp(out_data)

    def back(g):
        _accumulate(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make("log_softmax", out_data, (a,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    _check_dtypes("layer_norm", x, gain, bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out_data = xhat * gain.data + bias.data

    def back(g):
        if x.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, (dxhat - m1 - xhat * m2) * inv_std)
        axes = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=axes))
        _accumulate(bias, g.sum(axis=axes))

    return _make("layer_norm", out_data, (x, gain, bias), back)


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 0.0) -> Tensor:
    """Scale slices along ``axis`` to unit L2 norm. Zero slices are an error."""
    axis = axis % a.data.ndim
    norms = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    if np.any(norms <= eps):
        raise NumericsError("l2_normalize: zero-norm slice")
    out_data = a.data / norms

    def back(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - out_data * inner) / norms)

    return _make("l2_normalize", out_data, (a,), back)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup into ``weight`` by integer id array."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding: ids must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise NumericsError(
            f"embedding: id out of range [0, {weight.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )

    def back(g):
        if weight.requires_grad:
            full = np.zeros_like(weight.data)
            np.add.at(full, ids, g)
            _accumulate(weight, full)

    return _make("embedding", weight.data[ids], (weight,), back)


def stack_rows(rows) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""
    return concat([reshape(r, (1, r.shape[0])) for r in rows], axis=0)


# -- reverse-mode pass ---------------------------------------------------


def _topo_order(root: Tensor):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate gradients of a scalar ``loss`` into every reachable
    ``requires_grad`` tensor. Each graph node's backward rule runs exactly
    once, in a deterministic reverse-topological order."""
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise NumericsError("backward: loss does not require grad")
    order = _topo_order(loss)
    loss.grad = np.ones((), dtype=loss.dtype)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
