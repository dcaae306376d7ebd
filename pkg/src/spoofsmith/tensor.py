"""N-dimensional tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy buffer plus an optional computation-graph node.
Graph nodes are closures: each differentiable op attaches a backward
function that maps the output gradient to gradients for its parents.
`backward(loss)` walks the graph once in reverse topological order and
returns a map from parameter name to gradient.

Policy choices (see module docs / README):
  * f32 is the working precision for training, f64 is available for
    gradient-check tests;
  * no implicit broadcasting except tensor-with-scalar;
  * tensors are immutable after creation except for `grad` and in-place
    optimizer updates on leaf parameters.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from . import rng as _rng

_DTYPES = {"f32": np.float32, "f64": np.float64}

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (cheap inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _check_shape(shape) -> tuple:
    shape = tuple(int(d) for d in shape)
    for d in shape:
        if d < 1:
            raise ShapeError(f"dimensions must be >= 1, got {shape}")
    return shape


def _np_dtype(dtype):
    if isinstance(dtype, str):
        if dtype not in _DTYPES:
            raise InvalidArgumentError(f"unsupported dtype {dtype!r}")
        return _DTYPES[dtype]
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise InvalidArgumentError(f"unsupported dtype {dtype!r}")
    return dt.type


class Tensor:
    """A numeric array, optionally tracked in a computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        arr = np.asarray(data, dtype=_np_dtype(dtype) if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    # -- basic introspection --------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return "f64" if self.data.dtype == np.float64 else "f32"

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same buffer, no graph linkage, no grad requirement."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        grad = ", requires_grad" if self.requires_grad else ""
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad}{name})"

    def __float__(self):
        return self.item()

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape):
        return reshape(self, shape)


# -- creation -------------------------------------------------------------

def full(shape, value, dtype="f32") -> Tensor:
    shape = _check_shape(shape)
    return Tensor(np.full(shape, value, dtype=_np_dtype(dtype)))


def zeros(shape, dtype="f32") -> Tensor:
    return full(shape, 0.0, dtype)


def ones(shape, dtype="f32") -> Tensor:
    return full(shape, 1.0, dtype)


def uniform(shape, lo, hi, seed, dtype="f32") -> Tensor:
    shape = _check_shape(shape)
    gen = _rng.stream(seed)
    return Tensor(gen.uniform(lo, hi, size=shape).astype(_np_dtype(dtype)))


def normal(shape, mean, std, seed, dtype="f32") -> Tensor:
    shape = _check_shape(shape)
    gen = _rng.stream(seed)
    return Tensor((mean + std * gen.standard_normal(shape)).astype(_np_dtype(dtype)))


# -- graph construction helpers -------------------------------------------

def make_node(data: np.ndarray, parents: Sequence[Tensor],
              backward: Callable) -> Tensor:
    """Wrap an op result, recording the graph edge when grads are on."""
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _coerce_operand(a: Tensor, other):
    """Return `other` as a Tensor whose shape is compatible with `a`.

    Only equal shapes or scalar (single-element) operands are allowed.
    """
    if not isinstance(other, Tensor):
        other = Tensor(np.asarray(other, dtype=a.data.dtype))
    if other.data.shape != a.data.shape and other.data.size != 1 and a.data.size != 1:
        raise ShapeError(
            f"operand shapes {a.data.shape} and {other.data.shape} differ "
            "(broadcasting is only allowed with scalars)")
    return other


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to a scalar operand's shape."""
    if grad.shape == tuple(shape):
        return grad
    return grad.sum().reshape(shape).astype(grad.dtype)


# -- elementwise ops ------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _coerce_operand(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return make_node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _coerce_operand(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    return make_node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _coerce_operand(a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape))

    return make_node(ad * bd, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return make_node(np.where(mask, a.data, 0), (a,), backward)


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = a.data > 0
    slope = np.where(mask, 1.0, alpha).astype(a.data.dtype)

    def backward(g):
        return (g * slope,)

    return make_node(a.data * slope, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return make_node(t, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Stable two-sided formulation.
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * s * (1.0 - s),)

    return make_node(s, (a,), backward)


# -- reductions / structure ----------------------------------------------

def tsum(a: Tensor) -> Tensor:
    def backward(g):
        return (np.full_like(a.data, g.reshape(())),)

    return make_node(a.data.sum(dtype=a.data.dtype).reshape(()), (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        return (np.full_like(a.data, g.reshape(()) / n),)

    return make_node((a.data.sum(dtype=a.data.dtype) / n).reshape(()), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(d) for d in shape)
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def backward(g):
        return (g.reshape(a.data.shape),)

    return make_node(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(b, Tensor):
        raise InvalidArgumentError("matmul requires two tensors")
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul requires 2-D tensors, got "
                         f"{a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"inner dimensions disagree: "
                         f"{a.data.shape} x {b.data.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T, ad.T @ g)

    return make_node(_accum_matmul(ad, bd), (a, b), backward)


def _accum_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with f64 accumulation, rounded back to f32 inputs.

    Rounding the f64 result once makes f32 products independent of the
    BLAS reduction order, so they match a sequential-loop oracle exactly.
    """
    if a.dtype == np.float32:
        return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)
    return a @ b


# -- reverse-mode sweep ---------------------------------------------------

def backward(loss: Tensor) -> dict:
    """Backpropagate from a scalar loss.

    Sets `.grad` on every reachable leaf with requires_grad and returns a
    map {parameter name: gradient Tensor} for the named ones. Gradients
    from multiple uses of the same tensor accumulate additively.
    """
    if loss.data.size != 1:
        raise InvalidArgumentError(
            f"backward() requires a scalar loss, got shape {loss.data.shape}")

    # Iterative topological sort (graphs can be deep).
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    result: dict = {}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not (parent.requires_grad or parent._backward):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        elif node.requires_grad:
            node.grad = g
            if node.name is not None:
                result[node.name] = Tensor(g)
    return result
