"""Differentiable layer primitives: conv, transposed conv, pooling,
batchnorm, dense, and binary cross-entropy.

Convolutions use cross-correlation semantics (no kernel flip) and are
implemented with im2col + matmul; the test suite keeps an independent
naive-loop oracle. Each op carries a hand-written backward closure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, InvalidArgumentError, ShapeError
from .tensor import Tensor, make_node

BCE_EPS = 1e-7


# -- im2col machinery -----------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int,
            oh: int, ow: int) -> np.ndarray:
    """Gather kh*kw shifted views of a padded input, [n,c,kh,kw,oh,ow]."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    s = stride
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
    return cols


def _col2im(cols: np.ndarray, h: int, w: int, pad: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back to [n,c,h,w]."""
    n, c, kh, kw, oh, ow = cols.shape
    s = stride
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + s * oh:s, j:j + s * ow:s] += cols[:, :, i, j]
    if pad:
        return xp[:, :, pad:pad + h, pad:pad + w]
    return xp


def _pad_input(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


# -- conv2d ---------------------------------------------------------------

@dataclass
class Conv2dParams:
    """Weights plus geometry for one conv layer.

    weight: [out_ch, in_ch, kh, kw], bias: [out_ch].
    """
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        oc, ic, kh, kw = self.weight.shape
        if kh < 1 or kw < 1:
            raise ShapeError(f"kernel must be at least 1x1, got {kh}x{kw}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")
        if self.bias.shape != (oc,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({oc},)")


def conv2d_shape(h: int, w: int, kh: int, kw: int, stride: int, pad: int):
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


def conv2d(x: Tensor, params: Conv2dParams) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects [n,c,h,w], got {x.shape}")
    n, c, h, w = x.shape
    weight, bias = params.weight, params.bias
    oc, ic, kh, kw = weight.shape
    if c != ic:
        raise ShapeError(f"input has {c} channels, weight expects {ic}")
    s, p = params.stride, params.padding
    oh, ow = conv2d_shape(h, w, kh, kw, s, p)

    cols = _im2col(_pad_input(x.data, p), kh, kw, s, oh, ow)
    colsm = cols.reshape(n, c * kh * kw, oh * ow)
    wm = weight.data.reshape(oc, c * kh * kw)
    if x.data.dtype == np.float32:
        # f64 accumulation rounded once: the f32 result is independent of
        # the BLAS reduction order and matches the sequential-loop oracle.
        y = (np.matmul(wm.astype(np.float64), colsm.astype(np.float64))
             + bias.data.astype(np.float64)[None, :, None]) \
            .astype(np.float32).reshape(n, oc, oh, ow)
    else:
        y = (np.matmul(wm, colsm)
             + bias.data[None, :, None]).reshape(n, oc, oh, ow)

    def backward(g):
        gm = g.reshape(n, oc, oh * ow)
        gw = np.matmul(gm, colsm.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        gb = g.sum(axis=(0, 2, 3))
        gcols = np.matmul(wm.T, gm).reshape(n, c, kh, kw, oh, ow)
        gx = _col2im(gcols, h, w, p, s)
        return (gx, gw, gb)

    return make_node(y, (x, weight, bias), backward)


# -- conv_transpose2d -----------------------------------------------------

def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor,
                     stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution; forward equals the input-gradient of the
    conv2d that shares `weight` ([in_ch, out_ch, kh, kw])."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects [n,c,h,w], got {x.shape}")
    n, c, h, w = x.shape
    ci, oc, kh, kw = weight.shape
    if c != ci:
        raise ShapeError(f"input has {c} channels, weight expects {ci}")
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise ShapeError(f"computed output size {oh}x{ow} is < 1")
    if bias.shape != (oc,):
        raise ShapeError(f"bias shape {bias.shape} != ({oc},)")

    # cols[n,o,kh,kw,h,w] = sum_c weight[c,o,kh,kw] * x[n,c,h,w]
    cols = np.einsum("cokl,nchw->noklhw", weight.data, x.data, optimize=True)
    y = _col2im(cols, oh, ow, padding, stride) + bias.data[None, :, None, None]

    def backward(g):
        gcols = _im2col(_pad_input(g, padding), kh, kw, stride, h, w)
        gx = np.einsum("noklhw,cokl->nchw", gcols, weight.data, optimize=True)
        gw = np.einsum("noklhw,nchw->cokl", gcols, x.data, optimize=True)
        gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)

    return make_node(y, (x, weight, bias), backward)


# -- maxpool --------------------------------------------------------------

def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient goes to the first argmax
    in row-major window order on ties."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects [n,c,h,w], got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d requires even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    win = (x.data.reshape(n, c, oh, 2, ow, 2)
           .transpose(0, 1, 2, 4, 3, 5)
           .reshape(n, c, oh, ow, 4))
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        return (gwin.reshape(n, c, oh, ow, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w),)

    return make_node(y, (x,), backward)


# -- batchnorm ------------------------------------------------------------

@dataclass
class BatchNormState:
    """Learnable scale/shift plus running statistics for one channel axis."""
    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    momentum: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        if not 0 < self.momentum <= 1:
            raise InvalidArgumentError(f"momentum must be in (0,1], got {self.momentum}")
        if self.eps <= 0:
            raise InvalidArgumentError(f"eps must be > 0, got {self.eps}")


def batchnorm2d(x: Tensor, state: BatchNormState, mode: str = "train") -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects [n,c,h,w], got {x.shape}")
    n, c, h, w = x.shape
    if state.gamma.shape != (c,):
        raise ShapeError(f"gamma shape {state.gamma.shape} != ({c},)")
    gamma, beta = state.gamma, state.beta
    eps = x.data.dtype.type(state.eps)

    if mode == "train":
        m = n * h * w
        if m < 2:
            raise DegenerateBatchError(
                "batchnorm needs at least 2 elements per channel in train mode")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))  # biased (1/m), used consistently
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
        mom = state.momentum
        state.running_mean.data[...] = (1 - mom) * state.running_mean.data + mom * mu
        state.running_var.data[...] = (1 - mom) * state.running_var.data + mom * var

        def backward(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            coeff = (gamma.data * inv / m)[None, :, None, None]
            dx = coeff * (m * g
                          - dbeta[None, :, None, None]
                          - xhat * dgamma[None, :, None, None])
            return (dx, dgamma, dbeta)

    elif mode == "eval":
        inv = 1.0 / np.sqrt(state.running_var.data + eps)
        xhat = (x.data - state.running_mean.data[None, :, None, None]) \
            * inv[None, :, None, None]

        def backward(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dx = g * (gamma.data * inv)[None, :, None, None]
            return (dx, dgamma, dbeta)

    else:
        raise InvalidArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")

    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    return make_node(y, (x, gamma, beta), backward)


# -- dense ----------------------------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x[n,k] @ weight[k,m] + bias[m] per row."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"dense expects 2-D input/weight, got "
                         f"{x.shape} and {weight.shape}")
    n, k = x.shape
    k2, m = weight.shape
    if k != k2:
        raise ShapeError(f"inner dimensions disagree: {x.shape} x {weight.shape}")
    if bias.shape != (m,):
        raise ShapeError(f"bias shape {bias.shape} != ({m},)")
    if x.data.dtype == np.float32:
        y = (x.data.astype(np.float64) @ weight.data.astype(np.float64)
             + bias.data.astype(np.float64)[None, :]).astype(np.float32)
    else:
        y = x.data @ weight.data + bias.data[None, :]

    def backward(g):
        return (g @ weight.data.T, x.data.T @ g, g.sum(axis=0))

    return make_node(y, (x, weight, bias), backward)


# -- binary cross-entropy -------------------------------------------------

def bce_loss(pred: Tensor, target) -> Tensor:
    """Mean of -[t*ln(p) + (1-t)*ln(1-p)], predictions clamped to
    [BCE_EPS, 1-BCE_EPS]."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != pred.data.shape:
        raise ShapeError(f"pred shape {pred.data.shape} != target shape {t.shape}")
    t = t.astype(pred.data.dtype)
    eps = pred.data.dtype.type(BCE_EPS)
    p = np.clip(pred.data, eps, 1 - eps)
    n = p.size
    loss = -(t * np.log(p) + (1 - t) * np.log1p(-p)).sum() / n
    inside = (pred.data > eps) & (pred.data < 1 - eps)

    def backward(g):
        gp = np.where(inside, (-t / p + (1 - t) / (1 - p)) / n, 0.0)
        return (g.reshape(()) * gp.astype(pred.data.dtype),)

    return make_node(np.asarray(loss, dtype=pred.data.dtype).reshape(()),
                     (pred,), backward)
