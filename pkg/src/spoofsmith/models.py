"""Network builders: the VGG-style binary classifier with a sigmoid head,
and the DCGAN generator/discriminator pair, plus a generic forward pass.

A NetworkSpec is a flat ordered list of layer descriptors referencing
named parameter tensors in a single store. Shape compatibility is checked
symbolically at build time, so a bad configuration fails before any data
flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import layers as L
from . import rng as _rng
from . import tensor as T
from .errors import InvalidArgumentError, ShapeError
from .tensor import Tensor

DEFAULT_Z_DIM = 100
LEAKY_ALPHA = 0.2

# Channel plan of the classifier's five conv blocks, before width scaling:
# 14 convolutions total, one max-pool after each block.
CLASSIFIER_BLOCKS = [[64, 64], [128, 128], [256, 256, 256],
                     [512, 512, 512], [512, 512, 512, 512]]


@dataclass
class LayerSpec:
    """One layer: a kind tag, JSON-safe attributes, and the names of the
    parameters it uses (role -> param-store key)."""
    kind: str
    attrs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "attrs": self.attrs, "params": self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(kind=d["kind"], attrs=dict(d["attrs"]), params=dict(d["params"]))


# Parameter roles that are running statistics, not trainable weights.
_BUFFER_ROLES = {"running_mean", "running_var"}


@dataclass
class NetworkSpec:
    """Ordered layers plus their parameter store.

    `input_shape` excludes the batch dimension. Immutable after build
    except for parameter values (optimizer) and batchnorm running stats.
    """
    input_shape: Optional[tuple]
    layers: list
    params: dict

    @property
    def counts(self) -> dict:
        kinds = [ly.kind for ly in self.layers]
        return {
            "conv2d": kinds.count("conv2d"),
            "maxpool": kinds.count("maxpool2d"),
            "flatten": kinds.count("flatten"),
            "dense": kinds.count("dense"),
        }

    def trainable(self) -> dict:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def num_parameters(self) -> int:
        return sum(t.size for t in self.trainable().values())

    def buffer_names(self) -> set:
        names = set()
        for ly in self.layers:
            for role, pname in ly.params.items():
                if role in _BUFFER_ROLES:
                    names.add(pname)
        return names

    def to_descriptor(self) -> dict:
        return {
            "input_shape": list(self.input_shape) if self.input_shape else None,
            "layers": [ly.to_dict() for ly in self.layers],
        }

    @classmethod
    def from_descriptor(cls, desc: dict, params: dict) -> "NetworkSpec":
        shape = tuple(desc["input_shape"]) if desc["input_shape"] else None
        return cls(input_shape=shape,
                   layers=[LayerSpec.from_dict(d) for d in desc["layers"]],
                   params=params)


# -- initializers ---------------------------------------------------------

def _he_normal(gen, shape, fan_in):
    return (gen.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)


def _dcgan_normal(gen, shape, std=0.02, mean=0.0):
    return (mean + std * gen.standard_normal(shape)).astype(np.float32)


class _Builder:
    """Accumulates layers and named parameters for one network."""

    def __init__(self, prefix: str, seed: int):
        self.prefix = prefix
        self.gen = _rng.stream(seed, prefix or "net")
        self.layers: list = []
        self.params: dict = {}

    def param(self, name: str, data, requires_grad=True) -> str:
        full = self.prefix + name
        self.params[full] = Tensor(np.asarray(data, dtype=np.float32),
                                   requires_grad=requires_grad, name=full)
        return full

    def conv2d(self, tag, in_ch, out_ch, k, stride, pad, init="he"):
        shape = (out_ch, in_ch, k, k)
        fan_in = in_ch * k * k
        w = (_he_normal(self.gen, shape, fan_in) if init == "he"
             else _dcgan_normal(self.gen, shape))
        self.layers.append(LayerSpec(
            "conv2d", {"stride": stride, "padding": pad},
            {"weight": self.param(f"{tag}.w", w),
             "bias": self.param(f"{tag}.b", np.zeros(out_ch))}))

    def conv_transpose2d(self, tag, in_ch, out_ch, k, stride, pad):
        w = _dcgan_normal(self.gen, (in_ch, out_ch, k, k))
        self.layers.append(LayerSpec(
            "conv_transpose2d", {"stride": stride, "padding": pad},
            {"weight": self.param(f"{tag}.w", w),
             "bias": self.param(f"{tag}.b", np.zeros(out_ch))}))

    def batchnorm(self, tag, ch):
        self.layers.append(LayerSpec(
            "batchnorm2d", {"momentum": 0.1, "eps": 1e-5},
            {"gamma": self.param(f"{tag}.gamma", _dcgan_normal(self.gen, (ch,), mean=1.0)),
             "beta": self.param(f"{tag}.beta", np.zeros(ch)),
             "running_mean": self.param(f"{tag}.rm", np.zeros(ch), requires_grad=False),
             "running_var": self.param(f"{tag}.rv", np.ones(ch), requires_grad=False)}))

    def dense(self, tag, in_f, out_f, init="he"):
        w = (_he_normal(self.gen, (in_f, out_f), in_f) if init == "he"
             else _dcgan_normal(self.gen, (in_f, out_f)))
        self.layers.append(LayerSpec(
            "dense", {},
            {"weight": self.param(f"{tag}.w", w),
             "bias": self.param(f"{tag}.b", np.zeros(out_f))}))

    def simple(self, kind, **attrs):
        self.layers.append(LayerSpec(kind, attrs, {}))

    def build(self, input_shape) -> NetworkSpec:
        return NetworkSpec(input_shape=tuple(input_shape),
                           layers=self.layers, params=self.params)


def _scale_ch(base: int, width_scale: float) -> int:
    if width_scale <= 0:
        raise InvalidArgumentError(f"width_scale must be > 0, got {width_scale}")
    return max(1, int(round(base * width_scale)))


# -- classifier -----------------------------------------------------------

def build_modified_vggnet(input_shape=(3, 64, 64), width_scale: float = 1.0,
                          head_units: int = 256, seed: int = 0,
                          prefix: str = "c.") -> NetworkSpec:
    """VGG-style PAD classifier: 14 convolutions in five blocks, 5 max
    pools, flatten, and two dense layers ending in a single sigmoid score.

    Uses He-normal initialization so that activations survive 14 layers
    without batchnorm (a fixed 0.02 std collapses the signal).
    """
    c, h, w = input_shape
    if h % 32 or w % 32 or h < 32 or w < 32:
        raise ShapeError(
            f"classifier input must be divisible by 32 (five 2x poolings), "
            f"got {h}x{w}")
    if head_units < 1:
        raise InvalidArgumentError(f"head_units must be >= 1, got {head_units}")

    b = _Builder(prefix, seed)
    in_ch, conv_i = c, 0
    for block in CLASSIFIER_BLOCKS:
        for base in block:
            out_ch = _scale_ch(base, width_scale)
            conv_i += 1
            b.conv2d(f"conv{conv_i}", in_ch, out_ch, k=3, stride=1, pad=1)
            b.simple("relu")
            in_ch = out_ch
        b.simple("maxpool2d")
    flat = in_ch * (h // 32) * (w // 32)
    b.simple("flatten")
    b.dense("fc1", flat, head_units)
    b.simple("relu")
    b.dense("fc2", head_units, 1)
    b.simple("sigmoid")
    return b.build(input_shape)


# -- DCGAN pair -----------------------------------------------------------

def _check_resolution(h: int, w: int):
    if h != w or h < 16 or (h & (h - 1)) != 0:
        raise ShapeError(
            f"resolution must be square, a power of two and >= 16, got {h}x{w}")


def build_dcgan_generator(z_dim: int = DEFAULT_Z_DIM, out_shape=(3, 64, 64),
                          width_scale: float = 1.0, seed: int = 0,
                          prefix: str = "g.") -> NetworkSpec:
    """Latent vector -> image in [-1,1]: dense projection to a 4x4 base,
    then k=4/s=2/p=1 transposed convolutions doubling the resolution,
    batchnorm + ReLU on hidden layers, tanh on the output."""
    if z_dim < 1:
        raise InvalidArgumentError(f"z_dim must be >= 1, got {z_dim}")
    c, h, w = out_shape
    _check_resolution(h, w)
    n_up = int(math.log2(h // 4))
    # e.g. 64px: 512 -> 256 -> 128 -> 64 -> out channels
    chans = [_scale_ch(512 >> i, width_scale) for i in range(n_up)] + [c]

    b = _Builder(prefix, seed)
    b.dense("proj", z_dim, chans[0] * 16, init="dcgan")
    b.simple("reshape", shape=[chans[0], 4, 4])
    b.batchnorm("bn0", chans[0])
    b.simple("relu")
    for i in range(n_up):
        b.conv_transpose2d(f"up{i + 1}", chans[i], chans[i + 1], k=4, stride=2, pad=1)
        if i < n_up - 1:
            b.batchnorm(f"bn{i + 1}", chans[i + 1])
            b.simple("relu")
        else:
            b.simple("tanh")
    return b.build((z_dim,))


def build_dcgan_discriminator(input_shape=(3, 64, 64), width_scale: float = 1.0,
                              seed: int = 0, prefix: str = "d.") -> NetworkSpec:
    """Image -> real/fake score in (0,1): strided k=4/s=2/p=1 convolutions
    doubling channels from 64, LeakyReLU(0.2), batchnorm on all but the
    first conv, and a final 4x4 valid conv to a single sigmoid unit."""
    c, h, w = input_shape
    _check_resolution(h, w)
    n_down = int(math.log2(h // 4))
    chans = [c] + [_scale_ch(64 << i, width_scale) for i in range(n_down)]

    b = _Builder(prefix, seed)
    for i in range(n_down):
        b.conv2d(f"down{i + 1}", chans[i], chans[i + 1], k=4, stride=2, pad=1,
                 init="dcgan")
        if i > 0:
            b.batchnorm(f"bn{i + 1}", chans[i + 1])
        b.simple("leaky_relu", alpha=LEAKY_ALPHA)
    b.conv2d("head", chans[-1], 1, k=4, stride=1, pad=0, init="dcgan")
    b.simple("flatten")
    b.simple("sigmoid")
    return b.build(input_shape)


# -- forward --------------------------------------------------------------

def _layer_output_shape(net: NetworkSpec, ly: LayerSpec, shape: tuple) -> tuple:
    """Symbolic shape propagation for one layer (batch dim excluded)."""
    if ly.kind == "conv2d":
        w = net.params[ly.params["weight"]]
        oc, ic, kh, kw = w.shape
        oh, ow = L.conv2d_shape(shape[1], shape[2], kh, kw,
                                ly.attrs["stride"], ly.attrs["padding"])
        return (oc, oh, ow)
    if ly.kind == "conv_transpose2d":
        w = net.params[ly.params["weight"]]
        ci, oc, kh, kw = w.shape
        s, p = ly.attrs["stride"], ly.attrs["padding"]
        return (oc, (shape[1] - 1) * s - 2 * p + kh, (shape[2] - 1) * s - 2 * p + kw)
    if ly.kind == "maxpool2d":
        return (shape[0], shape[1] // 2, shape[2] // 2)
    if ly.kind == "flatten":
        return (int(np.prod(shape)),)
    if ly.kind == "reshape":
        return tuple(ly.attrs["shape"])
    if ly.kind == "dense":
        return (net.params[ly.params["weight"]].shape[1],)
    return shape


def output_shape(net: NetworkSpec) -> tuple:
    shape = net.input_shape
    for ly in net.layers:
        shape = _layer_output_shape(net, ly, shape)
    return shape


def forward(net: NetworkSpec, batch: Tensor, mode: str = "eval") -> Tensor:
    """Apply the network's layers in order. `mode` selects batchnorm
    behavior; the graph is recorded whenever gradients are enabled."""
    if mode not in ("train", "eval"):
        raise InvalidArgumentError(f"mode must be 'train' or 'eval', got {mode!r}")
    if not isinstance(batch, Tensor):
        batch = Tensor(batch)
    if net.input_shape is not None and net.layers \
            and tuple(batch.shape[1:]) != tuple(net.input_shape):
        raise ShapeError(
            f"batch shape {tuple(batch.shape[1:])} does not match network "
            f"input {tuple(net.input_shape)}")

    x = batch
    p = net.params
    for ly in net.layers:
        k = ly.kind
        if k == "conv2d":
            x = L.conv2d(x, L.Conv2dParams(p[ly.params["weight"]],
                                           p[ly.params["bias"]],
                                           ly.attrs["stride"], ly.attrs["padding"]))
        elif k == "conv_transpose2d":
            x = L.conv_transpose2d(x, p[ly.params["weight"]], p[ly.params["bias"]],
                                   ly.attrs["stride"], ly.attrs["padding"])
        elif k == "maxpool2d":
            x = L.maxpool2d(x)
        elif k == "batchnorm2d":
            state = L.BatchNormState(p[ly.params["gamma"]], p[ly.params["beta"]],
                                     p[ly.params["running_mean"]],
                                     p[ly.params["running_var"]],
                                     ly.attrs["momentum"], ly.attrs["eps"])
            x = L.batchnorm2d(x, state, mode)
        elif k == "dense":
            x = L.dense(x, p[ly.params["weight"]], p[ly.params["bias"]])
        elif k == "flatten":
            x = T.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))
        elif k == "reshape":
            x = T.reshape(x, (x.shape[0], *ly.attrs["shape"]))
        elif k == "relu":
            x = T.relu(x)
        elif k == "leaky_relu":
            x = T.leaky_relu(x, ly.attrs["alpha"])
        elif k == "tanh":
            x = T.tanh(x)
        elif k == "sigmoid":
            x = T.sigmoid(x)
        else:
            raise InvalidArgumentError(f"unknown layer kind {k!r}")
    return x
