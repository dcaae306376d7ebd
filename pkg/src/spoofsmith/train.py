"""Optimizer, dataset splitting, augmentation, and the two training
loops: adversarial GAN training and the PAD classifier.

Every stochastic decision is drawn from a stream keyed by (seed, stage,
iteration), so a run is a deterministic function of (data, config, seed)
and resuming from a checkpoint continues the exact same trajectory.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.ndimage

from . import rng as _rng
from . import tensor as T
from .data import (AdamSnapshot, DatasetManifest, ManifestEntry, decode_image,
                   encode_image)
from .errors import (ConfigError, InsufficientDataError, InvalidArgumentError,
                     OptimStateError, StratifyError)
from .layers import bce_loss
from .models import NetworkSpec, forward
from .tensor import Tensor

POSITIVE_LABEL = "bona_fide"

# Stream tags for the stages of training (arbitrary but fixed).
_TAG_GAN_ITER = 0xA1
_TAG_AUG_FIXED = 0xA2
_TAG_SYNTH = 0xB0
_TAG_CLS_EPOCH = 0xC0

AUGMENT_OPS = ("hflip", "rotate", "crop", "brightness")


@dataclass
class TrainConfig:
    """Hyperparameters for a GAN or classifier run.

    Defaults follow the GAN convention (lr 2e-4, beta1 0.5); classifier
    runs use `TrainConfig.classifier()`.
    """
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 16
    epochs: int = 1
    seed: int = 0
    real_per_iter: int = 200
    target_synthetic: int = 10000
    augment_ops: tuple = AUGMENT_OPS
    temporal_resample: bool = True

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidArgumentError("beta1/beta2 must lie in (0,1)")
        if self.batch_size < 2:
            raise InvalidArgumentError("batch_size must be >= 2")
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")

    @classmethod
    def classifier(cls, **kw) -> "TrainConfig":
        kw.setdefault("learning_rate", 1e-4)
        kw.setdefault("beta1", 0.9)
        return cls(**kw)


@dataclass
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0
    stratify_by_label: bool = True
    allow_unstratified: bool = False   # fall back to a plain split on tiny strata

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvalidArgumentError("train_fraction must lie in (0,1)")


# -- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment buffers per parameter plus the shared step count."""
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p.data) for k, p in params.items()},
                   v={k: np.zeros_like(p.data) for k, p in params.items()})

    def snapshot(self) -> AdamSnapshot:
        return AdamSnapshot(m=dict(self.m), v=dict(self.v), t=self.t)

    @classmethod
    def from_snapshot(cls, snap: AdamSnapshot) -> "AdamState":
        return cls(m=dict(snap.m), v=dict(snap.v), t=snap.t)


def adam_step(params: dict, grads: dict, state: AdamState,
              lr: float, beta1: float, beta2: float, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place; `t` increments once per call."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        if name not in params:
            raise OptimStateError(f"gradient for unknown parameter {name!r}")
        if name not in state.m:
            raise OptimStateError(f"no optimizer state for parameter {name!r}")
        p = params[name]
        garr = g.data if isinstance(g, Tensor) else np.asarray(g)
        garr = garr.astype(p.data.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m[...] = beta1 * m + (1 - beta1) * garr
        v[...] = beta2 * v + (1 - beta2) * garr * garr
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.data[...] = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- dataset split --------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(manifest: DatasetManifest, cfg: SplitConfig):
    """Deterministic, optionally label-stratified train/test partition.

    Per stratum, |train| = round(train_fraction * N); the partition is
    disjoint and exhaustive.
    """
    if len(manifest) == 0:
        raise InsufficientDataError("cannot split an empty manifest")

    if cfg.stratify_by_label:
        strata = {}
        for e in manifest:
            strata.setdefault(e.label, []).append(e)
        small = [lbl for lbl, es in strata.items() if len(es) < 2]
        if small and len(strata) > 1:
            if not cfg.allow_unstratified:
                raise StratifyError(
                    f"strata too small for a stratified split: {small} "
                    "(set allow_unstratified to fall back)")
            strata = {"__all__": list(manifest)}
    else:
        strata = {"__all__": list(manifest)}

    train_entries, test_entries = [], []
    for label in sorted(strata):
        entries = strata[label]
        perm = _rng.stream(cfg.seed, "split", label).permutation(len(entries))
        n_train = _round_half_up(cfg.train_fraction * len(entries))
        for rank, idx in enumerate(perm):
            (train_entries if rank < n_train else test_entries).append(entries[idx])
    return (DatasetManifest(train_entries, base_dir=manifest.base_dir),
            DatasetManifest(test_entries, base_dir=manifest.base_dir))


# -- augmentation ---------------------------------------------------------

def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of [c,h,w] with half-pixel centers."""
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    tl = img[:, y0[:, None], x0[None, :]]
    tr = img[:, y0[:, None], x1[None, :]]
    bl = img[:, y1[:, None], x0[None, :]]
    br = img[:, y1[:, None], x1[None, :]]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return (top * (1 - wy) + bot * wy).astype(img.dtype)


def _hflip(img: np.ndarray) -> np.ndarray:
    return img[:, :, ::-1]


def _rotate(img: np.ndarray, angle_deg: float) -> np.ndarray:
    return scipy.ndimage.rotate(img, angle_deg, axes=(2, 1), reshape=False,
                                order=1, mode="nearest").astype(img.dtype)


def _crop_resize(img: np.ndarray, scale: float, fy: float, fx: float) -> np.ndarray:
    c, h, w = img.shape
    ch = max(1, int(round(h * scale)))
    cw = max(1, int(round(w * scale)))
    oy = int(round(fy * (h - ch)))
    ox = int(round(fx * (w - cw)))
    return _bilinear_resize(img[:, oy:oy + ch, ox:ox + cw], h, w)


def augment(image, ops, rng: np.random.Generator):
    """Apply spatial/photometric ops in order to a [c,h,w] image in [-1,1].

    hflip: probability 0.5; rotate: +/-10 degrees, border replication;
    crop: random crop at scale 0.9-1.0 resized back; brightness: +/-0.1.
    Output keeps the input shape and is clamped to [-1,1].
    """
    was_tensor = isinstance(image, Tensor)
    img = (image.data if was_tensor else np.asarray(image)).copy()
    for op in ops:
        if op == "hflip":
            if rng.random() < 0.5:
                img = _hflip(img)
        elif op == "rotate":
            img = _rotate(img, rng.uniform(-10.0, 10.0))
        elif op == "crop":
            img = _crop_resize(img, rng.uniform(0.9, 1.0),
                               rng.random(), rng.random())
        elif op == "brightness":
            img = img + img.dtype.type(rng.uniform(-0.1, 0.1))
        else:
            raise ConfigError(f"unknown augmentation op {op!r}")
    img = np.ascontiguousarray(np.clip(img, -1.0, 1.0))
    return Tensor(img) if was_tensor else img


# -- shared helpers -------------------------------------------------------

class _ImageCache:
    """Decode each manifest image once at the working resolution."""

    def __init__(self, manifest: DatasetManifest, target):
        self.manifest = manifest
        self.target = target
        self._cache: dict = {}

    def __getitem__(self, idx: int) -> np.ndarray:
        arr = self._cache.get(idx)
        if arr is None:
            entry = self.manifest.entries[idx]
            arr = decode_image(self.manifest.resolve(entry), self.target).data
            self._cache[idx] = arr
        return arr


def write_loss_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


# -- GAN training ---------------------------------------------------------

@dataclass
class GanTrainResult:
    history: list                      # (iteration, d_loss, g_loss)
    g_adam: AdamState
    d_adam: AdamState
    iterations: int


def gan_iterations(n_real: int, cfg: TrainConfig) -> int:
    return cfg.epochs * max(1, n_real // cfg.real_per_iter)


def train_gan(manifest: DatasetManifest, g: NetworkSpec, d: NetworkSpec,
              cfg: TrainConfig, *, g_adam: Optional[AdamState] = None,
              d_adam: Optional[AdamState] = None, start_iter: int = 0,
              iterations: Optional[int] = None,
              hooks: Optional[dict] = None) -> GanTrainResult:
    """Adversarial loop: per iteration, one discriminator Adam step on
    real->1 / fake->0 and one generator step on fake->1.

    Each iteration samples `real_per_iter` real images (augmented) and an
    equally sized latent batch. With temporal_resample, augmentation
    parameters and latent noise are drawn fresh from the iteration's
    stream; otherwise they are fixed per image index.
    """
    n = len(manifest)
    if n < cfg.real_per_iter:
        raise InsufficientDataError(
            f"need at least real_per_iter={cfg.real_per_iter} real images, "
            f"have {n}")
    z_dim = g.input_shape[0]
    images = _ImageCache(manifest, d.input_shape)
    g_params, d_params = g.trainable(), d.trainable()
    g_adam = g_adam or AdamState.for_params(g_params)
    d_adam = d_adam or AdamState.for_params(d_params)
    total = iterations if iterations is not None else gan_iterations(n, cfg)
    hooks = hooks or {}

    history = []
    batch = cfg.real_per_iter
    ones_t = np.ones((batch, 1), dtype=np.float32)
    zeros_t = np.zeros((batch, 1), dtype=np.float32)
    for it in range(start_iter, total):
        rng = _rng.stream(cfg.seed, _TAG_GAN_ITER, it)
        idx = rng.choice(n, size=batch, replace=False)
        reals = np.stack([
            augment(images[int(i)], cfg.augment_ops,
                    rng if cfg.temporal_resample
                    else _rng.stream(cfg.seed, _TAG_AUG_FIXED, int(i)))
            for i in idx])
        z = rng.standard_normal((batch, z_dim)).astype(np.float32)

        # Discriminator step: real -> 1, fake -> 0.
        fake = forward(g, Tensor(z), "train")
        p_real = forward(d, Tensor(reals), "train")
        p_fake = forward(d, fake.detach(), "train")
        d_loss = T.add(bce_loss(p_real, ones_t), bce_loss(p_fake, zeros_t))
        grads = T.backward(d_loss)
        adam_step(d_params, {k: v for k, v in grads.items() if k in d_params},
                  d_adam, cfg.learning_rate, cfg.beta1, cfg.beta2)

        # Generator step: fake -> 1 through the updated discriminator.
        z2 = rng.standard_normal((batch, z_dim)).astype(np.float32) \
            if cfg.temporal_resample else z
        fake2 = forward(g, Tensor(z2), "train")
        p_gen = forward(d, fake2, "train")
        g_loss = bce_loss(p_gen, ones_t)
        grads = T.backward(g_loss)
        adam_step(g_params, {k: v for k, v in grads.items() if k in g_params},
                  g_adam, cfg.learning_rate, cfg.beta1, cfg.beta2)

        history.append((it, float(d_loss.item()), float(g_loss.item())))
        if "on_iteration" in hooks:
            hooks["on_iteration"](it, d_loss=d_loss, g_loss=g_loss,
                                  d_targets=(ones_t, zeros_t), g_targets=ones_t)
    return GanTrainResult(history=history, g_adam=g_adam, d_adam=d_adam,
                          iterations=total)


# -- synthesis ------------------------------------------------------------

def synthesize(g: NetworkSpec, count: int, seed: int, out_dir,
               batch_size: int = 64) -> DatasetManifest:
    """Sample `count` generator images (eval mode) and write them as PNG
    attack samples plus a manifest.jsonl under out_dir."""
    if count < 0:
        raise InvalidArgumentError(f"count must be >= 0, got {count}")
    os.makedirs(out_dir, exist_ok=True)
    z_dim = g.input_shape[0]
    entries = []
    written = 0
    bi = 0
    with T.no_grad():
        while written < count:
            bs = min(batch_size, count - written)
            z = _rng.stream(seed, _TAG_SYNTH, bi).standard_normal(
                (bs, z_dim)).astype(np.float32)
            imgs = forward(g, Tensor(z), "eval").data
            for j in range(bs):
                name = f"synth_{seed:08x}_{written + j:05d}.png"
                encode_image(imgs[j], os.path.join(out_dir, name))
                entries.append(ManifestEntry(path=name, label="attack"))
            written += bs
            bi += 1
    manifest = DatasetManifest(entries, base_dir=os.path.abspath(out_dir))
    manifest.save(os.path.join(out_dir, "manifest.jsonl"))
    return manifest


# -- classifier training --------------------------------------------------

def score_manifest(net: NetworkSpec, manifest: DatasetManifest,
                   batch_size: int = 64):
    """Eval-mode scores for every manifest image; returns a ScoredSet."""
    from .metrics import ScoredSet
    images = _ImageCache(manifest, net.input_shape)
    scores = np.empty(len(manifest), dtype=np.float64)
    with T.no_grad():
        for start in range(0, len(manifest), batch_size):
            stop = min(start + batch_size, len(manifest))
            x = np.stack([images[i] for i in range(start, stop)])
            scores[start:stop] = forward(net, Tensor(x), "eval").data[:, 0]
    positive = np.array([e.label == POSITIVE_LABEL for e in manifest])
    return ScoredSet(scores, positive)


@dataclass
class ClassifierTrainResult:
    history: list                      # (epoch, train_loss, test_acc)
    adam: AdamState
    report: object                     # EvalReport on the held-out split
    train_manifest: DatasetManifest
    test_manifest: DatasetManifest


def train_classifier(labeled: DatasetManifest, net: NetworkSpec,
                     cfg: TrainConfig, split: SplitConfig,
                     *, adam: Optional[AdamState] = None, start_epoch: int = 0,
                     presplit=None, threshold: float = 0.5
                     ) -> ClassifierTrainResult:
    """Train the PAD classifier with Adam on BCE over shuffled mini-batches
    and evaluate on the held-out split (bona fide is the positive class)."""
    from .metrics import confusion, evaluate_scores

    if len(labeled.labels()) < 2:
        raise InsufficientDataError(
            f"classifier training needs both labels, got {sorted(labeled.labels())}")
    train_m, test_m = presplit if presplit is not None \
        else split_dataset(labeled, split)

    images = _ImageCache(train_m, net.input_shape)
    targets = np.array([[1.0 if e.label == POSITIVE_LABEL else 0.0]
                        for e in train_m], dtype=np.float32)
    params = net.trainable()
    adam = adam or AdamState.for_params(params)

    history = []
    for epoch in range(start_epoch, cfg.epochs):
        perm = _rng.stream(cfg.seed, _TAG_CLS_EPOCH, epoch).permutation(len(train_m))
        losses = []
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            x = np.stack([images[int(i)] for i in idx])
            loss = bce_loss(forward(net, Tensor(x), "train"), targets[idx])
            grads = T.backward(loss)
            adam_step(params, grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2)
            losses.append(loss.item())
        test_acc = confusion(score_manifest(net, test_m), threshold).accuracy
        history.append((epoch, float(np.mean(losses)), float(test_acc)))

    report = evaluate_scores(score_manifest(net, test_m), threshold)
    return ClassifierTrainResult(history=history, adam=adam, report=report,
                                 train_manifest=train_m, test_manifest=test_m)
