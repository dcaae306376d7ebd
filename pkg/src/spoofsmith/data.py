"""Dataset manifests, PNG decode/encode, the procedural toy corpus, and
bit-exact binary persistence for tensors and checkpoints.

Manifests are JSON Lines; each line holds {path, label, eye, subset} plus
arbitrary extra fields that are preserved on rewrite. Tensor blobs and
checkpoints use the fixed little-endian layouts documented next to their
writers, so round trips are bitwise lossless.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import rng as _rng
from .errors import (CheckpointCorruptError, CheckpointVersionError, DecodeError,
                     InvalidArgumentError, ManifestError, ShapeError)
from .models import NetworkSpec
from .tensor import Tensor

LABELS = ("bona_fide", "attack")
EYES = ("left", "right", "unknown")

_KNOWN_FIELDS = ("path", "label", "eye", "subset")


# -- manifests ------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    label: str
    eye: str = "unknown"
    subset: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"path": self.path, "label": self.label, "eye": self.eye}
        if self.subset is not None:
            d["subset"] = self.subset
        d.update(self.extra)
        return d


@dataclass
class DatasetManifest:
    entries: list
    base_dir: str = "."

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def resolve(self, entry: ManifestEntry) -> str:
        if os.path.isabs(entry.path):
            return entry.path
        return os.path.join(self.base_dir, entry.path)

    def labels(self) -> set:
        return {e.label for e in self.entries}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for e in self.entries:
                f.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def load_manifest(path) -> DatasetManifest:
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON: {e}") from None
            if not isinstance(rec, dict) or "path" not in rec or "label" not in rec:
                raise ManifestError(
                    f"{path}: line {lineno}: entry needs 'path' and 'label'")
            if rec["label"] not in LABELS:
                raise ManifestError(
                    f"{path}: line {lineno}: label {rec['label']!r} not in {LABELS}")
            eye = rec.get("eye", "unknown")
            if eye not in EYES:
                raise ManifestError(
                    f"{path}: line {lineno}: eye {eye!r} not in {EYES}")
            if rec["path"] in seen:
                raise ManifestError(
                    f"{path}: line {lineno}: duplicate path {rec['path']!r}")
            seen.add(rec["path"])
            extra = {k: v for k, v in rec.items() if k not in _KNOWN_FIELDS}
            entries.append(ManifestEntry(path=rec["path"], label=rec["label"],
                                         eye=eye, subset=rec.get("subset"),
                                         extra=extra))
    return DatasetManifest(entries, base_dir=os.path.dirname(os.path.abspath(path)))


# -- images ---------------------------------------------------------------

def _bilinear_resize_pil(im: Image.Image, w: int, h: int) -> Image.Image:
    if im.size == (w, h):
        return im
    return im.resize((w, h), Image.BILINEAR)


def decode_image(path, target) -> Tensor:
    """Decode an 8-bit gray/RGB PNG, resize to target (c,h,w), and map
    pixels to [-1,1] via p/127.5 - 1."""
    c, h, w = target
    if c not in (1, 3):
        raise ShapeError(f"target channels must be 1 or 3, got {c}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DecodeError(f"{path}: not a PNG file (format={im.format})")
            if im.mode not in ("L", "RGB"):
                raise DecodeError(
                    f"{path}: unsupported PNG mode {im.mode!r} (need 8-bit L or RGB)")
            im = _bilinear_resize_pil(im, w, h)
            arr = np.asarray(im, dtype=np.float32)
    except UnidentifiedImageError:
        raise DecodeError(f"{path}: cannot identify image file") from None
    except OSError as e:
        raise DecodeError(f"{path}: {e}") from None

    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    if arr.shape[0] == 1 and c == 3:
        arr = np.repeat(arr, 3, axis=0)
    elif arr.shape[0] == 3 and c == 1:
        luma = np.array([0.299, 0.587, 0.114], dtype=np.float32)
        arr = np.tensordot(luma, arr, axes=([0], [0]))[None]
    return Tensor(arr / np.float32(127.5) - np.float32(1.0))


def encode_image(t, path) -> None:
    """Inverse of decode_image's mapping: clamp to [-1,1] and write an
    8-bit PNG (gray for 1 channel, RGB for 3)."""
    arr = t.data if isinstance(t, Tensor) else np.asarray(t)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeError(f"expected [c,h,w] with c in (1,3), got {arr.shape}")
    u8 = np.clip(np.rint((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5), 0, 255) \
        .astype(np.uint8)
    if u8.shape[0] == 1:
        im = Image.fromarray(u8[0], mode="L")
    else:
        im = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    im.save(path, format="PNG")


# -- toy corpus -----------------------------------------------------------

def _toy_image(gen: np.random.Generator, res: int, left_eye: bool) -> np.ndarray:
    """One procedural periocular image, uint8 [3,res,res]: sclera gradient,
    iris disk with concentric ring texture plus radial noise, dark pupil."""
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float32) / (res - 1)

    # Sclera: soft vertical gradient with a mild tint.
    top = gen.uniform(120, 180)
    bottom = gen.uniform(90, 150)
    base = top + (bottom - top) * yy
    img = np.stack([base * gen.uniform(0.95, 1.05) for _ in range(3)])

    # Iris geometry; eye side shifts the center horizontally.
    cx = 0.5 + (-1 if left_eye else 1) * gen.uniform(0.02, 0.1)
    cy = 0.5 + gen.uniform(-0.06, 0.06)
    r_iris = gen.uniform(0.28, 0.36)
    r_pupil = r_iris * gen.uniform(0.3, 0.45)
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    rn = dist / r_iris  # normalized radius

    # Iris: tinted base plus concentric rings and angular noise.
    tint = gen.uniform(0.3, 1.0, size=3)
    iris_base = gen.uniform(60, 110)
    k = gen.uniform(6, 14)
    phase = gen.uniform(0, 2 * np.pi)
    rings = 25.0 * np.sin(k * rn * 2 * np.pi + phase)
    angle = np.arctan2(yy - cy, xx - cx)
    bins = 64
    radial = gen.uniform(-18, 18, size=bins)[
        ((angle + np.pi) / (2 * np.pi) * (bins - 1)).astype(int)]
    iris_val = iris_base + rings + radial

    in_iris = dist <= r_iris
    for ch in range(3):
        img[ch][in_iris] = (iris_val * tint[ch])[in_iris]

    # Pupil with a small specular highlight.
    in_pupil = dist <= r_pupil
    img[:, in_pupil] = gen.uniform(5, 25)
    hx = cx + gen.uniform(-0.3, 0.3) * r_pupil
    hy = cy + gen.uniform(-0.3, 0.3) * r_pupil
    highlight = np.sqrt((xx - hx) ** 2 + (yy - hy) ** 2) <= r_pupil * 0.25
    img[:, highlight & in_pupil] = gen.uniform(200, 250)

    # Eyelids: darken the far top and bottom bands.
    lid = np.clip((np.abs(yy - cy) - r_iris * 1.2) / 0.2, 0, 1)
    img *= (1.0 - 0.35 * lid)

    img += gen.normal(0, 3.0, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gen_toy_corpus(count: int, resolution: int, seed: int, out_dir) -> DatasetManifest:
    """Write `count` procedural bona-fide images and a manifest.jsonl into
    out_dir. Eye side alternates left/right for an equal balance."""
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(count):
        gen = _rng.stream(seed, "toy", i)
        left = i % 2 == 0
        arr = _toy_image(gen, resolution, left)
        name = f"toy_{i:05d}.png"
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(
            os.path.join(out_dir, name), format="PNG")
        entries.append(ManifestEntry(path=name, label="bona_fide",
                                     eye="left" if left else "right"))
    manifest = DatasetManifest(entries, base_dir=os.path.abspath(out_dir))
    manifest.save(os.path.join(out_dir, "manifest.jsonl"))
    return manifest


# -- tensor blobs ---------------------------------------------------------
#
# Layout: magic "PADT", u8 version=1, u8 dtype (0=f32, 1=f64), u8 rank,
# padding byte 0, rank x u64 little-endian dims, row-major little-endian
# elements.

_BLOB_MAGIC = b"PADT"
_BLOB_VERSION = 1
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_tensor_blob(f, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise InvalidArgumentError(f"unsupported blob dtype {arr.dtype}")
    f.write(_BLOB_MAGIC)
    f.write(struct.pack("<BBBB", _BLOB_VERSION, _DTYPE_CODES[arr.dtype],
                        arr.ndim, 0))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_tensor_blob(f) -> np.ndarray:
    head = f.read(8)
    if len(head) < 8 or head[:4] != _BLOB_MAGIC:
        raise CheckpointCorruptError("bad tensor blob header")
    version, dcode, rank, pad = struct.unpack("<BBBB", head[4:])
    if version != _BLOB_VERSION:
        raise CheckpointVersionError(f"unsupported blob version {version}")
    if dcode not in _CODE_DTYPES or pad != 0:
        raise CheckpointCorruptError("bad tensor blob header fields")
    dims_raw = f.read(8 * rank)
    if len(dims_raw) < 8 * rank:
        raise CheckpointCorruptError("truncated tensor blob dims")
    dims = struct.unpack(f"<{rank}Q", dims_raw)
    dtype = _CODE_DTYPES[dcode]
    nbytes = int(np.prod(dims)) * dtype.itemsize if rank else dtype.itemsize
    payload = f.read(nbytes)
    if len(payload) < nbytes:
        raise CheckpointCorruptError("truncated tensor blob payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save_tensor(arr, path) -> None:
    arr = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
    with open(path, "wb") as f:
        write_tensor_blob(f, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor_blob(f)


# -- checkpoints ----------------------------------------------------------
#
# Layout: magic "PADC", u8 version=1, u64 little-endian header length, a
# canonical-JSON header (network descriptor, metadata, blob directory with
# offsets relative to the end of the header), then concatenated blobs in
# directory order.

_CKPT_MAGIC = b"PADC"
_CKPT_VERSION = 1


@dataclass
class AdamSnapshot:
    m: dict
    v: dict
    t: int


@dataclass
class Checkpoint:
    network: NetworkSpec
    meta: dict
    adam: Optional[AdamSnapshot] = None


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, network: NetworkSpec, meta: Optional[dict] = None,
                    adam: Optional[AdamSnapshot] = None) -> None:
    blobs = {f"param:{name}": t.data for name, t in network.params.items()}
    adam_meta = None
    if adam is not None:
        blobs.update({f"adam.m:{k}": v for k, v in adam.m.items()})
        blobs.update({f"adam.v:{k}": v for k, v in adam.v.items()})
        adam_meta = {"t": adam.t}

    encoded = {}
    for name in sorted(blobs):
        buf = io.BytesIO()
        write_tensor_blob(buf, blobs[name])
        encoded[name] = buf.getvalue()

    directory = []
    offset = 0
    for name in sorted(encoded):
        directory.append({"name": name, "offset": offset,
                          "length": len(encoded[name])})
        offset += len(encoded[name])

    header = _canonical_json({
        "version": _CKPT_VERSION,
        "network": network.to_descriptor(),
        "meta": meta or {},
        "adam": adam_meta,
        "blobs": directory,
    })
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<B", _CKPT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name in sorted(encoded):
            f.write(encoded[name])


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise CheckpointCorruptError(f"{path}: not a checkpoint file")
        vraw = f.read(1)
        if not vraw:
            raise CheckpointCorruptError(f"{path}: truncated header")
        version = vraw[0]
        if version != _CKPT_VERSION:
            raise CheckpointVersionError(f"{path}: unsupported version {version}")
        lraw = f.read(8)
        if len(lraw) < 8:
            raise CheckpointCorruptError(f"{path}: truncated header")
        (hlen,) = struct.unpack("<Q", lraw)
        hraw = f.read(hlen)
        if len(hraw) < hlen:
            raise CheckpointCorruptError(f"{path}: truncated header")
        try:
            header = json.loads(hraw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointCorruptError(f"{path}: bad header: {e}") from None

        blobs = {}
        for rec in header["blobs"]:
            arr = read_tensor_blob(f)
            blobs[rec["name"]] = arr

    desc = header["network"]
    params = {}
    buffer_names = set()
    for ly in desc["layers"]:
        for role, pname in ly["params"].items():
            if role in ("running_mean", "running_var"):
                buffer_names.add(pname)
    for name, arr in blobs.items():
        if name.startswith("param:"):
            pname = name[len("param:"):]
            params[pname] = Tensor(arr, requires_grad=pname not in buffer_names,
                                   name=pname)
    network = NetworkSpec.from_descriptor(desc, params)

    adam = None
    if header.get("adam") is not None:
        m = {n[len("adam.m:"):]: a for n, a in blobs.items()
             if n.startswith("adam.m:")}
        v = {n[len("adam.v:"):]: a for n, a in blobs.items()
             if n.startswith("adam.v:")}
        adam = AdamSnapshot(m=m, v=v, t=int(header["adam"]["t"]))
    return Checkpoint(network=network, meta=header.get("meta", {}), adam=adam)
