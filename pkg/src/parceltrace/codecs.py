"""File codecs: PNG rasters, the CBT tensor interchange format, world files.

CBT layout (bit-exact contract shared with the trainer): magic ``CBT1``,
then height, width, channels as little-endian uint32, then
height*width*channels IEEE-754 float32 little-endian values, row-major with
the channel index fastest.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CbtError, CodecError, CorruptImageError, UnsupportedImageError, ValidationError
from .raster import (
    CLASS_TO_GRAY,
    BinaryRaster,
    ClassMask,
    GeoRef,
    GrayRaster,
    LabelRaster,
    ProbTensor,
)

CBT_MAGIC = b"CBT1"

# Guard against absurd headers before allocating (2^31 elements).
_CBT_MAX_ELEMENTS = 1 << 31


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------


def _open_png(path: str | Path) -> Image.Image:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such image: {p}")
    try:
        img = Image.open(p)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImageError(f"cannot decode {p}: {exc}") from exc
    return img


def load_gray(path: str | Path) -> GrayRaster:
    """Load an 8-bit grayscale or RGB PNG as grayscale.

    RGB is reduced by integer luminance round((299R + 587G + 114B)/1000).
    """
    img = _open_png(path)
    if img.mode == "L":
        return GrayRaster(np.asarray(img, dtype=np.uint8))
    if img.mode == "RGB":
        rgb = np.asarray(img, dtype=np.uint32)
        lum = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
        return GrayRaster(lum.astype(np.uint8))
    raise UnsupportedImageError(f"{path}: unsupported image mode {img.mode!r} (need 8-bit L or RGB)")


def save_gray(img: GrayRaster, path: str | Path) -> None:
    Image.fromarray(img.data, mode="L").save(Path(path), format="PNG")


def save_class_png(mask: ClassMask, path: str | Path) -> None:
    """Write a class mask as 8-bit PNG: background 0, boundary 128, field 255."""
    Image.fromarray(CLASS_TO_GRAY[mask.data], mode="L").save(Path(path), format="PNG")


def load_class_png(path: str | Path) -> ClassMask:
    """Inverse of :func:`save_class_png`; rejects any level outside {0,128,255}."""
    gray = load_gray(path).data
    valid = np.isin(gray, (0, 128, 255))
    if not valid.all():
        bad = int(gray[~valid][0])
        raise CodecError(f"{path}: gray level {bad} is not a class level (expected 0, 128 or 255)")
    classes = np.zeros(gray.shape, dtype=np.uint8)
    classes[gray == 255] = 1
    classes[gray == 128] = 2
    return ClassMask(classes)


def save_binary_png(mask: BinaryRaster, path: str | Path) -> None:
    """Write a binary raster as 8-bit PNG, foreground 255, background 0."""
    Image.fromarray(np.where(mask.data, 255, 0).astype(np.uint8), mode="L").save(Path(path), format="PNG")


def load_binary_png(path: str | Path) -> BinaryRaster:
    gray = load_gray(path).data
    valid = np.isin(gray, (0, 255))
    if not valid.all():
        bad = int(gray[~valid][0])
        raise CodecError(f"{path}: gray level {bad} is not binary (expected 0 or 255)")
    return BinaryRaster(gray == 255)


def save_instance_png(inst: LabelRaster, path: str | Path) -> None:
    """Write instance labels as RGB, packing the label into the channels.

    Black encodes background; any nonzero label maps to a distinct nonzero
    color, so the paletted/RGB "one color per field" convention holds.
    """
    lab = inst.data
    if lab.max(initial=0) >= (1 << 24):
        raise ValidationError("save_instance_png: labels above 2^24 cannot be packed into RGB")
    rgb = np.empty(lab.shape + (3,), dtype=np.uint8)
    rgb[:, :, 0] = lab & 0xFF
    rgb[:, :, 1] = (lab >> 8) & 0xFF
    rgb[:, :, 2] = (lab >> 16) & 0xFF
    Image.fromarray(rgb, mode="RGB").save(Path(path), format="PNG")


def load_instance_png(path: str | Path) -> LabelRaster:
    """Load a paletted or RGB instance annotation.

    Each distinct color becomes one label (assigned 1..K in lexicographic
    color order); black is background. Grayscale images are accepted with
    gray values standing in for colors.
    """
    img = _open_png(path)
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.uint8)
        rgb = np.stack([arr, arr, arr], axis=2)
    elif img.mode == "RGB":
        rgb = np.asarray(img, dtype=np.uint8)
    else:
        raise UnsupportedImageError(f"{path}: unsupported instance mode {img.mode!r}")
    packed = rgb[:, :, 0].astype(np.uint32) | (rgb[:, :, 1].astype(np.uint32) << 8) | (
        rgb[:, :, 2].astype(np.uint32) << 16
    )
    colors = np.unique(packed)
    colors = colors[colors != 0]
    labels = np.zeros(packed.shape, dtype=np.uint32)
    for i, color in enumerate(colors, start=1):
        labels[packed == color] = i
    return LabelRaster(labels)


# ---------------------------------------------------------------------------
# CBT tensors
# ---------------------------------------------------------------------------


def write_cbt(t: ProbTensor, path: str | Path) -> None:
    with open(Path(path), "wb") as f:
        f.write(CBT_MAGIC)
        f.write(struct.pack("<III", t.height, t.width, t.channels))
        f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def read_cbt(path: str | Path, probabilities: bool | None = None) -> ProbTensor:
    """Read a CBT file; bit-exact inverse of :func:`write_cbt`.

    When ``probabilities`` is None the flag is inferred: values in [0,1]
    with per-pixel channel sums near 1 are tagged as probabilities.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such tensor: {p}")
    blob = p.read_bytes()
    if len(blob) < 16:
        raise CbtError(f"{p}: truncated header ({len(blob)} bytes)")
    if blob[:4] != CBT_MAGIC:
        raise CbtError(f"{p}: bad magic {blob[:4]!r}")
    h, w, c = struct.unpack("<III", blob[4:16])
    n = h * w * c
    if n > _CBT_MAX_ELEMENTS:
        raise CbtError(f"{p}: dimension overflow {h}x{w}x{c}")
    payload = blob[16:]
    if len(payload) != 4 * n:
        raise CbtError(f"{p}: truncated payload ({len(payload)} bytes, expected {4 * n})")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)
    if probabilities is None:
        probabilities = bool(
            data.size == 0
            or (
                data.min() >= 0.0
                and data.max() <= 1.0
                and np.abs(data.sum(axis=2, dtype=np.float64) - 1.0).max() <= 1e-4
            )
        )
    return ProbTensor(data, probabilities=probabilities)


# ---------------------------------------------------------------------------
# World files
# ---------------------------------------------------------------------------


def read_world_file(path: str | Path, gsd: float | None = None) -> GeoRef:
    """Read the 6-line affine sidecar (a, b, c, d, x0, y0, one per line)."""
    p = Path(path)
    lines = [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]
    if len(lines) != 6:
        raise ValidationError(f"{p}: world file needs 6 coefficient lines, found {len(lines)}")
    try:
        a, b, c, d, x0, y0 = (float(v) for v in lines)
    except ValueError as exc:
        raise ValidationError(f"{p}: non-numeric world file entry: {exc}") from exc
    return GeoRef(a, b, c, d, x0, y0, gsd=gsd if gsd is not None else 0.0)


def write_world_file(geo: GeoRef, path: str | Path) -> None:
    Path(path).write_text(
        "\n".join(f"{v:.10f}" for v in (geo.a, geo.b, geo.c, geo.d, geo.x0, geo.y0)) + "\n"
    )
