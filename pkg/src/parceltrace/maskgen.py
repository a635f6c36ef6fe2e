"""Build three-class semantic masks from instance annotations.

Each field is eroded by one pixel with the 3x3 square structuring element so
that touching fields separate, then a gray boundary band of Chebyshev radius
``b`` is grown around the eroded fields; everything else is background.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import CLASS_BOUNDARY, CLASS_FIELD, ClassMask, LabelRaster

logger = logging.getLogger(__name__)

ALLOWED_BUFFERS = (1, 2, 5)


@dataclass(frozen=True)
class MaskConfig:
    """Boundary buffer width in pixels and the (fixed) erosion radius."""

    buffer_px: int = 2
    erosion_radius: int = 1
    allow_nonstandard_buffer: bool = False

    def __post_init__(self) -> None:
        if self.erosion_radius != 1:
            raise ValidationError("MaskConfig: erosion radius is fixed at 1")
        if self.buffer_px < 1:
            raise ValidationError(f"MaskConfig: buffer {self.buffer_px} < 1")
        if self.buffer_px not in ALLOWED_BUFFERS and not self.allow_nonstandard_buffer:
            raise ValidationError(
                f"MaskConfig: buffer {self.buffer_px} not in {ALLOWED_BUFFERS}; "
                "pass allow_nonstandard_buffer to override"
            )


def binary_dilate(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Chebyshev (3x3 square) dilation; pixels outside the raster are empty."""
    out = mask.astype(bool)
    for _ in range(iterations):
        p = np.pad(out, 1, mode="constant", constant_values=False)
        out = (
            p[:-2, :-2] | p[:-2, 1:-1] | p[:-2, 2:]
            | p[1:-1, :-2] | p[1:-1, 1:-1] | p[1:-1, 2:]
            | p[2:, :-2] | p[2:, 1:-1] | p[2:, 2:]
        )
    return out


def binary_erode(mask: np.ndarray, iterations: int = 1, border_value: bool = False) -> np.ndarray:
    """3x3 square erosion; ``border_value`` fills the implicit frame."""
    out = mask.astype(bool)
    for _ in range(iterations):
        p = np.pad(out, 1, mode="constant", constant_values=border_value)
        out = (
            p[:-2, :-2] & p[:-2, 1:-1] & p[:-2, 2:]
            & p[1:-1, :-2] & p[1:-1, 1:-1] & p[1:-1, 2:]
            & p[2:, :-2] & p[2:, 1:-1] & p[2:, 2:]
        )
    return out


def erode_fields(inst: LabelRaster) -> tuple[LabelRaster, list[int]]:
    """Erode every labeled field by one pixel, independently per label.

    A pixel keeps its label iff itself and all 8 neighbors carry that label
    (pixels outside the raster count as background). Returns the eroded
    raster and the labels whose fields eroded away entirely.
    """
    lab = inst.data
    p = np.pad(lab, 1, mode="constant", constant_values=0)
    keep = np.ones(lab.shape, dtype=bool)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            if dr == 1 and dc == 1:
                continue
            h, w = lab.shape
            keep &= p[dr:dr + h, dc:dc + w] == lab
    eroded = np.where(keep & (lab != 0), lab, 0).astype(np.uint32)
    before = set(np.unique(lab[lab != 0]).tolist())
    after = set(np.unique(eroded[eroded != 0]).tolist())
    vanished = sorted(int(v) for v in before - after)
    for v in vanished:
        logger.warning("field %d eroded to empty", v)
    return LabelRaster(eroded), vanished


def build_semantic_mask(inst: LabelRaster, cfg: MaskConfig) -> tuple[ClassMask, list[int]]:
    """Instance annotation -> {background, field, boundary} class mask.

    field = eroded field pixels; boundary = non-field pixels within
    Chebyshev distance ``cfg.buffer_px`` of any field pixel; background =
    the rest. Erosion warnings propagate.
    """
    eroded, vanished = erode_fields(inst)
    field = eroded.data != 0
    band = binary_dilate(field, iterations=cfg.buffer_px) & ~field
    classes = np.zeros(inst.data.shape, dtype=np.uint8)
    classes[field] = CLASS_FIELD
    classes[band] = CLASS_BOUNDARY
    return ClassMask(classes), vanished
