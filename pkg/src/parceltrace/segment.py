"""Prediction consumption and the deterministic non-ML baseline segmenter.

The baseline thresholds the |Laplacian| response, closes the result with a
3x3 element, and flood-fills from the raster border: enclosed non-boundary
pixels become field, border-reachable ones background. synth_scene generates
matching (image, instance) pairs so the whole pipeline is testable with no
trained model.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .filters import laplacian_magnitude
from .maskgen import binary_dilate, binary_erode
from .raster import (
    CLASS_BOUNDARY,
    CLASS_FIELD,
    ClassMask,
    GrayRaster,
    LabelRaster,
    ProbTensor,
    TileGrid,
    stitch,
)

BASELINE_THRESHOLD = 32

# 4-connected structure for background flood fill: boundaries enclose a
# region as soon as they are 8-connected.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def argmax_classes(p: ProbTensor) -> ClassMask:
    """Per-pixel argmax; ties resolve toward the lowest class index."""
    if p.channels != 3:
        raise ValidationError(f"argmax_classes: expected 3 channels, got {p.channels}")
    return ClassMask(np.argmax(p.data, axis=2).astype(np.uint8))


def tile_filename(row: int, col: int) -> str:
    return f"tile_{row}_{col}.cbt"


def ingest_predictions(directory: str | Path, grid: TileGrid) -> ClassMask:
    """Stitch per-tile CBT predictions named tile_<row>_<col>.cbt, then argmax."""
    from .codecs import read_cbt

    d = Path(directory)
    tiles: list[ProbTensor] = []
    for r in range(grid.rows):
        for c in range(grid.columns):
            path = d / tile_filename(r, c)
            if not path.exists():
                raise FileNotFoundError(f"missing prediction tile: {path}")
            t = read_cbt(path)
            if t.height != grid.tile_size or t.width != grid.tile_size:
                raise ValidationError(
                    f"{path}: tile is {t.height}x{t.width}, grid expects "
                    f"{grid.tile_size}x{grid.tile_size}"
                )
            tiles.append(t)
    full = stitch(tiles, grid)
    return argmax_classes(full)


def baseline_segment(img: GrayRaster, threshold: int = BASELINE_THRESHOLD) -> ClassMask:
    """Deterministic edge-based stand-in for a trained segmentation model."""
    edges = laplacian_magnitude(img) >= threshold
    closed = binary_erode(binary_dilate(edges), border_value=True)
    open_space = ~closed
    labels, n = ndimage.label(open_space, structure=_CROSS)
    border_labels = np.unique(
        np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    )
    border_labels = border_labels[border_labels != 0]
    outside = np.isin(labels, border_labels)
    classes = np.zeros(img.data.shape, dtype=np.uint8)
    classes[closed] = CLASS_BOUNDARY
    classes[open_space & ~outside] = CLASS_FIELD
    return ClassMask(classes)


# ---------------------------------------------------------------------------
# Synthetic farmland scenes
# ---------------------------------------------------------------------------

SEPARATOR_INTENSITY = 16
_FRAME = 2        # dark frame width at the raster border
_MIN_SIDE = 8     # smallest parcel side the splitter will produce
_INTENSITY_LO = 60
_INTENSITY_HI = 230


def synth_scene(
    seed: int, width: int, height: int, parcels: int
) -> tuple[GrayRaster, LabelRaster]:
    """Deterministic rectangular farmland mosaic plus its instance raster.

    Parcels tile the interior (abutting, so downstream erosion has real work
    to do); the image darkens a 2-px band straddling every internal parcel
    edge plus the border frame. Distinct mean intensities per parcel.
    """
    if parcels < 1:
        raise ValidationError("synth_scene: parcel count must be >= 1")
    if parcels > 170:
        raise ValidationError("synth_scene: at most 170 parcels keep intensities distinct")
    interior_w = width - 2 * _FRAME
    interior_h = height - 2 * _FRAME
    if interior_w < _MIN_SIDE or interior_h < _MIN_SIDE:
        raise ValidationError(f"synth_scene: {width}x{height} too small for any parcel")

    rng = np.random.default_rng(seed)
    # Rects as (r0, c0, r1, c1), half-open, in interior coordinates.
    rects: list[tuple[int, int, int, int]] = [(0, 0, interior_h, interior_w)]
    while len(rects) < parcels:
        # Split the largest splittable rect; ties resolve to list order.
        order = sorted(
            range(len(rects)),
            key=lambda j: (rects[j][2] - rects[j][0]) * (rects[j][3] - rects[j][1]),
            reverse=True,
        )
        i = next(
            (
                j
                for j in order
                if max(rects[j][2] - rects[j][0], rects[j][3] - rects[j][1]) >= 2 * _MIN_SIDE
            ),
            None,
        )
        if i is None:
            raise ValidationError(f"synth_scene: {width}x{height} too small for {parcels} parcels")
        r0, c0, r1, c1 = rects.pop(i)
        hgt, wdt = r1 - r0, c1 - c0
        vertical = wdt >= hgt  # split the longer axis
        span = wdt if vertical else hgt
        cut = int(rng.integers(_MIN_SIDE, span - _MIN_SIDE + 1))
        if vertical:
            rects.insert(i, (r0, c0, r1, c0 + cut))
            rects.insert(i + 1, (r0, c0 + cut, r1, c1))
        else:
            rects.insert(i, (r0, c0, r0 + cut, c1))
            rects.insert(i + 1, (r0 + cut, c0, r1, c1))

    labels = np.zeros((height, width), dtype=np.uint32)
    for idx, (r0, c0, r1, c1) in enumerate(rects, start=1):
        labels[_FRAME + r0:_FRAME + r1, _FRAME + c0:_FRAME + c1] = idx

    # Distinct mean intensities, assignment shuffled per seed.
    k = len(rects)
    levels = np.round(np.linspace(_INTENSITY_LO, _INTENSITY_HI, k)).astype(np.uint8)
    levels = rng.permutation(levels)
    image = np.full((height, width), SEPARATOR_INTENSITY, dtype=np.uint8)
    for idx in range(1, k + 1):
        image[labels == idx] = levels[idx - 1]

    # Darken parcel pixels that touch a different parcel (8-adjacency):
    # together the two sides form the 2-px separator band.
    pad = np.pad(labels, 1, mode="edge")
    h, w = labels.shape
    edge = np.zeros((h, w), dtype=bool)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            if dr == 1 and dc == 1:
                continue
            nb = pad[dr:dr + h, dc:dc + w]
            edge |= (labels != 0) & (nb != 0) & (nb != labels)
    image[edge] = SEPARATOR_INTENSITY
    return GrayRaster(image), LabelRaster(labels)


def separator_pixels(img: GrayRaster) -> np.ndarray:
    """Boolean map of the dark separator network of a synthetic scene."""
    return img.data == SEPARATOR_INTENSITY
