"""Raster data model and deterministic tiling/stitching.

All raster types are thin wrappers around validated numpy arrays and are
treated as immutable after construction. Tiling pads partial edge tiles by
mirror reflection across the last row/column (the edge pixel itself is not
repeated), so every padded pixel equals a real source pixel and
``stitch(tile(x, s)) == x`` holds exactly for any raster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Class indices of the three-class semantic scheme.
CLASS_BACKGROUND = 0
CLASS_FIELD = 1
CLASS_BOUNDARY = 2

# Gray levels used by the class-mask PNG encoding.
CLASS_TO_GRAY = np.array([0, 255, 128], dtype=np.uint8)  # index = class
GRAY_TO_CLASS = {0: CLASS_BACKGROUND, 255: CLASS_FIELD, 128: CLASS_BOUNDARY}


def _require_2d(data: np.ndarray, dtype: type, what: str) -> None:
    if not isinstance(data, np.ndarray) or data.ndim != 2:
        raise ValidationError(f"{what}: expected a 2-D array, got {getattr(data, 'shape', None)}")
    if data.dtype != dtype:
        raise ValidationError(f"{what}: expected dtype {np.dtype(dtype)}, got {data.dtype}")
    if data.shape[0] < 1 or data.shape[1] < 1:
        raise ValidationError(f"{what}: empty raster {data.shape}")


@dataclass(frozen=True)
class GrayRaster:
    """8-bit grayscale image, shape (height, width)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        _require_2d(self.data, np.uint8, "GrayRaster")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelRaster:
    """Instance labels, shape (height, width); label 0 is background."""

    data: np.ndarray

    def __post_init__(self) -> None:
        _require_2d(self.data, np.uint32, "LabelRaster")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def labels(self) -> np.ndarray:
        """Distinct non-zero labels, ascending."""
        vals = np.unique(self.data)
        return vals[vals != 0]


@dataclass(frozen=True)
class ClassMask:
    """Per-pixel class indices in {0 background, 1 field, 2 boundary}."""

    data: np.ndarray

    def __post_init__(self) -> None:
        _require_2d(self.data, np.uint8, "ClassMask")
        if self.data.max(initial=0) > 2:
            bad = int(self.data.max())
            raise ValidationError(f"ClassMask: value {bad} outside {{0,1,2}}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryRaster:
    """Boolean raster (foreground = True)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if not isinstance(self.data, np.ndarray) or self.data.ndim != 2 or self.data.dtype != np.bool_:
            raise ValidationError("BinaryRaster: expected a 2-D bool array")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        return int(np.count_nonzero(self.data))


# Per-pixel channel sums of a probability tensor may drift this far from 1.
PROB_SUM_TOL = 1e-4


@dataclass(frozen=True)
class ProbTensor:
    """H x W x 3 class scores, either normalized probabilities or raw logits.

    Zero-sized tensors (height or width 0) are permitted; all invariants then
    hold vacuously.
    """

    data: np.ndarray
    probabilities: bool = True

    def __post_init__(self) -> None:
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3:
            raise ValidationError(f"ProbTensor: expected a 3-D array, got {getattr(d, 'shape', None)}")
        if d.dtype not in (np.float32, np.float64):
            raise ValidationError(f"ProbTensor: expected float32/float64, got {d.dtype}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("ProbTensor: non-finite values")
        if self.probabilities and d.size:
            if d.min() < 0.0 or d.max() > 1.0:
                raise ValidationError("ProbTensor: probabilities outside [0, 1]")
            sums = d.sum(axis=2, dtype=np.float64)
            if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
                worst = float(np.abs(sums - 1.0).max())
                raise ValidationError(f"ProbTensor: channel sums deviate from 1 by {worst:.2e}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class TileGrid:
    """Geometry of a ceil-division tiling with reflect-padded edge tiles."""

    source_width: int
    source_height: int
    tile_size: int
    padding: str = "reflect"

    def __post_init__(self) -> None:
        if self.tile_size < 2:
            raise ValidationError(f"TileGrid: tile size {self.tile_size} < 2")
        if self.source_width < 1 or self.source_height < 1:
            raise ValidationError("TileGrid: empty source")
        if self.padding != "reflect":
            raise ValidationError(f"TileGrid: unknown padding mode {self.padding!r}")

    @property
    def columns(self) -> int:
        return math.ceil(self.source_width / self.tile_size)

    @property
    def rows(self) -> int:
        return math.ceil(self.source_height / self.tile_size)

    def to_dict(self) -> dict:
        return {
            "source_width": self.source_width,
            "source_height": self.source_height,
            "tile_size": self.tile_size,
            "padding": self.padding,
            "rows": self.rows,
            "columns": self.columns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TileGrid":
        try:
            grid = cls(
                source_width=int(d["source_width"]),
                source_height=int(d["source_height"]),
                tile_size=int(d["tile_size"]),
                padding=str(d.get("padding", "reflect")),
            )
        except KeyError as exc:
            raise ValidationError(f"grid description missing key {exc}") from exc
        return grid


@dataclass(frozen=True)
class GeoRef:
    """Affine pixel->world mapping plus ground sample distance.

    world_x = a*px + c*py + x0 ; world_y = b*px + d*py + y0, matching the
    6-line world-file layout (a, b, c, d, x0, y0).
    """

    a: float
    b: float
    c: float
    d: float
    x0: float
    y0: float
    gsd: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.a == 0.0 or self.d == 0.0:
            raise ValidationError("GeoRef: pixel-size terms must be nonzero")
        det = abs(self.a * self.d - self.b * self.c)
        if self.gsd == 0.0:
            object.__setattr__(self, "gsd", math.sqrt(det))
        if self.gsd <= 0.0:
            raise ValidationError("GeoRef: GSD must be positive")

    @classmethod
    def identity(cls) -> "GeoRef":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, gsd=1.0)


# ---------------------------------------------------------------------------
# Tiling / stitching
# ---------------------------------------------------------------------------


def reflect_index(i: int, n: int) -> int:
    """Source index supplying padded position ``i`` for an axis of length ``n``.

    Mirror reflection across the last sample, excluding the edge sample
    itself; repeats when the pad runs deeper than the axis.
    """
    if n == 1:
        return 0
    period = 2 * n - 2
    m = i % period
    return m if m < n else period - m


def _tile_array(data: np.ndarray, size: int) -> tuple[list[np.ndarray], TileGrid]:
    h, w = data.shape[0], data.shape[1]
    grid = TileGrid(source_width=w, source_height=h, tile_size=size)
    pad_h = grid.rows * size - h
    pad_w = grid.columns * size - w
    pad = ((0, pad_h), (0, pad_w)) + ((0, 0),) * (data.ndim - 2)
    padded = np.pad(data, pad, mode="reflect")
    tiles = []
    for r in range(grid.rows):
        for c in range(grid.columns):
            tiles.append(padded[r * size:(r + 1) * size, c * size:(c + 1) * size].copy())
    return tiles, grid


def _stitch_arrays(tiles: list[np.ndarray], grid: TileGrid) -> np.ndarray:
    expected = grid.rows * grid.columns
    if len(tiles) != expected:
        raise ValidationError(f"stitch: got {len(tiles)} tiles, grid needs {expected}")
    size = grid.tile_size
    for i, t in enumerate(tiles):
        if t.shape[0] != size or t.shape[1] != size:
            raise ValidationError(f"stitch: tile {i} has shape {t.shape[:2]}, expected ({size}, {size})")
    trailing = tiles[0].shape[2:]
    full = np.empty((grid.rows * size, grid.columns * size) + trailing, dtype=tiles[0].dtype)
    for r in range(grid.rows):
        for c in range(grid.columns):
            full[r * size:(r + 1) * size, c * size:(c + 1) * size] = tiles[r * grid.columns + c]
    return full[: grid.source_height, : grid.source_width].copy()


def tile(img: GrayRaster, size: int) -> tuple[list[GrayRaster], TileGrid]:
    """Split ``img`` into row-major size x size tiles with reflect padding."""
    if size < 2:
        raise ValidationError(f"tile: size {size} < 2")
    arrays, grid = _tile_array(img.data, size)
    return [GrayRaster(a) for a in arrays], grid


def stitch(
    tiles: list[GrayRaster] | list[ClassMask] | list[ProbTensor],
    grid: TileGrid,
):
    """Reassemble tiles produced for ``grid``, discarding padded margins.

    Accepts grayscale, class-mask, or probability tiles and returns the same
    kind. Inverse of :func:`tile` (and of the trainer's per-tile outputs).
    """
    if not tiles:
        raise ValidationError("stitch: no tiles")
    first = tiles[0]
    if isinstance(first, GrayRaster):
        return GrayRaster(_stitch_arrays([t.data for t in tiles], grid))
    if isinstance(first, ClassMask):
        return ClassMask(_stitch_arrays([t.data for t in tiles], grid))
    if isinstance(first, ProbTensor):
        probs = all(t.probabilities for t in tiles)
        return ProbTensor(_stitch_arrays([t.data for t in tiles], grid), probabilities=probs)
    raise ValidationError(f"stitch: unsupported tile type {type(first).__name__}")
