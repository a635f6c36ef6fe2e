"""Image pre-processing filters applied before segmentation.

All four filters share the 8-neighbor Laplacian kernel
``[[1,1,1],[1,-8,1],[1,1,1]]`` and handle borders by mirror reflection
(edge pixel excluded). Outputs are clamped to [0, 255], never rescaled.
"""

from __future__ import annotations

import enum

import numpy as np

from .raster import GrayRaster


class FilterKind(enum.Enum):
    NONE = "none"
    HIGHPASS = "highpass"
    LAPLACIAN = "laplacian"
    SHARPEN = "sharpen"
    SHARPEN_LAPLACIAN = "sharpen-laplacian"


def _neighbor_sum(img: np.ndarray) -> np.ndarray:
    """Sum of the 8 neighbors of every pixel, reflect borders, int32."""
    p = np.pad(img.astype(np.int32), 1, mode="reflect")
    return (
        p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
        + p[1:-1, :-2] + p[1:-1, 2:]
        + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
    )


def _laplacian_response(img: np.ndarray) -> np.ndarray:
    """Signed response of the 8-neighbor Laplacian kernel."""
    return _neighbor_sum(img) - 8 * img.astype(np.int32)


def _clamp_u8(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0, 255).astype(np.uint8)


def laplacian_magnitude(img: GrayRaster) -> np.ndarray:
    """|Laplacian response| as int32; used by the baseline segmenter."""
    return np.abs(_laplacian_response(img.data))


def apply_filter(img: GrayRaster, kind: FilterKind) -> GrayRaster:
    """Apply one pre-processing filter; dimensions are preserved.

    Laplacian adds a mid-gray offset of 128 so the zero response maps to
    gray; HighPass subtracts the 3x3 box mean; Sharpen subtracts the raw
    Laplacian response (unsharp form).
    """
    data = img.data
    if kind is FilterKind.NONE:
        return GrayRaster(data.copy())
    if kind is FilterKind.LAPLACIAN:
        return GrayRaster(_clamp_u8(128 + _laplacian_response(data)))
    if kind is FilterKind.HIGHPASS:
        # img - boxmean = (9*img - boxsum)/9; round half up in exact ints.
        boxsum = _neighbor_sum(data) + data.astype(np.int32)
        r = 9 * data.astype(np.int32) - boxsum
        return GrayRaster(_clamp_u8((2 * r + 9) // 18))
    if kind is FilterKind.SHARPEN:
        return GrayRaster(_clamp_u8(data.astype(np.int32) - _laplacian_response(data)))
    if kind is FilterKind.SHARPEN_LAPLACIAN:
        return apply_filter(apply_filter(img, FilterKind.SHARPEN), FilterKind.LAPLACIAN)
    raise AssertionError(f"unhandled filter kind {kind}")
