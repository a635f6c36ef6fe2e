"""Thinning against an independent reference implementation; polyline tracing."""

import numpy as np
import pytest
from scipy import ndimage

from parceltrace.errors import ValidationError
from parceltrace.raster import BinaryRaster
from parceltrace.skeletonize import apply_georef, thin, trace_polylines
from parceltrace.raster import GeoRef

EIGHT = np.ones((3, 3), dtype=bool)


def binary(arr) -> BinaryRaster:
    return BinaryRaster(np.asarray(arr, dtype=bool))


# ---------------------------------------------------------------------------
# Reference Zhang-Suen: per-pixel loops, nothing shared with the library.
# ---------------------------------------------------------------------------


def _ref_neighbors(img, r, c):
    return [
        img[r - 1, c], img[r - 1, c + 1], img[r, c + 1], img[r + 1, c + 1],
        img[r + 1, c], img[r + 1, c - 1], img[r, c - 1], img[r - 1, c - 1],
    ]  # P2..P9 clockwise from north


def reference_zhang_suen(mask: np.ndarray) -> np.ndarray:
    img = np.pad(mask.astype(np.uint8), 1)
    while True:
        changed = False
        for phase in (0, 1):
            kill = []
            rows, cols = np.nonzero(img)
            for r, c in zip(rows, cols):
                n = _ref_neighbors(img, r, c)
                b = sum(n)
                if not (2 <= b <= 6):
                    continue
                ring = n + n[:1]
                a = sum(1 for i in range(8) if ring[i] == 0 and ring[i + 1] == 1)
                if a != 1:
                    continue
                p2, p4, p6, p8 = n[0], n[2], n[4], n[6]
                if phase == 0:
                    if p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0:
                        kill.append((r, c))
                else:
                    if p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0:
                        kill.append((r, c))
            for r, c in kill:
                img[r, c] = 0
            changed = changed or bool(kill)
        if not changed:
            return img[1:-1, 1:-1].astype(bool)


def random_blobs(seed: int, n: int, side: int = 64, min_size: int = 8):
    """Chunky random foreground shapes (smoothed noise, specks removed)."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        noise = rng.random((side, side))
        smooth = ndimage.gaussian_filter(noise, sigma=4.0)
        fg = smooth > np.quantile(smooth, 0.65)
        lab, count = ndimage.label(fg, structure=EIGHT)
        for v in range(1, count + 1):
            if (lab == v).sum() < min_size:
                fg[lab == v] = False
        yield fg


class TestThin:
    def test_isolated_pixel_unchanged(self):
        arr = np.zeros((5, 5), dtype=bool)
        arr[2, 2] = True
        assert np.array_equal(thin(binary(arr)).data, arr)

    def test_one_px_line_unchanged(self):
        arr = np.zeros((5, 12), dtype=bool)
        arr[2, 1:11] = True
        assert np.array_equal(thin(binary(arr)).data, arr)

    def test_bar_reduces_to_centerline(self):
        arr = np.zeros((7, 14), dtype=bool)
        arr[2:5, 2:12] = True  # 3x10 solid bar
        got = thin(binary(arr)).data
        expect = reference_zhang_suen(arr)
        assert np.array_equal(got, expect)
        rows = np.unique(np.nonzero(got)[0])
        assert rows.tolist() == [3]  # single middle row survives

    def test_matches_reference_on_blobs(self):
        for fg in random_blobs(seed=50, n=15, side=40):
            got = thin(binary(fg)).data
            assert np.array_equal(got, reference_zhang_suen(fg))

    def test_idempotent_on_blobs(self):
        for fg in random_blobs(seed=51, n=20):
            once = thin(binary(fg))
            twice = thin(once)
            assert np.array_equal(once.data, twice.data)

    def test_skeleton_contained_in_input(self):
        for fg in random_blobs(seed=52, n=20):
            sk = thin(binary(fg)).data
            assert not (sk & ~fg).any()

    def test_component_count_preserved(self):
        for fg in random_blobs(seed=53, n=20):
            _, before = ndimage.label(fg, structure=EIGHT)
            _, after = ndimage.label(thin(binary(fg)).data, structure=EIGHT)
            assert before == after


class TestTrace:
    def test_straight_line_single_chain(self):
        arr = np.zeros((4, 12), dtype=bool)
        arr[1, 1:11] = True
        polys = trace_polylines(binary(arr))
        assert len(polys.polylines) == 1
        line = polys.polylines[0]
        assert line.shape == (10, 2)
        assert line[0].tolist() == [1.5, 1.5]   # (x, y) = (col+.5, row+.5)
        assert line[-1].tolist() == [10.5, 1.5]

    def test_plus_sign_gives_four_chains(self):
        arr = np.zeros((11, 11), dtype=bool)
        arr[5, 1:10] = True
        arr[1:10, 5] = True
        polys = trace_polylines(binary(arr))
        assert len(polys.polylines) == 4
        center = [5.5, 5.5]
        for line in polys.polylines:
            assert line[0].tolist() == center or line[-1].tolist() == center

    def test_closed_ring_single_closed_polyline(self):
        arr = np.zeros((8, 8), dtype=bool)
        arr[1, 1:7] = True
        arr[6, 1:7] = True
        arr[1:7, 1] = True
        arr[1:7, 6] = True
        polys = trace_polylines(binary(arr))
        assert len(polys.polylines) == 1
        line = polys.polylines[0]
        assert line[0].tolist() == line[-1].tolist()
        assert line.shape[0] == 21  # 20 ring pixels + repeated start

    def test_l_corner_is_one_chain(self):
        arr = np.zeros((7, 7), dtype=bool)
        arr[1:6, 1] = True
        arr[5, 1:6] = True
        polys = trace_polylines(binary(arr))
        assert len(polys.polylines) == 1
        assert polys.polylines[0].shape[0] == 9

    def test_coverage_of_skeleton_pixels(self):
        for fg in random_blobs(seed=54, n=10):
            sk = thin(binary(fg))
            # drop isolated pixels, which cannot form polylines
            lab, count = ndimage.label(sk.data, structure=EIGHT)
            for v in range(1, count + 1):
                if (lab == v).sum() == 1:
                    sk.data[lab == v] = False
            polys = trace_polylines(BinaryRaster(sk.data))
            centers = {(x, y) for line in polys.polylines for x, y in map(tuple, line)}
            pixels = {(c + 0.5, r + 0.5) for r, c in zip(*np.nonzero(sk.data))}
            assert centers == pixels

    def test_non_thin_input_rejected(self):
        arr = np.zeros((6, 6), dtype=bool)
        arr[1:5, 1:5] = True
        with pytest.raises(ValidationError):
            trace_polylines(binary(arr))

    def test_deterministic_order(self):
        for fg in random_blobs(seed=55, n=5):
            sk = thin(binary(fg))
            a = trace_polylines(sk)
            b = trace_polylines(sk)
            assert len(a.polylines) == len(b.polylines)
            for la, lb in zip(a.polylines, b.polylines):
                assert np.array_equal(la, lb)


class TestGeoRef:
    def test_identity(self):
        line = np.array([[1.5, 2.5], [3.5, 2.5]])
        from parceltrace.skeletonize import PolylineSet

        p = PolylineSet([line], space="pixel")
        out = apply_georef(p, GeoRef.identity())
        assert np.array_equal(out.polylines[0], line)
        assert out.space == "world"

    def test_gsd_scale_with_y_negated(self):
        from parceltrace.skeletonize import PolylineSet

        p = PolylineSet([np.array([[10.5, 4.5], [11.5, 4.5]])], space="pixel")
        geo = GeoRef(0.72, 0.0, 0.0, -0.72, 0.0, 0.0)
        out = apply_georef(p, geo)
        assert out.polylines[0][0] == pytest.approx([7.56, -3.24])

    def test_translation_only(self):
        from parceltrace.skeletonize import PolylineSet

        line = np.array([[1.5, 2.5], [3.5, 4.5], [3.5, 6.5]])
        p = PolylineSet([line], space="pixel")
        geo = GeoRef(1.0, 0.0, 0.0, 1.0, 100.0, -50.0)
        out = apply_georef(p, geo)
        assert np.allclose(out.polylines[0], line + [100.0, -50.0])

    def test_double_georef_rejected(self):
        from parceltrace.skeletonize import PolylineSet

        p = PolylineSet([np.array([[0.5, 0.5], [1.5, 0.5]])], space="world")
        with pytest.raises(ValidationError):
            apply_georef(p, GeoRef.identity())
