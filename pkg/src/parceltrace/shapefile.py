"""Minimal ESRI Shapefile (PolyLine) writer/reader plus GeoJSON export.

Writes the .shp/.shx/.dbf triplet: 100-byte header with file code 9994
(big-endian) and little-endian bounding-box doubles, one single-part
type-3 record per polyline, and a one-column numeric "ID" dBASE table.
The reader exists for lossless round-trip verification.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CodecError, ValidationError
from .skeletonize import PolylineSet

SHAPE_POLYLINE = 3

# Fixed dBASE update stamp: outputs must be byte-identical across runs.
_DBF_DATE = (100, 1, 1)  # 2000-01-01, year stored as offset from 1900


def _bbox(lines: list[np.ndarray]) -> tuple[float, float, float, float]:
    if not lines:
        return (0.0, 0.0, 0.0, 0.0)
    xs = np.concatenate([ln[:, 0] for ln in lines])
    ys = np.concatenate([ln[:, 1] for ln in lines])
    return (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))


def _header(file_length_words: int, bbox: tuple[float, float, float, float]) -> bytes:
    head = struct.pack(">6i", 9994, 0, 0, 0, 0, 0)
    head += struct.pack(">i", file_length_words)
    head += struct.pack("<2i", 1000, SHAPE_POLYLINE)
    head += struct.pack("<4d", *bbox)
    head += struct.pack("<4d", 0.0, 0.0, 0.0, 0.0)  # Z and M ranges unused
    return head


def write_shapefile(p: PolylineSet, basepath: str | Path) -> None:
    """Emit ``basepath``.shp/.shx/.dbf for a polyline set (records in order)."""
    base = Path(basepath)
    lines = p.polylines
    bbox = _bbox(lines)

    records = []
    for line in lines:
        n = line.shape[0]
        content = struct.pack("<i", SHAPE_POLYLINE)
        content += struct.pack(
            "<4d",
            float(line[:, 0].min()),
            float(line[:, 1].min()),
            float(line[:, 0].max()),
            float(line[:, 1].max()),
        )
        content += struct.pack("<2i", 1, n)  # numParts, numPoints
        content += struct.pack("<i", 0)      # single part starting at vertex 0
        content += np.ascontiguousarray(line, dtype="<f8").tobytes()
        records.append(content)

    shp_len_words = 50 + sum((8 + len(c)) // 2 for c in records)
    with open(base.with_suffix(".shp"), "wb") as f:
        f.write(_header(shp_len_words, bbox))
        for i, content in enumerate(records, start=1):
            f.write(struct.pack(">2i", i, len(content) // 2))
            f.write(content)

    with open(base.with_suffix(".shx"), "wb") as f:
        f.write(_header(50 + 4 * len(records), bbox))
        offset = 50
        for content in records:
            f.write(struct.pack(">2i", offset, len(content) // 2))
            offset += 4 + len(content) // 2

    _write_dbf(base.with_suffix(".dbf"), len(records))


def _write_dbf(path: Path, count: int) -> None:
    header_len = 32 + 32 + 1  # table header + one field descriptor + terminator
    record_len = 1 + 10       # deletion flag + N(10,0) field
    with open(path, "wb") as f:
        f.write(struct.pack("<BBBBLHH20x", 3, *_DBF_DATE, count, header_len, record_len))
        f.write(struct.pack("<11sc4xBB14x", b"ID", b"N", 10, 0))
        f.write(b"\x0d")
        for i in range(1, count + 1):
            f.write(b" " + str(i).rjust(10).encode("ascii"))
        f.write(b"\x1a")


def read_shapefile(basepath: str | Path, space: str = "pixel") -> PolylineSet:
    """Parse ``basepath``.shp back into a polyline set (vertices bit-exact)."""
    base = Path(basepath)
    blob = base.with_suffix(".shp").read_bytes()
    if len(blob) < 100:
        raise CodecError(f"{base}: shapefile shorter than its 100-byte header")
    code = struct.unpack(">i", blob[:4])[0]
    if code != 9994:
        raise CodecError(f"{base}: bad file code {code}")
    length_words = struct.unpack(">i", blob[24:28])[0]
    if length_words * 2 != len(blob):
        raise CodecError(f"{base}: header length {length_words * 2} != file size {len(blob)}")
    version, shape_type = struct.unpack("<2i", blob[28:36])
    if version != 1000:
        raise CodecError(f"{base}: unsupported shapefile version {version}")
    if shape_type != SHAPE_POLYLINE:
        raise CodecError(f"{base}: shape type {shape_type} is not PolyLine")

    lines: list[np.ndarray] = []
    pos = 100
    expected_num = 1
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise CodecError(f"{base}: truncated record header at byte {pos}")
        rec_num, content_words = struct.unpack(">2i", blob[pos:pos + 8])
        if rec_num != expected_num:
            raise CodecError(f"{base}: record {rec_num} out of order (expected {expected_num})")
        pos += 8
        end = pos + content_words * 2
        if end > len(blob):
            raise CodecError(f"{base}: truncated record {rec_num}")
        rtype = struct.unpack("<i", blob[pos:pos + 4])[0]
        if rtype != SHAPE_POLYLINE:
            raise CodecError(f"{base}: record {rec_num} has shape type {rtype}")
        nparts, npoints = struct.unpack("<2i", blob[pos + 36:pos + 44])
        if nparts != 1:
            raise CodecError(f"{base}: record {rec_num} has {nparts} parts (writer emits 1)")
        pts_off = pos + 44 + 4 * nparts
        if pts_off + 16 * npoints != end:
            raise CodecError(f"{base}: record {rec_num} point block size mismatch")
        pts = np.frombuffer(blob[pts_off:pts_off + 16 * npoints], dtype="<f8").reshape(npoints, 2)
        lines.append(pts.astype(np.float64))
        pos = end
        expected_num += 1
    return PolylineSet(polylines=lines, space=space)


def write_geojson(p: PolylineSet, path: str | Path) -> None:
    """FeatureCollection of LineString features with an "id" property."""
    features = []
    for i, line in enumerate(p.polylines, start=1):
        features.append(
            {
                "type": "Feature",
                "properties": {"id": i},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[float(x), float(y)] for x, y in line],
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, sort_keys=True))
