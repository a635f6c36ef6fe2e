"""Zhang-Suen thinning, polyline tracing, and pixel->world mapping.

thin() runs the classic two-subpass parallel thinning until a fixed point:
a foreground pixel is deleted in subpass 1 iff 2 <= B(P) <= 6, A(P) == 1,
P2*P4*P6 == 0 and P4*P6*P8 == 0 (subpass 2 swaps the last two conditions
for P2*P4*P8 and P2*P6*P8), where P2..P9 walk the 8 neighbors clockwise
from north, B counts foreground neighbors and A counts 0->1 transitions in
the cyclic sequence. Rasters carry an implicit one-pixel background frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import CLASS_BOUNDARY, BinaryRaster, ClassMask, GeoRef

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolylineSet:
    """Ordered vertex chains, each an (n, 2) float64 array of (x, y).

    ``space`` tags the coordinate frame: "pixel" (pixel centers at
    half-integers) or "world" (after apply_georef).
    """

    polylines: list[np.ndarray]
    space: str = "pixel"

    def __post_init__(self) -> None:
        if self.space not in ("pixel", "world"):
            raise ValidationError(f"PolylineSet: unknown space {self.space!r}")
        for i, line in enumerate(self.polylines):
            if line.ndim != 2 or line.shape[1] != 2 or line.shape[0] < 2:
                raise ValidationError(f"PolylineSet: polyline {i} needs >= 2 (x, y) vertices")
            if (np.diff(line, axis=0) == 0).all(axis=1).any():
                raise ValidationError(f"PolylineSet: polyline {i} repeats consecutive vertices")

    def vertex_count(self) -> int:
        return int(sum(len(line) for line in self.polylines))


def boundary_mask(mask: ClassMask) -> BinaryRaster:
    """Lift the boundary class of a semantic mask to a binary raster."""
    return BinaryRaster(mask.data == CLASS_BOUNDARY)


def _neighbors(padded: np.ndarray) -> list[np.ndarray]:
    """P2..P9 (N, NE, E, SE, S, SW, W, NW) as uint8 views."""
    return [
        padded[:-2, 1:-1],  # P2 north
        padded[:-2, 2:],    # P3 north-east
        padded[1:-1, 2:],   # P4 east
        padded[2:, 2:],     # P5 south-east
        padded[2:, 1:-1],   # P6 south
        padded[2:, :-2],    # P7 south-west
        padded[1:-1, :-2],  # P8 west
        padded[:-2, :-2],   # P9 north-west
    ]


def _subpass(img: np.ndarray, first: bool) -> tuple[np.ndarray, bool]:
    padded = np.pad(img.astype(np.uint8), 1, mode="constant", constant_values=0)
    n = _neighbors(padded)
    b = sum(x.astype(np.int32) for x in n)
    seq = n + [n[0]]
    a = sum(((seq[i] == 0) & (seq[i + 1] == 1)).astype(np.int32) for i in range(8))
    p2, p4, p6, p8 = n[0], n[2], n[4], n[6]
    if first:
        c3 = p2 * p4 * p6 == 0
        c4 = p4 * p6 * p8 == 0
    else:
        c3 = p2 * p4 * p8 == 0
        c4 = p2 * p6 * p8 == 0
    kill = img & (b >= 2) & (b <= 6) & (a == 1) & c3 & c4
    if not kill.any():
        return img, False
    return img & ~kill, True


def thin(b: BinaryRaster) -> BinaryRaster:
    """Iterative Zhang-Suen thinning to a 1-px skeleton; idempotent."""
    img = b.data.copy()
    changed = True
    while changed:
        img, ch1 = _subpass(img, first=True)
        img, ch2 = _subpass(img, first=False)
        changed = ch1 or ch2
    return BinaryRaster(img)


# ---------------------------------------------------------------------------
# Polyline tracing
# ---------------------------------------------------------------------------

# Clockwise from north; also the deterministic neighbor visiting order.
_CLOCKWISE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _adjacency(img: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Reduced 8-connectivity graph of skeleton pixels.

    A diagonal edge is dropped when either of its two orthogonal corner
    pixels is foreground (the chain already passes through the corner);
    this keeps right-angle turns and ring corners at degree 2.
    """
    h, w = img.shape
    fg = {(r, c) for r, c in zip(*np.nonzero(img))}
    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r, c in fg:
        nbrs = []
        for dr, dc in _CLOCKWISE:
            q = (r + dr, c + dc)
            if q not in fg:
                continue
            if dr != 0 and dc != 0 and ((r, c + dc) in fg or (r + dr, c) in fg):
                continue
            nbrs.append(q)
        adj[(r, c)] = nbrs
    return adj


def _pixel_center(p: tuple[int, int]) -> tuple[float, float]:
    return (p[1] + 0.5, p[0] + 0.5)  # (x, y) = (col+.5, row+.5)


def trace_polylines(sk: BinaryRaster) -> PolylineSet:
    """Trace a thin skeleton into maximal chains between endpoints/junctions.

    Nodes are pixels of degree != 2 plus one designated pixel per pure
    cycle; traversal visits starting nodes in scan order and neighbors
    clockwise from north, so output order is deterministic. Closed rings
    repeat their first vertex at the end. Isolated single pixels cannot
    form a polyline and are dropped with a warning.
    """
    if thin(sk).data.tobytes() != sk.data.tobytes():
        raise ValidationError("trace_polylines: input is not thin (thin() changes it)")
    img = sk.data
    adj = _adjacency(img)
    used: set[frozenset] = set()
    lines: list[list[tuple[float, float]]] = []

    def walk(start, first_step):
        chain = [start, first_step]
        used.add(frozenset((start, first_step)))
        prev, cur = start, first_step
        while len(adj[cur]) == 2 and cur != start:
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            used.add(frozenset((cur, nxt)))
            chain.append(nxt)
            prev, cur = cur, nxt
        return chain

    order = sorted(adj.keys())
    nodes = [p for p in order if len(adj[p]) != 2]
    for node in nodes:
        if not adj[node]:
            logger.warning("dropping isolated skeleton pixel at (row=%d, col=%d)", node[0], node[1])
            continue
        for nb in adj[node]:
            if frozenset((node, nb)) in used:
                continue
            lines.append([_pixel_center(p) for p in walk(node, nb)])

    # Pure cycles: every remaining pixel has degree 2 and untouched edges.
    for p in order:
        if len(adj[p]) != 2:
            continue
        untouched = [q for q in adj[p] if frozenset((p, q)) not in used]
        if len(untouched) == 2:
            chain = walk(p, untouched[0])
            # walk stops when it returns to p; close the ring explicitly
            if chain[-1] != p:
                chain.append(p)
                used.add(frozenset((chain[-2], p)))
            lines.append([_pixel_center(q) for q in chain])

    polylines = [np.array(line, dtype=np.float64) for line in lines]
    return PolylineSet(polylines=polylines, space="pixel")


def apply_georef(p: PolylineSet, geo: GeoRef) -> PolylineSet:
    """Map pixel-space polylines to world coordinates via the affine."""
    if p.space != "pixel":
        raise ValidationError("apply_georef: polylines are already in world space")
    out = []
    for line in p.polylines:
        x, y = line[:, 0], line[:, 1]
        wx = geo.a * x + geo.c * y + geo.x0
        wy = geo.b * x + geo.d * y + geo.y0
        out.append(np.stack([wx, wy], axis=1))
    return PolylineSet(polylines=out, space="world")


def write_boundary_png(sk: BinaryRaster, path) -> None:
    """1-px boundary raster as PNG, foreground 255 on black."""
    from .codecs import save_binary_png

    save_binary_png(sk, path)
