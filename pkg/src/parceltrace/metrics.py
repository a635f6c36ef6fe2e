"""Buffered boundary evaluation.

The reference boundary is widened to the pixel set within Euclidean
distance BF/2 of any reference pixel (BF is the total band width); the
detected boundary stays unbuffered. Counts against the buffered reference
give precision = TP/(TP+FP) and a band-normalized recall
BF*TP/(TP+FN), clamped to 1 by default; the F-score is the harmonic mean
using the clamped recall.

Admissible buffer widths follow the half-width rule BF*GSD/2 <= limit with
a 2.4 m limit for rural zones and 0.3 m for urban ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import BinaryRaster

ZONE_LIMITS_M = {"rural": 2.4, "urban": 0.3}


@dataclass(frozen=True)
class EvalConfig:
    bf: int = 3
    zone: str = "rural"
    gsd: float = 0.72
    clamp_recall: bool = True

    def __post_init__(self) -> None:
        if self.bf < 1 or int(self.bf) != self.bf:
            raise ValidationError(f"EvalConfig: BF must be an integer >= 1, got {self.bf}")
        if self.zone not in ZONE_LIMITS_M:
            raise ValidationError(f"EvalConfig: unknown zone {self.zone!r}")
        if self.gsd <= 0:
            raise ValidationError("EvalConfig: GSD must be positive")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalResult:
    counts: ConfusionCounts
    precision: float
    recall: float
    raw_recall: float
    fscore: float

    def report_line(self) -> str:
        return (
            f"precision={self.precision:.6f}, recall={self.recall:.6f}, "
            f"raw_recall={self.raw_recall:.6f}, fscore={self.fscore:.6f}, "
            f"TP={self.counts.tp}, FP={self.counts.fp}, FN={self.counts.fn}"
        )

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "raw_recall": self.raw_recall,
            "fscore": self.fscore,
            "TP": self.counts.tp,
            "FP": self.counts.fp,
            "FN": self.counts.fn,
        }


def disk_offsets(bf: int) -> list[tuple[int, int]]:
    """Integer offsets within Euclidean distance BF/2 (4*(dr^2+dc^2) <= BF^2)."""
    r = bf // 2 + 1
    offs = []
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            if 4 * (dr * dr + dc * dc) <= bf * bf:
                offs.append((dr, dc))
    return offs


def buffer_reference(ref: BinaryRaster, bf: int) -> BinaryRaster:
    """Pixels whose center lies within BF/2 of a reference pixel center."""
    if bf < 1:
        raise ValidationError(f"buffer_reference: BF must be >= 1, got {bf}")
    src = ref.data
    h, w = src.shape
    out = np.zeros_like(src)
    for dr, dc in disk_offsets(bf):
        rs_src = slice(max(0, -dr), min(h, h - dr))
        cs_src = slice(max(0, -dc), min(w, w - dc))
        rs_dst = slice(max(0, dr), min(h, h + dr))
        cs_dst = slice(max(0, dc), min(w, w + dc))
        out[rs_dst, cs_dst] |= src[rs_src, cs_src]
    return BinaryRaster(out)


def evaluate(detected: BinaryRaster, ref: BinaryRaster, cfg: EvalConfig) -> EvalResult:
    """Score a 1-px detected boundary against a 1-px reference boundary."""
    if detected.data.shape != ref.data.shape:
        raise ValidationError(
            f"evaluate: size mismatch, detected {detected.data.shape} vs reference {ref.data.shape}"
        )
    buffered = buffer_reference(ref, cfg.bf).data
    det = detected.data
    tp = int(np.count_nonzero(det & buffered))
    fp = int(np.count_nonzero(det & ~buffered))
    fn = int(np.count_nonzero(buffered & ~det))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    raw_recall = cfg.bf * tp / (tp + fn) if (tp + fn) > 0 else 0.0
    recall = min(raw_recall, 1.0) if cfg.clamp_recall else raw_recall
    fscore = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return EvalResult(
        counts=ConfusionCounts(tp=tp, fp=fp, fn=fn),
        precision=precision,
        recall=recall,
        raw_recall=raw_recall,
        fscore=fscore,
    )


@dataclass(frozen=True)
class BufferChoice:
    bf: int
    half_width_m: float
    half_width_cm: float  # rounded to 2 decimals for reporting


def select_buffers(gsd: float, zone: str) -> list[BufferChoice]:
    """All integer BF >= 1 whose half-width BF*GSD/2 stays within the zone limit."""
    if gsd <= 0:
        raise ValidationError("select_buffers: GSD must be positive")
    if zone not in ZONE_LIMITS_M:
        raise ValidationError(f"select_buffers: unknown zone {zone!r}")
    limit = ZONE_LIMITS_M[zone]
    choices = []
    bf = 1
    while bf * gsd / 2 <= limit:
        half_m = bf * gsd / 2
        choices.append(BufferChoice(bf=bf, half_width_m=half_m, half_width_cm=round(half_m * 100, 2)))
        bf += 1
    return choices
