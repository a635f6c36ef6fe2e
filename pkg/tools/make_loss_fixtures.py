#!/usr/bin/env python3
"""Regenerate the shared loss fixtures under fixtures/losses/.

Each case is a (prediction, target) CBT pair plus the expected scalar for
every loss kind at default parameters, computed from the float32 tensors as
stored on disk. The trainer consumes the same files, so both components
score identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from parceltrace.codecs import read_cbt, write_cbt
from parceltrace.losses import LossConfig, LossKind, OneHotTarget, loss_eval, softmax
from parceltrace.raster import ProbTensor

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "losses"

CASES = {
    "case01_uniformish": dict(seed=1001, h=8, w=8, perfect=False),
    "case02_perfect": dict(seed=1002, h=4, w=4, perfect=True),
    "case03_larger": dict(seed=1003, h=16, w=16, perfect=False),
}


def one_hot(classes: np.ndarray) -> np.ndarray:
    out = np.zeros(classes.shape + (3,), dtype=np.float32)
    for c in range(3):
        out[:, :, c] = classes == c
    return out


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    expected: dict[str, dict[str, float]] = {}
    for name, spec in CASES.items():
        rng = np.random.default_rng(spec["seed"])
        target = one_hot(rng.integers(0, 3, size=(spec["h"], spec["w"])))
        if spec["perfect"]:
            pred = target.copy()
        else:
            logits = rng.uniform(-2, 2, size=target.shape)
            pred = softmax(ProbTensor(logits, probabilities=False)).data.astype(np.float32)
        pred_path = FIXTURE_DIR / f"{name}_pred.cbt"
        target_path = FIXTURE_DIR / f"{name}_target.cbt"
        write_cbt(ProbTensor(pred, probabilities=True), pred_path)
        write_cbt(ProbTensor(target, probabilities=True), target_path)

        # Score the files as stored (float32), not the float64 intermediates.
        p = read_cbt(pred_path)
        g = OneHotTarget(read_cbt(target_path).data.astype(np.uint8))
        expected[name] = {
            kind.value: loss_eval(p, g, LossConfig(kind=kind)) for kind in LossKind
        }
    out = FIXTURE_DIR / "expected_losses.json"
    out.write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(CASES)} cases to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
