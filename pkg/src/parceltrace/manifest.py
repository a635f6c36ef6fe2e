"""Run manifests: config echo, stage timings, and file digests."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageRecord:
    name: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0
    warnings: list[str] = field(default_factory=list)


@dataclass
class RunManifest:
    config: dict
    version: str
    stages: list[StageRecord] = field(default_factory=list)

    def stage(self, name: str) -> "_StageTimer":
        return _StageTimer(self, name)

    @property
    def warnings(self) -> list[str]:
        return [w for s in self.stages for w in s.warnings]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "stages": [
                {
                    "name": s.name,
                    "inputs": s.inputs,
                    "outputs": s.outputs,
                    "wall_time_s": s.wall_time_s,
                    "warnings": s.warnings,
                }
                for s in self.stages
            ],
            "warnings": self.warnings,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


class _StageTimer:
    """Context manager recording one stage's wall time and file digests."""

    def __init__(self, manifest: RunManifest, name: str):
        self.record = StageRecord(name=name)
        self._manifest = manifest

    def __enter__(self) -> StageRecord:
        self._t0 = time.perf_counter()
        return self.record

    def __exit__(self, exc_type, exc, tb) -> None:
        self.record.wall_time_s = time.perf_counter() - self._t0
        if exc_type is None:
            self._manifest.stages.append(self.record)


def digest_into(record: StageRecord, role: str, *paths: str | Path) -> None:
    """Attach sha256 digests of ``paths`` to a stage record (inputs/outputs)."""
    target = record.inputs if role == "in" else record.outputs
    for p in paths:
        target[str(p)] = sha256_file(p)
