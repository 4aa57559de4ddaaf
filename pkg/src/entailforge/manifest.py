"""Run manifests: machine-readable records sufficient to reproduce a run.

Each stage appends one record to ``manifest.jsonl`` in the work dir. The
chained pipeline digest covers only deterministic content (stage name,
output fingerprints, counts) so that identical configurations reproduce
identical digests regardless of wall time or host.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_NAME = "manifest.jsonl"


@dataclass(slots=True)
class StageManifest:
    stage: str
    config_digest: str
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    wall_time_s: float = 0.0
    timestamp: float = field(default_factory=time.time)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "counts": self.counts,
            "wall_time_s": self.wall_time_s,
            "timestamp": self.timestamp,
        }

    def deterministic_dict(self) -> dict:
        return {"stage": self.stage, "outputs": self.outputs, "counts": self.counts}


def fingerprint_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def append_manifest(work_dir: str | Path, record: StageManifest) -> None:
    path = Path(work_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_manifests(work_dir: str | Path) -> list[dict]:
    path = Path(work_dir) / MANIFEST_NAME
    if not path.exists():
        return []
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out


def stage_chain_digest(stages: list[StageManifest]) -> str:
    """Digest over the ordered deterministic stage records."""
    blob = json.dumps(
        [s.deterministic_dict() for s in stages],
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
