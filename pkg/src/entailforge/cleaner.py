"""Synthetic-set cleaning: label alignment, then redundancy elimination.

An example survives when the reference classifier's argmax matches its
intended label AND its normalized (premise, hypothesis) pair does not occur
in the original corpus. Alignment is checked first, so an example failing
both criteria counts as an alignment removal. Dedup is case-sensitive:
only Unicode/whitespace canonicalization is applied.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends import BackendConfig, classify
from .corpus import Dataset

_WS_RUN = re.compile(r"\s+")


def normalize_for_dedup(text: str) -> str:
    """NFC, trim, collapse internal whitespace runs; case preserved."""
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", text)).strip()


def pair_digest(premise: str, hypothesis: str) -> bytes:
    return hashlib.sha256(
        normalize_for_dedup(premise).encode("utf-8")
        + b"\x1f"
        + normalize_for_dedup(hypothesis).encode("utf-8")
    ).digest()


@dataclass(slots=True)
class DedupIndex:
    """Digest set over normalized (premise, hypothesis) pairs."""

    digests: set[bytes]

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair_digest(*pair) in self.digests

    def __len__(self) -> int:
        return len(self.digests)


def build_dedup_index(d: Dataset) -> DedupIndex:
    return DedupIndex({pair_digest(ex.premise, ex.hypothesis) for ex in d})


@dataclass(frozen=True, slots=True)
class FilterReport:
    total: int
    removed_alignment: int
    removed_duplicate: int
    retained: int

    def __post_init__(self) -> None:
        if self.removed_alignment + self.removed_duplicate + self.retained != self.total:
            raise ValueError(
                f"filter report does not sum: {self.removed_alignment} + "
                f"{self.removed_duplicate} + {self.retained} != {self.total}"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "total": self.total,
                "removed_alignment": self.removed_alignment,
                "removed_duplicate": self.removed_duplicate,
                "retained": self.retained,
            }
        )


def clean(
    syn: Dataset,
    original: Dataset,
    classifier_cfg: BackendConfig,
) -> tuple[Dataset, FilterReport]:
    """Filter the synthetic set against the original corpus.

    Classification runs with the backend's bounded concurrency; retained
    examples keep their input order. Counts in the report are exact.
    """
    index = build_dedup_index(original)

    def predicted(ex) -> str:
        return classify(classifier_cfg, ex.premise, ex.hypothesis).argmax().value

    with ThreadPoolExecutor(max_workers=classifier_cfg.max_in_flight) as pool:
        predictions = list(pool.map(predicted, syn.examples))

    kept = []
    removed_alignment = 0
    removed_duplicate = 0
    for ex, pred in zip(syn.examples, predictions):
        if pred != ex.label.value:
            removed_alignment += 1
        elif (ex.premise, ex.hypothesis) in index:
            removed_duplicate += 1
        else:
            kept.append(ex)
    report = FilterReport(
        total=len(syn),
        removed_alignment=removed_alignment,
        removed_duplicate=removed_duplicate,
        retained=len(kept),
    )
    return Dataset(kept, name=f"{syn.name}.clean"), report
