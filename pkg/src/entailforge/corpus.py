"""NLI dataset model: load, validate, fingerprint, split, and write.

Two line-oriented JSON formats are supported:

* ``native``: ``{"id","premise","hypothesis","label","source"}``
* ``snli``:   ``{"gold_label","sentence1","sentence2","pairID"}`` (extra keys
  ignored; records with gold_label ``"-"`` are skipped, not errors)

All text is NFC-normalized and whitespace-trimmed at parse time so that
downstream equality (dedup, fingerprints) is well defined.
"""

from __future__ import annotations

import enum
import hashlib
import json
import unicodedata
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DataError


class Label(enum.Enum):
    """The three-way relation of a hypothesis to its premise.

    Order is canonical: class indices and argmax tie-breaks follow it.
    """

    ENTAILMENT = "entailment"
    CONTRADICTION = "contradiction"
    NEUTRAL = "neutral"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, s: str) -> "Label":
        try:
            return cls(s)
        except ValueError:
            raise DataError(f"unknown label string: {s!r}") from None


LABELS: tuple[Label, ...] = (Label.ENTAILMENT, Label.CONTRADICTION, Label.NEUTRAL)
LABEL_INDEX: dict[Label, int] = {lab: i for i, lab in enumerate(LABELS)}

SOURCES = ("human", "synthetic")

# SNLI's marker for records without annotator consensus.
UNLABELED_MARKER = "-"


def canonical_text(s: str) -> str:
    """NFC-normalize and strip leading/trailing whitespace."""
    return unicodedata.normalize("NFC", s).strip()


@dataclass(frozen=True, slots=True)
class NliExample:
    id: str
    premise: str
    hypothesis: str
    label: Label
    source: str = "human"

    def __post_init__(self) -> None:
        if not self.premise.strip():
            raise DataError(f"example {self.id!r}: empty premise")
        if not self.hypothesis.strip():
            raise DataError(f"example {self.id!r}: empty hypothesis")
        if self.source not in SOURCES:
            raise DataError(f"example {self.id!r}: unknown source {self.source!r}")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "premise": self.premise,
            "hypothesis": self.hypothesis,
            "label": self.label.value,
            "source": self.source,
        }


@dataclass(slots=True)
class Dataset:
    """Ordered, id-unique sequence of examples. Order is load/write stable."""

    examples: list[NliExample] = field(default_factory=list)
    name: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise DataError(f"duplicate example id: {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[NliExample]:
        return iter(self.examples)

    def __getitem__(self, i: int) -> NliExample:
        return self.examples[i]

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]


@dataclass(frozen=True, slots=True)
class SplitSpec:
    """Generation/few-shot split: |gen| = floor(fraction * n)."""

    generation_fraction: Fraction = Fraction(95, 100)
    seed: int = 0

    def __post_init__(self) -> None:
        f = self.generation_fraction
        if not (0 < f < 1):
            raise ConfigError(f"generation_fraction must be in (0,1), got {f}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")


def _canonical_record_bytes(ex: NliExample) -> bytes:
    # Sorted keys + compact separators: the canonical serialized form used by
    # both write_dataset and fingerprint.
    return json.dumps(
        ex.to_record(), ensure_ascii=False, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")


def parse_record(line: str, format: str, line_no: int | None = None) -> NliExample | None:
    """Parse one record in the stated format.

    Returns ``None`` (skip) for SNLI records whose gold label is the
    unlabeled marker. Raises DataError on malformed input.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed record: {e}") from None
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")

    if format == "native":
        try:
            raw_id = obj["id"]
            premise = obj["premise"]
            hypothesis = obj["hypothesis"]
            label_s = obj["label"]
            source = obj["source"]
        except KeyError as e:
            raise DataError(f"native record missing key {e}") from None
        return NliExample(
            id=str(raw_id),
            premise=canonical_text(str(premise)),
            hypothesis=canonical_text(str(hypothesis)),
            label=Label.parse(str(label_s)),
            source=str(source),
        )

    if format == "snli":
        label_s = obj.get("gold_label")
        if label_s is None:
            raise DataError("snli record missing gold_label")
        if label_s == UNLABELED_MARKER:
            return None
        pair_id = obj.get("pairID")
        ex_id = str(pair_id) if pair_id else f"line:{line_no if line_no is not None else 0}"
        return NliExample(
            id=ex_id,
            premise=canonical_text(str(obj.get("sentence1", ""))),
            hypothesis=canonical_text(str(obj.get("sentence2", ""))),
            label=Label.parse(str(label_s)),
            source="human",
        )

    raise ConfigError(f"unknown dataset format: {format!r}")


def load_dataset(path: str | Path, format: str = "native", name: str = "") -> Dataset:
    path = Path(path)
    examples: list[NliExample] = []
    with path.open("r", encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                ex = parse_record(line, format, line_no=n)
            except DataError as e:
                raise DataError(f"{path}:{n}: {e}") from None
            if ex is not None:
                examples.append(ex)
    return Dataset(examples, name=name or path.stem)


def write_dataset(d: Dataset | Iterable[NliExample], path: str | Path) -> None:
    """Write in canonical native form; byte-stable for equal datasets."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    examples = d.examples if isinstance(d, Dataset) else list(d)
    with path.open("wb") as f:
        for ex in examples:
            f.write(_canonical_record_bytes(ex))
            f.write(b"\n")


def fingerprint(d: Dataset | Iterable[NliExample]) -> str:
    """SHA-256 hex digest over the canonical serialized examples.

    The empty dataset hashes to the digest of the empty byte string.
    """
    h = hashlib.sha256()
    examples = d.examples if isinstance(d, Dataset) else d
    for ex in examples:
        h.update(_canonical_record_bytes(ex))
        h.update(b"\n")
    return h.hexdigest()


def split_dataset(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint (generation, few-shot) partition of ``d``.

    Membership comes from a seeded index permutation with a prefix cut of
    size floor(fraction * n); each side preserves the input order. Pure
    function of (dataset order, spec).
    """
    n = len(d)
    if n < 2:
        raise ConfigError(f"dataset too small to split: {n} examples")
    n_gen = (spec.generation_fraction * n).__floor__()
    if n_gen < 1 or n_gen > n - 1:
        raise ConfigError(
            f"fraction {spec.generation_fraction} leaves an empty side for n={n}"
        )
    perm = np.random.Generator(np.random.PCG64(spec.seed)).permutation(n)
    gen_idx = np.sort(perm[:n_gen])
    few_idx = np.sort(perm[n_gen:])
    gen = Dataset([d.examples[i] for i in gen_idx], name=f"{d.name}.gen")
    few = Dataset([d.examples[i] for i in few_idx], name=f"{d.name}.few")
    return gen, few


def parse_fraction(value: object) -> Fraction:
    """Accept 0.95, "0.95", "95/100", or [95, 100] as an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/", 1)
        return Fraction(int(num), int(den))
    if isinstance(value, (int, float, str)):
        return Fraction(str(value))
    raise ConfigError(f"cannot parse fraction from {value!r}")
