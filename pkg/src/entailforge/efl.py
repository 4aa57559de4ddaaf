"""Label-embedded (EFL) reformulation of NLI examples and its inverse.

The canonical hypothesis template is plain concatenation with no escaping
and no article correction:

    The hypothesis '<h>' is a <label> of the premise.

Gold mode emits one instance per example with its gold label as target;
expanded mode emits three per example (one per label) with a binary target
that is true only for the gold label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import LABELS, Dataset, Label
from .errors import DataError, TemplateMismatch

TEMPLATE_PREFIX = "The hypothesis '"
TEMPLATE_SUFFIX = " of the premise."
TEMPLATE_JOINER = "' is a "

EFL_MODES = ("gold", "expanded")

# Binary targets in expanded mode, class indices 0 and 1.
BINARY_CLASSES = ("true", "false")


@dataclass(frozen=True, slots=True)
class EflExample:
    origin_id: str
    premise: str
    efl_hypothesis: str
    embedded_label: Label
    # gold-mode: a Label value; expanded-mode: "true" | "false"
    target: str

    def to_record(self) -> dict:
        return {
            "origin_id": self.origin_id,
            "premise": self.premise,
            "efl_hypothesis": self.efl_hypothesis,
            "embedded_label": self.embedded_label.value,
            "target": self.target,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "EflExample":
        try:
            return cls(
                origin_id=str(obj["origin_id"]),
                premise=str(obj["premise"]),
                efl_hypothesis=str(obj["efl_hypothesis"]),
                embedded_label=Label.parse(str(obj["embedded_label"])),
                target=str(obj["target"]),
            )
        except KeyError as e:
            raise DataError(f"EFL record missing key {e}") from None


def construct_efl_hypothesis(h: str, label: Label) -> str:
    if not h.strip():
        raise DataError("cannot embed a label into an empty hypothesis")
    return f"{TEMPLATE_PREFIX}{h}{TEMPLATE_JOINER}{label.value}{TEMPLATE_SUFFIX}"


def parse_efl_hypothesis(h_efl: str) -> tuple[str, Label]:
    """Exact inverse of construct_efl_hypothesis.

    Anchors on the outermost fixed prefix and suffix, then matches the
    rightmost label segment, so hypotheses containing template fragments
    still round-trip.
    """
    if not h_efl.startswith(TEMPLATE_PREFIX) or not h_efl.endswith(TEMPLATE_SUFFIX):
        raise TemplateMismatch(f"not a label-embedded hypothesis: {h_efl!r}")
    core = h_efl[len(TEMPLATE_PREFIX): -len(TEMPLATE_SUFFIX)]
    for label in LABELS:
        tail = f"{TEMPLATE_JOINER}{label.value}"
        if core.endswith(tail):
            return core[: -len(tail)], label
    raise TemplateMismatch(f"no label segment at the end of {h_efl!r}")


def convert_gold(d: Dataset) -> list[EflExample]:
    """One instance per example; target is the gold label."""
    return [
        EflExample(
            origin_id=ex.id,
            premise=ex.premise,
            efl_hypothesis=construct_efl_hypothesis(ex.hypothesis, ex.label),
            embedded_label=ex.label,
            target=ex.label.value,
        )
        for ex in d
    ]


def convert_expanded(d: Dataset) -> list[EflExample]:
    """Three instances per example, binary target true only for gold."""
    out: list[EflExample] = []
    for ex in d:
        for label in LABELS:
            out.append(
                EflExample(
                    origin_id=ex.id,
                    premise=ex.premise,
                    efl_hypothesis=construct_efl_hypothesis(ex.hypothesis, label),
                    embedded_label=label,
                    target="true" if label is ex.label else "false",
                )
            )
    return out


def convert(d: Dataset, mode: str) -> list[EflExample]:
    if mode == "gold":
        return convert_gold(d)
    if mode == "expanded":
        return convert_expanded(d)
    raise DataError(f"unknown EFL mode: {mode!r}")


def write_efl(examples: Iterable[EflExample], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        for ex in examples:
            f.write(
                json.dumps(
                    ex.to_record(), ensure_ascii=False, sort_keys=True,
                    separators=(",", ":"),
                ).encode("utf-8")
            )
            f.write(b"\n")


def load_efl(path: str | Path) -> list[EflExample]:
    path = Path(path)
    out: list[EflExample] = []
    with path.open("r", encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{n}: {e}") from None
            out.append(EflExample.from_record(obj))
    return out
