"""Scoring a predictor against gold labels: accuracy, confusion, per-class.

All counting is integer-exact; accuracy is the diagonal sum over n. Reports
are order-independent under dataset permutation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

from .corpus import Dataset, Label
from .errors import DataError

TERNARY = tuple(lab.value for lab in Label)


@dataclass(frozen=True, slots=True)
class EvalReport:
    n: int
    accuracy: float
    classes: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]  # [gold][predicted]
    per_class: dict[str, dict[str, float]]  # precision / recall / f1

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "classes": list(self.classes),
            "confusion": [list(row) for row in self.confusion],
            "per_class": self.per_class,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def macro_f1(self) -> float:
        return sum(m["f1"] for m in self.per_class.values()) / len(self.classes)


def _safe_div(num: int, den: int) -> float:
    # Undefined precision/recall counts as 0 by convention.
    return num / den if den else 0.0


def score(
    golds: Sequence[str], preds: Sequence[str], classes: Sequence[str] = TERNARY
) -> EvalReport:
    if len(golds) != len(preds):
        raise DataError("gold and prediction sequences differ in length")
    if not golds:
        raise DataError("cannot score an empty dataset")
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    confusion = [[0] * k for _ in range(k)]
    for g, p in zip(golds, preds):
        if g not in index or p not in index:
            raise DataError(f"label outside class set: gold={g!r} pred={p!r}")
        confusion[index[g]][index[p]] += 1
    diagonal = sum(confusion[i][i] for i in range(k))
    per_class: dict[str, dict[str, float]] = {}
    for i, c in enumerate(classes):
        tp = confusion[i][i]
        gold_total = sum(confusion[i])
        pred_total = sum(confusion[r][i] for r in range(k))
        precision = _safe_div(tp, pred_total)
        recall = _safe_div(tp, gold_total)
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class[c] = {"precision": precision, "recall": recall, "f1": f1}
    return EvalReport(
        n=len(golds),
        accuracy=diagonal / len(golds),
        classes=tuple(classes),
        confusion=tuple(tuple(row) for row in confusion),
        per_class=per_class,
    )


def evaluate(predict_fn: Callable[..., Label | str], d: Dataset) -> EvalReport:
    """Score ``predict_fn(premise, hypothesis)`` against gold labels.

    The predictor is invoked once per example; a predictor exception aborts
    with the offending example id.
    """
    if len(d) < 1:
        raise DataError("cannot evaluate on an empty dataset")
    golds: list[str] = []
    preds: list[str] = []
    for ex in d:
        try:
            pred = predict_fn(ex.premise, ex.hypothesis)
        except Exception as e:
            raise DataError(f"predictor failed on example {ex.id!r}: {e}") from e
        preds.append(pred.value if isinstance(pred, Label) else str(pred))
        golds.append(ex.label.value)
    return score(golds, preds)


@dataclass(frozen=True, slots=True)
class ComparisonTable:
    text: str
    rows: list[dict]

    def to_json(self) -> str:
        return json.dumps(self.rows, sort_keys=True)


def compare(reports: Sequence[tuple[str, EvalReport]]) -> ComparisonTable:
    """Aligned table sorted by accuracy descending, ties by name ascending."""
    if not reports:
        raise DataError("compare needs at least one report")
    ordered = sorted(reports, key=lambda item: (-item[1].accuracy, item[0]))
    rows = [
        {
            "name": name,
            "n": rep.n,
            "accuracy": rep.accuracy,
            "macro_f1": rep.macro_f1,
        }
        for name, rep in ordered
    ]
    name_width = max(len("name"), max(len(r["name"]) for r in rows))
    n_width = max(len("n"), max(len(str(r["n"])) for r in rows))
    lines = [f"{'name':<{name_width}}  {'n':>{n_width}}  accuracy  macro_f1"]
    for r in rows:
        lines.append(
            f"{r['name']:<{name_width}}  {r['n']:>{n_width}}  "
            f"{r['accuracy']:>8.4f}  {r['macro_f1']:>8.4f}"
        )
    return ComparisonTable(text="\n".join(lines) + "\n", rows=rows)
