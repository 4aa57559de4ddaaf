"""Few-shot exemplar sampling and generation-prompt rendering.

The rendered prompt layout is frozen byte-for-byte; ``docs/prompt_template.txt``
holds the golden rendering and every implementation must match it. Exemplar
sampling is counter-based per item so that results are identical under any
parallel execution order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Label, NliExample, canonical_text
from .errors import ConfigError, EmptyGeneration

PROMPT_HEADER = (
    "Task: Generate a concise hypothesis corresponding to the given premise "
    "and label, in accordance with the SNLI task.\n"
    "\n"
    "Labels: 'entailment', 'contradiction', 'neutral'.\n"
    "\n"
    "Guidelines:\n"
    "- Entailment: The hypothesis logically follows from the premise.\n"
    "- Contradiction: The hypothesis contradicts the premise.\n"
    "- Neutral: The hypothesis is unrelated to the premise.\n"
    "\n"
    "Examples:\n"
)

# The trailing cue line is deliberately unterminated: generators continue it.
HYPOTHESIS_CUE = "Hypothesis:"


@dataclass(frozen=True, slots=True)
class Prompt:
    text: str
    target_premise: str
    target_label: Label
    exemplar_ids: tuple[str, str]


def _label_title(label: Label) -> str:
    return label.value.capitalize()


def _exemplar_block(ex: NliExample) -> str:
    return (
        f"\nLabel: {_label_title(ex.label)}\n"
        f"Premise: {ex.premise}\n"
        f"Hypothesis: {ex.hypothesis}\n"
    )


def build_prompt(premise: str, label: Label, e1: NliExample, e2: NliExample) -> Prompt:
    """Render the generation prompt for (premise, label) with two exemplars.

    Purely positional: both exemplar blocks are rendered even when their
    content coincides. Output is byte-identical across runs and platforms.
    """
    text = (
        PROMPT_HEADER
        + _exemplar_block(e1)
        + _exemplar_block(e2)
        + "\nYour Task:\n"
        + f"\nLabel: {_label_title(label)}\n"
        + f"Premise: {premise}\n"
        + HYPOTHESIS_CUE
    )
    return Prompt(
        text=text,
        target_premise=premise,
        target_label=label,
        exemplar_ids=(e1.id, e2.id),
    )


def _pair_rng(seed: int, item_index: int) -> np.random.Generator:
    # Counter-based stream: the key mixes (seed, item_index) through SHA-256,
    # so sampling for item k never depends on how many items ran before it.
    digest = hashlib.sha256(
        b"exemplar-pair\x00"
        + int(seed).to_bytes(8, "big")
        + int(item_index).to_bytes(8, "big")
    ).digest()
    key = int.from_bytes(digest[:16], "big")
    return np.random.Generator(np.random.Philox(key=key))


def sample_exemplars(
    few: Dataset, seed: int, item_index: int
) -> tuple[NliExample, NliExample]:
    """Two distinct exemplars, uniform over unordered pairs.

    Deterministic function of (few, seed, item_index).
    """
    n = len(few)
    if n < 2:
        raise ConfigError(f"few-shot set needs at least 2 examples, got {n}")
    rng = _pair_rng(seed, item_index)
    i, j = rng.choice(n, size=2, replace=False)
    return few.examples[int(i)], few.examples[int(j)]


def parse_generation(raw: str) -> str:
    """First non-empty line of generator output, cue tag stripped, NFC.

    Raises EmptyGeneration when nothing remains.
    """
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(HYPOTHESIS_CUE):
            line = line[len(HYPOTHESIS_CUE):].strip()
        if not line:
            continue
        return canonical_text(line)
    raise EmptyGeneration(f"no hypothesis in generator output: {raw!r}")


def parse_prompt_target(prompt_text: str) -> tuple[str, Label]:
    """Recover (premise, label) from a rendered prompt's Your-Task block.

    Inverse of build_prompt's task block; used by HTTP backends that only
    see prompt text.
    """
    marker = "\nYour Task:\n"
    pos = prompt_text.rfind(marker)
    if pos < 0:
        raise ConfigError("prompt text has no Your-Task block")
    block = prompt_text[pos + len(marker):]
    label: Label | None = None
    premise: str | None = None
    for line in block.splitlines():
        if line.startswith("Label: "):
            label = Label.parse(line[len("Label: "):].strip().lower())
        elif line.startswith("Premise: "):
            premise = line[len("Premise: "):]
    if label is None or premise is None:
        raise ConfigError("prompt Your-Task block is missing Label or Premise")
    return premise, label
