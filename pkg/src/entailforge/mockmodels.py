"""Deterministic in-process stand-ins for the three remote model roles.

All three mocks are pure functions of their inputs: same input gives the
same output on every platform. The generator is label-faithful by simple
text transforms; the classifier recognizes those transforms and falls back
to a seeded hash distribution; the embedder feature-hashes word n-grams.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .corpus import LABELS, Label

_TERMINAL_PUNCT = ".!?"

_AUXILIARIES = {
    "is", "are", "was", "were", "am", "be", "been", "being",
    "has", "have", "had", "does", "do", "did",
    "can", "could", "will", "would", "may", "might", "must", "shall", "should",
}

NEUTRAL_SUFFIX = "in the afternoon."

# Version tag mixed into the fallback hash; bumping it reshuffles every
# fallback distribution at once.
_CLASSIFIER_SALT = b"entailforge-mock-classifier-v21"

_WS_RUN = re.compile(r"\s+")


def _squash(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def _clause(premise: str) -> str:
    c = premise.strip()
    while c and c[-1] in _TERMINAL_PUNCT:
        c = c[:-1]
    return c.rstrip()


def entailment_hypothesis(premise: str) -> str:
    """Generalize the subject: "A/An X ..." becomes "Someone ..."."""
    c = _clause(premise)
    words = c.split()
    if len(words) >= 2 and words[0] in ("A", "An"):
        rest = words[2:]
        c = "Someone " + " ".join(rest) if rest else "Someone"
    return c + "."


def contradiction_hypothesis(premise: str) -> str:
    """Prefix the main verb phrase with "not"."""
    c = _clause(premise)
    words = c.split()
    for k, w in enumerate(words):
        if w.lower() in _AUXILIARIES:
            return " ".join(words[: k + 1] + ["not"] + words[k + 1:]) + "."
    if len(words) >= 2:
        return " ".join(words[:1] + ["not"] + words[1:]) + "."
    return "Not " + c + "."


def neutral_hypothesis(premise: str) -> str:
    """Append an unrelated fixed clause."""
    return _clause(premise) + " " + NEUTRAL_SUFFIX


def generate_hypothesis(premise: str, label: Label) -> str:
    if label is Label.ENTAILMENT:
        return entailment_hypothesis(premise)
    if label is Label.CONTRADICTION:
        return contradiction_hypothesis(premise)
    return neutral_hypothesis(premise)


def _hash_weights(premise: str, hypothesis: str) -> tuple[int, int, int]:
    digest = hashlib.sha256(
        _CLASSIFIER_SALT
        + b"\x00"
        + _squash(premise).encode("utf-8")
        + b"\x1f"
        + _squash(hypothesis).encode("utf-8")
    ).digest()
    u = [int.from_bytes(digest[4 * i: 4 * i + 4], "big") for i in range(3)]
    return (1 + u[0] % 997, 1 + u[1] % 997, 1 + u[2] % 997)


def classify_probs(premise: str, hypothesis: str) -> tuple[float, float, float]:
    """Probabilities over (entailment, contradiction, neutral).

    Rule order: identical text entails; a recognized subject generalization
    entails; the fixed neutral suffix is neutral; a negation marker
    contradicts; anything else gets a deterministic hash distribution.
    """
    p = _squash(premise)
    h = _squash(hypothesis)
    if h == p:
        return _confident(Label.ENTAILMENT)
    if h == entailment_hypothesis(p):
        return _confident(Label.ENTAILMENT)
    if h.endswith(NEUTRAL_SUFFIX):
        return _confident(Label.NEUTRAL)
    if " not " in f" {_clause(h)} " or h.startswith("Not "):
        return _confident(Label.CONTRADICTION)
    w = _hash_weights(p, h)
    total = sum(w)
    return (w[0] / total, w[1] / total, w[2] / total)


def _confident(label: Label) -> tuple[float, float, float]:
    probs = [0.05, 0.05, 0.05]
    probs[LABELS.index(label)] = 0.90
    return (probs[0], probs[1], probs[2])


def _bucket(kind: bytes, feature: str, dim: int) -> int:
    digest = hashlib.sha256(kind + b"\x00" + feature.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


def embed_text(text: str, dim: int = 768) -> np.ndarray:
    """Feature-hash lower-cased word unigrams and bigrams, L2-normalized.

    Bigrams are formed over adjacent distinct tokens, so repeated words add
    unigram weight without opening new buckets.
    """
    vec = np.zeros(dim, dtype=np.float64)
    tokens = text.lower().split()
    for tok in tokens:
        vec[_bucket(b"uni", tok, dim)] += 1.0
    for a, b in zip(tokens, tokens[1:]):
        if a != b:
            vec[_bucket(b"bi", f"{a} {b}", dim)] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec
