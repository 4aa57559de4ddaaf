"""Clients for the three remote model roles plus the batch generation driver.

Two client kinds per role: ``mock`` (in-process, pure functions from
mockmodels) and ``http`` (JSON-over-HTTP against the wire protocol served by
``entailforge.server`` or any compatible backend). The batch driver issues up
to ``max_in_flight`` concurrent requests and reassembles results into input
order, so output never depends on completion timing.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import httpx
import numpy as np

from . import mockmodels
from .corpus import LABELS, Dataset, Label, NliExample
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    EntailforgeError,
    FailureThresholdExceeded,
    ProtocolViolation,
    TransportError,
)
from .promptgen import Prompt, build_prompt, parse_generation, sample_exemplars

DEFAULT_EMBED_DIM = 768


@dataclass(frozen=True, slots=True)
class BackendConfig:
    kind: str = "mock"
    endpoint: str | None = None
    timeout: float = 30.0
    max_in_flight: int = 8
    retries: int = 2
    retry_backoff: float = 0.25
    temperature: float = 0.0
    max_tokens: int = 64
    dim: int = DEFAULT_EMBED_DIM

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"backend kind must be mock or http, got {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("http backend requires an endpoint URL")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")


@dataclass(frozen=True, slots=True)
class LabelDistribution:
    """Probabilities over the three labels, in canonical label order."""

    probs: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.probs) != 3 or any(not (0.0 <= p <= 1.0) for p in self.probs):
            raise ProtocolViolation(f"probabilities out of range: {self.probs}")
        if abs(sum(self.probs) - 1.0) > 1e-6:
            raise ProtocolViolation(f"probabilities sum to {sum(self.probs)}, not 1")

    def argmax(self) -> Label:
        # Ties break toward the lowest label index.
        best = 0
        for i in (1, 2):
            if self.probs[i] > self.probs[best]:
                best = i
        return LABELS[best]

    def as_dict(self) -> dict[str, float]:
        return {lab.value: p for lab, p in zip(LABELS, self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelDistribution":
        try:
            probs = tuple(float(d[lab.value]) for lab in LABELS)
        except (KeyError, TypeError, ValueError):
            raise ProtocolViolation(f"malformed probability map: {d!r}") from None
        return cls(probs)  # range/sum checks in __post_init__


@dataclass(frozen=True, slots=True)
class GenerationResult:
    premise: str
    target_label: Label
    raw_text: str
    parsed_hypothesis: str
    exemplar_ids: tuple[str, str]
    latency: float


@dataclass(frozen=True, slots=True)
class GenerationFailure:
    id: str
    error: str


def _retrying_post(cfg: BackendConfig, path: str, body: dict) -> dict:
    """POST with bounded retries and exponential backoff on transport failure."""
    client = _http_client(cfg.endpoint, cfg.timeout)
    last_error: Exception | None = None
    for attempt in range(cfg.retries + 1):
        try:
            resp = client.post(path, json=body)
        except httpx.HTTPError as e:
            last_error = e
        else:
            if resp.status_code == 200:
                try:
                    obj = resp.json()
                except ValueError:
                    raise ProtocolViolation(f"{path}: response is not JSON") from None
                if not isinstance(obj, dict):
                    raise ProtocolViolation(f"{path}: response is not a JSON object")
                return obj
            last_error = TransportError(f"{path}: HTTP {resp.status_code}")
        if attempt < cfg.retries:
            time.sleep(cfg.retry_backoff * (2**attempt))
    raise TransportError(f"{path}: {last_error}") from None


@lru_cache(maxsize=32)
def _http_client(endpoint: str | None, timeout: float) -> httpx.Client:
    return httpx.Client(base_url=endpoint or "", timeout=timeout)


def _derive_item_seed(seed: int, item_index: int) -> int:
    digest = hashlib.sha256(
        b"generation-seed\x00"
        + int(seed).to_bytes(8, "big")
        + int(item_index).to_bytes(8, "big")
    ).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # non-negative, JSON-safe


def generate(cfg: BackendConfig, prompt: Prompt, seed: int = 0) -> GenerationResult:
    """One hypothesis for one prompt; retries transport failures."""
    start = time.monotonic()
    if cfg.kind == "mock":
        raw = mockmodels.generate_hypothesis(prompt.target_premise, prompt.target_label)
    else:
        body = {
            "prompt": prompt.text,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "seed": seed,
        }
        obj = _retrying_post(cfg, "/generate", body)
        raw = obj.get("text")
        if not isinstance(raw, str):
            raise ProtocolViolation(f"/generate response missing text: {obj!r}")
    parsed = parse_generation(raw)
    return GenerationResult(
        premise=prompt.target_premise,
        target_label=prompt.target_label,
        raw_text=raw,
        parsed_hypothesis=parsed,
        exemplar_ids=prompt.exemplar_ids,
        latency=time.monotonic() - start,
    )


def classify(cfg: BackendConfig, premise: str, hypothesis: str) -> LabelDistribution:
    if not premise.strip() or not hypothesis.strip():
        raise DataError("classify requires non-empty premise and hypothesis")
    if cfg.kind == "mock":
        return LabelDistribution(mockmodels.classify_probs(premise, hypothesis))
    obj = _retrying_post(cfg, "/classify", {"premise": premise, "hypothesis": hypothesis})
    probs = obj.get("probs")
    if not isinstance(probs, dict):
        raise ProtocolViolation(f"/classify response missing probs: {obj!r}")
    return LabelDistribution.from_dict(probs)


def embed(cfg: BackendConfig, texts: list[str]) -> np.ndarray:
    """One vector per text, shape (n, cfg.dim), order-aligned."""
    if any(not t.strip() for t in texts):
        raise DataError("embed requires non-empty texts")
    if not texts:
        return np.zeros((0, cfg.dim), dtype=np.float64)
    if cfg.kind == "mock":
        return np.stack([mockmodels.embed_text(t, cfg.dim) for t in texts])
    obj = _retrying_post(cfg, "/embed", {"texts": texts, "dim": cfg.dim})
    vectors = obj.get("vectors")
    if not isinstance(vectors, list) or len(vectors) != len(texts):
        raise ProtocolViolation(f"/embed returned {type(vectors)} for {len(texts)} texts")
    try:
        arr = np.asarray(vectors, dtype=np.float64)
    except ValueError:
        raise ProtocolViolation("/embed returned ragged or non-numeric vectors") from None
    if arr.ndim != 2 or arr.shape != (len(texts), cfg.dim):
        raise DimensionMismatch(f"/embed returned shape {arr.shape}, wanted (n, {cfg.dim})")
    return arr


@dataclass(slots=True)
class GenerationRun:
    """Outcome of a batch generation: synthetic dataset plus failure sidecar."""

    synthetic: Dataset
    failures: list[GenerationFailure] = field(default_factory=list)
    results: list[GenerationResult] = field(default_factory=list)


def run_generation(
    gen: Dataset,
    few: Dataset,
    cfg: BackendConfig,
    seed: int,
    failure_threshold: float = 0.10,
    skip_ids: set[str] | None = None,
) -> GenerationRun:
    """Generate one synthetic example per input example.

    Exemplar sampling and per-item seeds key on the item's position in the
    full input dataset, so a resumed run (skip_ids set) produces the same
    hypotheses as a fresh one. Output order equals input order regardless of
    completion order; at most cfg.max_in_flight requests are outstanding.
    """
    if len(few) < 2:
        raise ConfigError("few-shot set needs at least 2 examples")
    items = [
        (idx, ex)
        for idx, ex in enumerate(gen.examples)
        if not skip_ids or ex.id not in skip_ids
    ]

    def one(idx: int, ex: NliExample) -> tuple[NliExample, GenerationResult]:
        e1, e2 = sample_exemplars(few, seed, idx)
        prompt = build_prompt(ex.premise, ex.label, e1, e2)
        result = generate(cfg, prompt, seed=_derive_item_seed(seed, idx))
        syn = NliExample(
            id=f"syn-{ex.id}",
            premise=ex.premise,
            hypothesis=result.parsed_hypothesis,
            label=ex.label,
            source="synthetic",
        )
        return syn, result

    outputs: list[tuple[NliExample, GenerationResult] | None] = [None] * len(items)
    failures: list[GenerationFailure | None] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        futures = {
            pool.submit(one, idx, ex): slot for slot, (idx, ex) in enumerate(items)
        }
        for fut, slot in futures.items():
            try:
                outputs[slot] = fut.result()
            except EntailforgeError as e:
                failures[slot] = GenerationFailure(id=items[slot][1].id, error=str(e))

    kept = [o for o in outputs if o is not None]
    failed = [f for f in failures if f is not None]
    if items and len(failed) / len(items) > failure_threshold:
        exc = FailureThresholdExceeded(
            f"{len(failed)}/{len(items)} generations failed "
            f"(threshold {failure_threshold:.0%})"
        )
        exc.failures = failed  # sidecar content for the caller
        raise exc
    return GenerationRun(
        synthetic=Dataset([syn for syn, _ in kept], name=f"{gen.name}.syn"),
        failures=failed,
        results=[res for _, res in kept],
    )
