"""Pipeline configuration: one JSON document plus environment overrides.

Overrides take the form ``ENTAILFORGE_<SECTION>_<KEY>`` (for example
``ENTAILFORGE_SPLIT_SEED=7`` or ``ENTAILFORGE_BACKENDS_GENERATOR_KIND=http``)
and are resolved against the config tree case-insensitively. Values are
parsed as JSON when possible, else taken as strings.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .backends import BackendConfig
from .corpus import SplitSpec, parse_fraction
from .efl import EFL_MODES
from .errors import ConfigError
from .trainer import TrainConfig

ENV_PREFIX = "ENTAILFORGE_"

DEFAULT_CONFIG: dict = {
    "paths": {"input": None, "work_dir": None, "eval_split": None},
    "input_format": "native",
    "seed": 0,
    "split": {"generation_fraction": "95/100"},
    "backends": {
        "generator": {"kind": "mock"},
        "classifier": {"kind": "mock"},
        "embedder": {"kind": "mock"},
    },
    "efl_mode": "gold",
    "train": {
        "batch_size": 32,
        "max_epochs": 200,
        "tol": 1e-4,
        "patience": 5,
        "dropout": True,
        "lr": 1e-3,
        "hidden": [256, 256],
    },
    "failure_threshold": 0.10,
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _match_env_path(tree: dict, tokens: str) -> list[str] | None:
    """Greedily match an underscore-joined env suffix against the tree."""
    for key in tree:
        upper = key.upper()
        if tokens == upper:
            return [key]
        if tokens.startswith(upper + "_") and isinstance(tree[key], dict):
            rest = _match_env_path(tree[key], tokens[len(upper) + 1:])
            if rest is not None:
                return [key] + rest
    return None


def apply_env_overrides(doc: dict, environ: dict[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    doc = copy.deepcopy(doc)
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = _match_env_path(doc, name[len(ENV_PREFIX):])
        if path is None:
            raise ConfigError(f"environment override {name} matches no config key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    return doc


@dataclass(slots=True)
class PipelineConfig:
    raw: dict
    input_path: Path | None
    work_dir: Path | None
    eval_split: Path | None
    input_format: str
    seed: int
    generation_fraction: Fraction
    generator: BackendConfig
    classifier: BackendConfig
    embedder: BackendConfig
    efl_mode: str
    train: TrainConfig
    hidden: tuple[int, int]
    failure_threshold: float

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(generation_fraction=self.generation_fraction, seed=self.seed)

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _backend_from(doc: dict, role: str) -> BackendConfig:
    section = doc["backends"].get(role, {})
    if not isinstance(section, dict):
        raise ConfigError(f"backends.{role} must be an object")
    known = {
        "kind", "endpoint", "timeout", "max_in_flight", "retries",
        "retry_backoff", "temperature", "max_tokens", "dim",
    }
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"backends.{role}: unknown keys {sorted(unknown)}")
    return BackendConfig(**section)


def build_config(doc: dict) -> PipelineConfig:
    doc = _deep_merge(DEFAULT_CONFIG, doc)
    paths = doc.get("paths", {})

    def path_or_none(key: str) -> Path | None:
        value = paths.get(key)
        return Path(value) if value else None

    efl_mode = doc.get("efl_mode")
    if efl_mode not in EFL_MODES:
        raise ConfigError(f"efl_mode must be one of {EFL_MODES}, got {efl_mode!r}")
    if doc.get("input_format") not in ("native", "snli"):
        raise ConfigError(f"input_format must be native or snli")

    train_doc = dict(doc["train"])
    hidden = train_doc.pop("hidden", [256, 256])
    if not (isinstance(hidden, list) and len(hidden) == 2):
        raise ConfigError("train.hidden must be a two-element list")
    seed = int(doc.get("seed", 0))
    try:
        train = TrainConfig(seed=seed, **train_doc)
    except TypeError as e:
        raise ConfigError(f"train section: {e}") from None

    threshold = float(doc.get("failure_threshold", 0.10))
    if not (0.0 <= threshold <= 1.0):
        raise ConfigError("failure_threshold must be in [0,1]")

    return PipelineConfig(
        raw=doc,
        input_path=path_or_none("input"),
        work_dir=path_or_none("work_dir"),
        eval_split=path_or_none("eval_split"),
        input_format=str(doc["input_format"]),
        seed=seed,
        generation_fraction=parse_fraction(doc["split"]["generation_fraction"]),
        generator=_backend_from(doc, "generator"),
        classifier=_backend_from(doc, "classifier"),
        embedder=_backend_from(doc, "embedder"),
        efl_mode=str(efl_mode),
        train=train,
        hidden=(int(hidden[0]), int(hidden[1])),
        failure_threshold=threshold,
    )


def load_config(
    path: str | Path | None,
    overrides: dict | None = None,
    environ: dict[str, str] | None = None,
) -> PipelineConfig:
    """Load JSON config, apply env overrides, then explicit CLI overrides."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    doc = _deep_merge(DEFAULT_CONFIG, doc)
    doc = apply_env_overrides(doc, environ)
    if overrides:
        doc = _deep_merge(doc, overrides)
    return build_config(doc)


def require_paths(cfg: PipelineConfig, *names: str) -> None:
    """Validate that the named paths are set; inputs must exist."""
    for name in names:
        value = getattr(cfg, name)
        if value is None:
            raise ConfigError(f"config is missing paths.{_path_key(name)}")
        if name in ("input_path", "eval_split") and not Path(value).exists():
            raise ConfigError(f"paths.{_path_key(name)} does not exist: {value}")


def _path_key(attr: str) -> str:
    return {"input_path": "input", "work_dir": "work_dir", "eval_split": "eval_split"}[attr]
