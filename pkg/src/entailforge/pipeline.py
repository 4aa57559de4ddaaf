"""Stage implementations for the end-to-end augmentation pipeline.

Every stage materializes its artifacts under the work dir (runs at corpus
scale need resumability), appends a manifest record, and returns it. The
pipeline digest chains the deterministic parts of all stage records.

Work-dir artifacts:

    gen.jsonl, few.jsonl        split outputs
    syn.jsonl, failures.jsonl   generation output and failure sidecar
    clean.jsonl, filter_report.json
    efl.jsonl                   converted training instances
    checkpoint.json             trained classification head
    eval_report.json
    manifest.jsonl              append-only run records
"""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import trainer
from .backends import BackendConfig, embed, run_generation
from .cleaner import FilterReport, clean
from .config import PipelineConfig, require_paths
from .corpus import (
    LABELS,
    Dataset,
    Label,
    fingerprint,
    load_dataset,
    split_dataset,
    write_dataset,
)
from .efl import construct_efl_hypothesis, convert, load_efl, parse_efl_hypothesis, write_efl
from .errors import ConfigError, DataError, FailureThresholdExceeded
from .evaluation import EvalReport, evaluate
from .manifest import StageManifest, append_manifest, fingerprint_file, stage_chain_digest
from .trainer import AdamState, MlpHead, TrainConfig, init_head, load_checkpoint, save_checkpoint

LOCK_NAME = ".lock"

ARTIFACTS = {
    "gen": "gen.jsonl",
    "few": "few.jsonl",
    "syn": "syn.jsonl",
    "failures": "failures.jsonl",
    "clean": "clean.jsonl",
    "filter_report": "filter_report.json",
    "efl": "efl.jsonl",
    "checkpoint": "checkpoint.json",
    "eval_report": "eval_report.json",
}


def artifact(work_dir: Path, name: str) -> Path:
    return Path(work_dir) / ARTIFACTS[name]


@contextmanager
def work_dir_lock(work_dir: str | Path):
    """One pipeline run per work dir."""
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    lock_path = work_dir / LOCK_NAME
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"work dir {work_dir} is locked by another run ({lock_path})"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _manifest(
    cfg: PipelineConfig,
    stage: str,
    started: float,
    inputs: dict[str, str],
    outputs: dict[str, str],
    counts: dict[str, int],
) -> StageManifest:
    record = StageManifest(
        stage=stage,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        inputs=inputs,
        outputs=outputs,
        counts=counts,
        wall_time_s=time.monotonic() - started,
    )
    append_manifest(cfg.work_dir, record)
    return record


def stage_split(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "input_path", "work_dir")
    d = load_dataset(cfg.input_path, cfg.input_format)
    gen, few = split_dataset(d, cfg.split_spec)
    write_dataset(gen, artifact(cfg.work_dir, "gen"))
    write_dataset(few, artifact(cfg.work_dir, "few"))
    return _manifest(
        cfg, "split", started,
        inputs={"corpus": fingerprint(d)},
        outputs={"gen": fingerprint(gen), "few": fingerprint(few)},
        counts={"corpus": len(d), "gen": len(gen), "few": len(few)},
    )


def _load_required(path: Path, what: str) -> Dataset:
    if not path.exists():
        raise ConfigError(f"{what} not found at {path}; run the earlier stage first")
    return load_dataset(path)


def stage_generate(cfg: PipelineConfig, resume: bool = False) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "work_dir")
    gen = _load_required(artifact(cfg.work_dir, "gen"), "generation split")
    few = _load_required(artifact(cfg.work_dir, "few"), "few-shot split")

    existing: dict[str, object] = {}
    syn_path = artifact(cfg.work_dir, "syn")
    if resume and syn_path.exists():
        existing = {ex.id: ex for ex in load_dataset(syn_path)}
    skip_ids = {ex.id for ex in gen if f"syn-{ex.id}" in existing} or None

    failures_path = artifact(cfg.work_dir, "failures")
    try:
        run = run_generation(
            gen, few, cfg.generator, cfg.seed,
            failure_threshold=cfg.failure_threshold,
            skip_ids=skip_ids,
        )
    except FailureThresholdExceeded as e:
        _write_failures(failures_path, getattr(e, "failures", []))
        raise

    merged = []
    fresh = {ex.id: ex for ex in run.synthetic}
    for ex in gen:
        syn_id = f"syn-{ex.id}"
        if syn_id in existing:
            merged.append(existing[syn_id])
        elif syn_id in fresh:
            merged.append(fresh[syn_id])
    syn = Dataset(merged, name=run.synthetic.name)
    write_dataset(syn, syn_path)
    _write_failures(failures_path, run.failures)
    return _manifest(
        cfg, "generate", started,
        inputs={"gen": fingerprint(gen), "few": fingerprint(few)},
        outputs={"syn": fingerprint(syn)},
        counts={"requested": len(gen), "generated": len(syn), "failed": len(run.failures)},
    )


def _write_failures(path: Path, failures) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for rec in failures:
            f.write(json.dumps({"id": rec.id, "error": rec.error}) + "\n")


def stage_clean(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "input_path", "work_dir")
    syn = _load_required(artifact(cfg.work_dir, "syn"), "synthetic set")
    original = load_dataset(cfg.input_path, cfg.input_format)
    cleaned, report = clean(syn, original, cfg.classifier)
    write_dataset(cleaned, artifact(cfg.work_dir, "clean"))
    report_path = artifact(cfg.work_dir, "filter_report")
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    return _manifest(
        cfg, "clean", started,
        inputs={"syn": fingerprint(syn), "original": fingerprint(original)},
        outputs={"clean": fingerprint(cleaned), "filter_report": fingerprint_file(report_path)},
        counts={
            "total": report.total,
            "removed_alignment": report.removed_alignment,
            "removed_duplicate": report.removed_duplicate,
            "retained": report.retained,
        },
    )


def stage_convert(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "work_dir")
    cleaned = _load_required(artifact(cfg.work_dir, "clean"), "cleaned set")
    converted = convert(cleaned, cfg.efl_mode)
    efl_path = artifact(cfg.work_dir, "efl")
    write_efl(converted, efl_path)
    return _manifest(
        cfg, "convert", started,
        inputs={"clean": fingerprint(cleaned)},
        outputs={"efl": fingerprint_file(efl_path)},
        counts={"input": len(cleaned), "output": len(converted),
                "expansion": len(converted) // max(len(cleaned), 1)},
    )


def _embed_texts(cfg_backend: BackendConfig, texts: list[str], chunk: int = 128) -> np.ndarray:
    parts = [embed(cfg_backend, texts[i: i + chunk]) for i in range(0, len(texts), chunk)]
    if not parts:
        return np.zeros((0, cfg_backend.dim), dtype=np.float64)
    return np.concatenate(parts, axis=0)


def pair_text(premise: str, hypothesis_text: str) -> str:
    return f"{premise} [SEP] {hypothesis_text}"


def stage_train(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "work_dir")
    efl_path = artifact(cfg.work_dir, "efl")
    if not efl_path.exists():
        raise ConfigError(f"EFL set not found at {efl_path}; run convert first")
    examples = load_efl(efl_path)
    if not examples:
        raise DataError("EFL set is empty; nothing to train on")

    if cfg.efl_mode == "expanded":
        texts = [pair_text(e.premise, e.efl_hypothesis) for e in examples]
        targets = np.array([0 if e.target == "true" else 1 for e in examples])
        out_dim = 2
    else:
        texts = [
            pair_text(e.premise, parse_efl_hypothesis(e.efl_hypothesis)[0])
            for e in examples
        ]
        targets = np.array(
            [LABELS.index(Label.parse(e.target)) for e in examples]
        )
        out_dim = 3

    xs = _embed_texts(cfg.embedder, texts)
    head = init_head(
        input_dim=cfg.embedder.dim, hidden=cfg.hidden, out_dim=out_dim, seed=cfg.seed
    )
    adam = AdamState.for_head(head, lr=cfg.train.lr)
    head, history = trainer.train(head, xs, targets, cfg.train, adam=adam)
    ckpt_path = artifact(cfg.work_dir, "checkpoint")
    save_checkpoint(head, ckpt_path, adam=adam, seed=cfg.seed, history=history)
    return _manifest(
        cfg, "train", started,
        inputs={"efl": fingerprint_file(efl_path)},
        outputs={"checkpoint": fingerprint_file(ckpt_path)},
        counts={"examples": len(examples), "epochs": len(history), "out_dim": out_dim},
    )


def make_predictor(head: MlpHead, embedder_cfg: BackendConfig):
    """Label predictor for (premise, hypothesis) from a trained head.

    Ternary heads classify the embedded pair directly. Binary heads score
    the three label-embedded candidates and pick the label whose "true"
    log-probability is highest (ties break in canonical label order).
    """
    if head.out_dim == 3:

        def predict_fn(premise: str, hypothesis: str) -> str:
            x = embed(embedder_cfg, [pair_text(premise, hypothesis)])[0]
            return head.classes[trainer.predict(head, x)]

    else:
        true_idx = head.classes.index("true")

        def predict_fn(premise: str, hypothesis: str) -> str:
            texts = [
                pair_text(premise, construct_efl_hypothesis(hypothesis, lab))
                for lab in LABELS
            ]
            xs = embed(embedder_cfg, texts)
            scores = trainer.log_softmax(trainer.forward(head, xs))[:, true_idx]
            return LABELS[int(np.argmax(scores))].value

    return predict_fn


def stage_eval(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    require_paths(cfg, "work_dir", "eval_split")
    ckpt_path = artifact(cfg.work_dir, "checkpoint")
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found at {ckpt_path}; run train first")
    head, _ = load_checkpoint(ckpt_path)
    d = load_dataset(cfg.eval_split, cfg.input_format)
    report = evaluate(make_predictor(head, cfg.embedder), d)
    report_path = artifact(cfg.work_dir, "eval_report")
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    return _manifest(
        cfg, "eval", started,
        inputs={"checkpoint": fingerprint_file(ckpt_path), "eval": fingerprint(d)},
        outputs={"eval_report": fingerprint_file(report_path)},
        counts={"n": report.n, "correct": round(report.accuracy * report.n)},
    )


PIPELINE_STAGES = ("split", "generate", "clean", "convert", "train", "eval")


def run_pipeline(cfg: PipelineConfig) -> tuple[list[StageManifest], str]:
    """Run all stages in order; returns stage manifests and the chain digest."""
    require_paths(cfg, "input_path", "work_dir", "eval_split")
    stages = [
        stage_split(cfg),
        stage_generate(cfg),
        stage_clean(cfg),
        stage_convert(cfg),
        stage_train(cfg),
        stage_eval(cfg),
    ]
    digest = stage_chain_digest(stages)
    final = StageManifest(
        stage="pipeline",
        config_digest=cfg.digest(),
        seed=cfg.seed,
        inputs={},
        outputs={"chain": digest},
        counts={"stages": len(stages)},
        wall_time_s=sum(s.wall_time_s for s in stages),
    )
    append_manifest(cfg.work_dir, final)
    return stages, digest


def read_filter_report(work_dir: str | Path) -> FilterReport | None:
    path = artifact(Path(work_dir), "filter_report")
    if not path.exists():
        return None
    obj = json.loads(path.read_text(encoding="utf-8"))
    return FilterReport(**obj)


def collect_stats(work_dir: str | Path) -> dict:
    """Dataset counts and the filter report for everything materialized."""
    work_dir = Path(work_dir)
    stats: dict = {"datasets": {}, "filter_report": None}
    for name in ("gen", "few", "syn", "clean"):
        path = artifact(work_dir, name)
        if path.exists():
            stats["datasets"][name] = len(load_dataset(path))
    efl_path = artifact(work_dir, "efl")
    if efl_path.exists():
        stats["datasets"]["efl"] = len(load_efl(efl_path))
    report = read_filter_report(work_dir)
    if report is not None:
        stats["filter_report"] = json.loads(report.to_json())
    eval_path = artifact(work_dir, "eval_report")
    if eval_path.exists():
        stats["eval_report"] = json.loads(eval_path.read_text(encoding="utf-8"))
    return stats
