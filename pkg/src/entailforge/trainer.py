"""Classification head over fixed embeddings: 3 FC layers, GeLU, dropout.

Forward, analytic gradients, and the Adam update are written out against
numpy arrays; training is single-threaded and fully deterministic for a
given seed. Dropout is inverted (survivors scaled at train time), so eval
mode needs no correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .corpus import LABELS
from .efl import BINARY_CLASSES
from .errors import ConfigError, DataError, DimensionMismatch, NonFiniteLoss

TERNARY_CLASSES = tuple(lab.value for lab in LABELS)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

CHECKPOINT_VERSION = 1


def gelu(x):
    """Exact x * Phi(x) with the erf-based standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    """d/dx [x * Phi(x)] = Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


@dataclass(slots=True)
class MlpHead:
    input_dim: int
    hidden: tuple[int, int]
    out_dim: int
    params: dict[str, np.ndarray]
    classes: tuple[str, ...]
    dropout_p: float = 0.1

    def check_finite(self) -> None:
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise NonFiniteLoss(f"parameter {name} contains NaN/Inf")


def init_head(
    input_dim: int = 768,
    hidden: tuple[int, int] = (256, 256),
    out_dim: int = 3,
    seed: int = 0,
    dropout_p: float = 0.1,
) -> MlpHead:
    """Glorot-uniform weights, zero biases, seeded."""
    if out_dim not in (2, 3):
        raise ConfigError(f"out_dim must be 2 or 3, got {out_dim}")
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = [input_dim, hidden[0], hidden[1], out_dim]
    params: dict[str, np.ndarray] = {}
    for i in range(3):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{i + 1}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{i + 1}"] = np.zeros(fan_out, dtype=np.float64)
    classes = TERNARY_CLASSES if out_dim == 3 else BINARY_CLASSES
    return MlpHead(
        input_dim=input_dim,
        hidden=(hidden[0], hidden[1]),
        out_dim=out_dim,
        params=params,
        classes=classes,
        dropout_p=dropout_p,
    )


def make_dropout_masks(
    head: MlpHead, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted-dropout masks: zero with p, survivors scaled by 1/(1-p)."""
    p = head.dropout_p
    keep = 1.0 - p
    m1 = (rng.random((n, head.hidden[0])) >= p) / keep
    m2 = (rng.random((n, head.hidden[1])) >= p) / keep
    return m1, m2


def _forward_cached(
    head: MlpHead,
    xs: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[np.ndarray, dict]:
    P = head.params
    z1 = xs @ P["W1"] + P["b1"]
    a1 = gelu(z1)
    d1 = a1 * masks[0] if masks is not None else a1
    z2 = d1 @ P["W2"] + P["b2"]
    a2 = gelu(z2)
    d2 = a2 * masks[1] if masks is not None else a2
    logits = d2 @ P["W3"] + P["b3"]
    cache = {"xs": xs, "z1": z1, "d1": d1, "z2": z2, "d2": d2, "masks": masks}
    return logits, cache


def forward(
    head: MlpHead,
    x: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits for one vector or a batch. Train mode applies seeded dropout."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = x[None, :] if single else x
    if xs.shape[1] != head.input_dim:
        raise DimensionMismatch(
            f"input has dimension {xs.shape[1]}, head expects {head.input_dim}"
        )
    masks = None
    if mode == "train":
        if rng is None:
            raise ConfigError("train-mode forward needs a dropout rng")
        masks = make_dropout_masks(head, xs.shape[0], rng)
    elif mode != "eval":
        raise ConfigError(f"unknown forward mode: {mode!r}")
    logits, _ = _forward_cached(head, xs, masks)
    return logits[0] if single else logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, target: int) -> float:
    """-log softmax(logits)[target], max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise DataError(f"target {target} out of range for {logits.shape[-1]} classes")
    return float(-log_softmax(logits)[target])


def batch_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    ls = log_softmax(logits)
    return float(-np.mean(ls[np.arange(len(targets)), targets]))


def grad(
    head: MlpHead,
    xs: np.ndarray,
    targets: np.ndarray,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and analytic gradients.

    Dropout masks, when given, are applied identically in the forward pass
    and the backward pass.
    """
    xs = np.asarray(xs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if xs.ndim != 2 or xs.shape[1] != head.input_dim:
        raise DimensionMismatch(f"batch shape {xs.shape} does not match head")
    if len(xs) == 0:
        raise DataError("empty batch")
    n = len(xs)
    P = head.params
    logits, cache = _forward_cached(head, xs, masks)
    loss = batch_cross_entropy(logits, targets)

    probs = np.exp(log_softmax(logits))
    dz3 = probs
    dz3[np.arange(n), targets] -= 1.0
    dz3 /= n

    grads: dict[str, np.ndarray] = {}
    grads["W3"] = cache["d2"].T @ dz3
    grads["b3"] = dz3.sum(axis=0)
    dd2 = dz3 @ P["W3"].T
    da2 = dd2 * cache["masks"][1] if masks is not None else dd2
    dz2 = da2 * gelu_grad(cache["z2"])
    grads["W2"] = cache["d1"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    dd1 = dz2 @ P["W2"].T
    da1 = dd1 * cache["masks"][0] if masks is not None else dd1
    dz1 = da1 * gelu_grad(cache["z1"])
    grads["W1"] = cache["xs"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


@dataclass(slots=True)
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_head(cls, head: MlpHead, lr: float = 1e-3) -> "AdamState":
        state = cls(lr=lr)
        for name, p in head.params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise DimensionMismatch(f"gradient shape mismatch for {name}")
        m = state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    tol: float = 1e-4
    patience: int = 5
    seed: int = 0
    dropout: bool = True
    lr: float = 1e-3

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


def train(
    head: MlpHead,
    xs: np.ndarray,
    targets: np.ndarray,
    tc: TrainConfig,
    adam: AdamState | None = None,
) -> tuple[MlpHead, list[dict]]:
    """Seeded-shuffle minibatch epochs until convergence or max_epochs.

    Convergence: relative epoch-loss improvement below tc.tol for
    tc.patience consecutive epochs. History records per-epoch mean loss
    and eval-mode train accuracy. Deterministic given tc.seed. Passing an
    AdamState lets the caller keep the optimizer state for checkpointing.
    """
    xs = np.asarray(xs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if len(xs) == 0:
        raise DataError("no training data")
    if xs.shape[1] != head.input_dim:
        raise DimensionMismatch(f"data dim {xs.shape[1]} != head dim {head.input_dim}")
    if targets.min() < 0 or targets.max() >= head.out_dim:
        raise DataError("target outside head's class range")

    rng = np.random.Generator(np.random.PCG64(tc.seed))
    adam = AdamState.for_head(head, lr=tc.lr)
    history: list[dict] = []
    prev_loss: float | None = None
    stall = 0
    n = len(xs)
    for epoch in range(tc.max_epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start: start + tc.batch_size]
            bx, by = xs[idx], targets[idx]
            masks = make_dropout_masks(head, len(bx), rng) if tc.dropout else None
            loss, grads = grad(head, bx, by, masks=masks)
            if not math.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss became {loss} at epoch {epoch}, batch offset {start}"
                )
            adam_step(adam, head.params, grads)
            total_loss += loss * len(bx)
        head.check_finite()
        epoch_loss = total_loss / n
        preds = np.argmax(forward(head, xs, mode="eval"), axis=1)
        accuracy = float(np.mean(preds == targets))
        history.append({"epoch": epoch, "loss": epoch_loss, "accuracy": accuracy})

        if prev_loss is not None:
            rel = abs(prev_loss - epoch_loss) / max(abs(prev_loss), 1e-12)
            stall = stall + 1 if rel < tc.tol else 0
            if stall >= tc.patience:
                break
        prev_loss = epoch_loss
    return head, history


def predict(head: MlpHead, x: np.ndarray) -> int:
    """Argmax class index; ties break toward the lowest index."""
    logits = forward(head, x, mode="eval")
    if logits.ndim != 1:
        raise DimensionMismatch("predict takes a single vector")
    return int(np.argmax(logits))


def predict_class(head: MlpHead, x: np.ndarray) -> str:
    return head.classes[predict(head, x)]


def save_checkpoint(head: MlpHead, path: str | Path, adam: AdamState | None = None,
                    seed: int | None = None, history: list[dict] | None = None) -> None:
    """JSON container; floats round-trip bit-exactly through repr."""
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "input_dim": head.input_dim,
        "hidden": list(head.hidden),
        "out_dim": head.out_dim,
        "classes": list(head.classes),
        "dropout_p": head.dropout_p,
        "params": {name: head.params[name].tolist() for name in PARAM_NAMES},
        "adam": None
        if adam is None
        else {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
            "step": adam.step,
            "m": {k: v.tolist() for k, v in adam.m.items()},
            "v": {k: v.tolist() for k, v in adam.v.items()},
        },
        "seed": seed,
        "history": history or [],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[MlpHead, dict]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version: {obj.get('format_version')}")
    params = {
        name: np.asarray(obj["params"][name], dtype=np.float64)
        for name in PARAM_NAMES
    }
    head = MlpHead(
        input_dim=int(obj["input_dim"]),
        hidden=(int(obj["hidden"][0]), int(obj["hidden"][1])),
        out_dim=int(obj["out_dim"]),
        params=params,
        classes=tuple(obj["classes"]),
        dropout_p=float(obj["dropout_p"]),
    )
    return head, obj
