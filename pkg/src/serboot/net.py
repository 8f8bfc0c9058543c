"""Downstream emotion classifier: frame-wise affine + ReLU, temporal pooling,
affine + softmax, trained with cross-entropy and an adaptive-moment optimizer.

All arithmetic runs in float64 so the analytic gradients can be checked
against central finite differences to tight tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .data import Dataset, EmotionClass, LabeledSample, NUM_CLASSES, argmax_label
from .featio import decode_matrix, encode_matrix
from .util import atomic_write_bytes, atomic_write_text

#: Probabilities are clamped to this floor before taking logs.
PROB_FLOOR = 1e-12

POOLING_MODES = ("mean", "max")
LABEL_MODES = ("hard", "soft")

TargetLike = Union[int, EmotionClass, Sequence[float], np.ndarray]


class ConfigError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`train`.

    ``label_mode="soft"`` trains against each sample's soft label when present
    (falling back to the one-hot hard label otherwise); ``"hard"`` always uses
    one-hot targets. Weight decay is decoupled (applied directly to the
    weights at each step, not folded into the loss), so the loss reported by
    :func:`loss_and_grad` stays pure cross-entropy.
    """

    hidden_dim: int = 256
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    label_mode: str = "hard"
    pooling: str = "mean"

    def __post_init__(self) -> None:
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("moment decays must be in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.label_mode not in LABEL_MODES:
            raise ConfigError(f"label_mode must be one of {LABEL_MODES}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}")


@dataclass(frozen=True, eq=False)
class Model:
    """Classifier parameters. ``w1``: (hidden, dim); ``w2``: (4, hidden)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    pooling: str = "mean"

    def __post_init__(self) -> None:
        for field_name in ("w1", "b1", "w2", "b2"):
            arr = np.array(getattr(self, field_name), dtype=np.float64, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, field_name, arr)
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (NUM_CLASSES, h) or self.b2.shape != (NUM_CLASSES,):
            raise ValueError(
                f"inconsistent parameter shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )
        for field_name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, field_name))):
                raise ValueError(f"non-finite values in parameter {field_name}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]


@dataclass(eq=False)
class Gradients:
    """Gradient tensors, shaped exactly like the model parameters."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True, eq=False)
class Prediction:
    id: str
    probs: np.ndarray
    label: EmotionClass


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: Model, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one T x d utterance.

    softmax(w2 @ pool_t(relu(w1 @ x_t + b1)) + b2); for T=1 the pooling is
    the identity.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D (frames x dim), got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("need at least one frame")
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"feature dim {x.shape[1]} != model dim {model.feature_dim}")
    z = x @ model.w1.T + model.b1
    a = np.maximum(z, 0.0)
    pooled = a.mean(axis=0) if model.pooling == "mean" else a.max(axis=0)
    probs = _softmax_rows(model.w2 @ pooled + model.b2)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite activation in forward pass")
    return probs


def _as_target(t: TargetLike) -> np.ndarray:
    if isinstance(t, (int, np.integer, EmotionClass)):
        onehot = np.zeros(NUM_CLASSES, dtype=np.float64)
        onehot[int(t)] = 1.0
        return onehot
    arr = np.asarray(t, dtype=np.float64)
    if arr.shape != (NUM_CLASSES,):
        raise ValueError(f"target distribution must have {NUM_CLASSES} entries, got shape {arr.shape}")
    return arr


def _loss_and_grad_arrays(
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    pooling: str,
    x: np.ndarray,
    y: np.ndarray,
) -> tuple[float, Gradients]:
    """Stacked core: ``x`` is (B, T, d), ``y`` is (B, 4)."""
    batch = x.shape[0]
    frames = x.shape[1]
    z = x @ w1.T + b1                       # (B, T, h)
    a = np.maximum(z, 0.0)
    if pooling == "mean":
        pooled = a.mean(axis=1)             # (B, h)
    else:
        pooled = a.max(axis=1)
    logits = pooled @ w2.T + b2             # (B, 4)
    probs = _softmax_rows(logits)
    loss = float(-(y * np.log(np.maximum(probs, PROB_FLOOR))).sum(axis=1).mean())

    dlogits = (probs - y) / batch           # (B, 4)
    gw2 = dlogits.T @ pooled
    gb2 = dlogits.sum(axis=0)
    dpooled = dlogits @ w2                  # (B, h)
    if pooling == "mean":
        da = np.broadcast_to(dpooled[:, None, :] / frames, a.shape)
    else:
        # Route the gradient to the argmax frame per hidden unit (first on ties).
        da = np.zeros_like(a)
        np.put_along_axis(da, a.argmax(axis=1)[:, None, :], dpooled[:, None, :], axis=1)
    dz = np.where(z > 0, da, 0.0)
    gw1 = np.einsum("bth,btd->hd", dz, x)
    gb1 = dz.sum(axis=(0, 1))
    return loss, Gradients(gw1, gb1, gw2, gb2)


def loss_and_grad(
    model: Model, batch: Sequence[tuple[np.ndarray, TargetLike]]
) -> tuple[float, Gradients]:
    """Mean cross-entropy over a batch and its exact analytic gradients.

    Each batch element is ``(features, target)`` where the target is either a
    class (hard label) or a 4-entry distribution. The loss is
    ``mean_b(-sum_c target_c * log(prob_c))`` with probabilities floored at
    ``PROB_FLOOR`` inside the log.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    feats = [np.asarray(f, dtype=np.float64) for f, _ in batch]
    targets = np.stack([_as_target(t) for _, t in batch])
    for f in feats:
        if f.ndim != 2 or f.shape[1] != model.feature_dim:
            raise ValueError(f"batch features must be T x {model.feature_dim}, got shape {f.shape}")
    shapes = {f.shape for f in feats}
    if len(shapes) == 1:
        return _loss_and_grad_arrays(
            model.w1, model.b1, model.w2, model.b2, model.pooling, np.stack(feats), targets
        )
    # Mixed frame counts: average per-sample results.
    total_loss = 0.0
    grads = Gradients(
        np.zeros_like(model.w1), np.zeros_like(model.b1), np.zeros_like(model.w2), np.zeros_like(model.b2)
    )
    for f, y in zip(feats, targets):
        loss_i, g_i = _loss_and_grad_arrays(
            model.w1, model.b1, model.w2, model.b2, model.pooling, f[None], y[None]
        )
        total_loss += loss_i
        grads.w1 += g_i.w1
        grads.b1 += g_i.b1
        grads.w2 += g_i.w2
        grads.b2 += g_i.b2
    n = len(batch)
    grads.w1 /= n
    grads.b1 /= n
    grads.w2 /= n
    grads.b2 /= n
    return total_loss / n, grads


def _sample_target(sample: LabeledSample, label_mode: str) -> np.ndarray:
    if label_mode == "soft" and sample.soft_label is not None:
        return np.asarray(sample.soft_label.probs, dtype=np.float64)
    return _as_target(sample.hard_label)


def train(train_set: Dataset, cfg: TrainConfig) -> Model:
    """Train a fresh model; fully deterministic given (cfg, sample order).

    One seeded RNG stream drives both the uniform +-1/sqrt(fan_in) parameter
    init (drawn in the order w1, b1, w2, b2) and the per-epoch shuffles.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    d = train_set.feature_dim
    if d < 1:
        raise ValueError("training set has feature dim 0")
    h = cfg.hidden_dim
    rng = np.random.default_rng(cfg.seed)
    lim1 = 1.0 / math.sqrt(d)
    lim2 = 1.0 / math.sqrt(h)
    w1 = rng.uniform(-lim1, lim1, size=(h, d))
    b1 = rng.uniform(-lim1, lim1, size=h)
    w2 = rng.uniform(-lim2, lim2, size=(NUM_CLASSES, h))
    b2 = rng.uniform(-lim2, lim2, size=NUM_CLASSES)

    n = len(train_set)
    targets = np.stack([_sample_target(s, cfg.label_mode) for s in train_set.samples])
    frame_counts = {s.frames for s in train_set.samples}
    stacked: Optional[np.ndarray] = None
    feats64: list[np.ndarray] = []
    if len(frame_counts) == 1:
        stacked = np.stack([s.features for s in train_set.samples]).astype(np.float64)
    else:
        feats64 = [s.features.astype(np.float64) for s in train_set.samples]

    params = [w1, b1, w2, b2]
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            if stacked is not None:
                loss, g = _loss_and_grad_arrays(
                    params[0], params[1], params[2], params[3], cfg.pooling, stacked[idx], targets[idx]
                )
            else:
                x_list = [feats64[i] for i in idx]
                y = targets[idx]
                loss, g = _ragged_loss_and_grad(params, cfg.pooling, x_list, y)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_index, loss)
            step += 1
            grads = [g.w1, g.b1, g.w2, g.b2]
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for i, (p, grad) in enumerate(zip(params, grads)):
                m_state[i] = cfg.beta1 * m_state[i] + (1.0 - cfg.beta1) * grad
                v_state[i] = cfg.beta2 * v_state[i] + (1.0 - cfg.beta2) * grad * grad
                update = (m_state[i] / bc1) / (np.sqrt(v_state[i] / bc2) + cfg.epsilon)
                p -= cfg.learning_rate * update
                if cfg.weight_decay > 0 and i in (0, 2):  # weights only, never biases
                    p -= cfg.learning_rate * cfg.weight_decay * p
    return Model(params[0], params[1], params[2], params[3], pooling=cfg.pooling)


def _ragged_loss_and_grad(
    params: list[np.ndarray], pooling: str, x_list: list[np.ndarray], y: np.ndarray
) -> tuple[float, Gradients]:
    w1, b1, w2, b2 = params
    total = 0.0
    acc = Gradients(np.zeros_like(w1), np.zeros_like(b1), np.zeros_like(w2), np.zeros_like(b2))
    for f, target in zip(x_list, y):
        loss_i, g_i = _loss_and_grad_arrays(w1, b1, w2, b2, pooling, f[None], target[None])
        total += loss_i
        acc.w1 += g_i.w1
        acc.b1 += g_i.b1
        acc.w2 += g_i.w2
        acc.b2 += g_i.b2
    n = len(x_list)
    acc.w1 /= n
    acc.b1 /= n
    acc.w2 /= n
    acc.b2 /= n
    return total / n, acc


def predict(model: Model, ds: Dataset) -> list[Prediction]:
    """Run :func:`forward` over a dataset, preserving sample order."""
    if len(ds) == 0:
        return []
    if ds.feature_dim != model.feature_dim:
        raise ValueError(f"dataset feature dim {ds.feature_dim} != model dim {model.feature_dim}")
    frame_counts = {s.frames for s in ds.samples}
    if len(frame_counts) == 1:
        x = np.stack([s.features for s in ds.samples]).astype(np.float64)
        z = x @ model.w1.T + model.b1
        a = np.maximum(z, 0.0)
        pooled = a.mean(axis=1) if model.pooling == "mean" else a.max(axis=1)
        probs = _softmax_rows(pooled @ model.w2.T + model.b2)
        if not np.all(np.isfinite(probs)):
            raise FloatingPointError("non-finite activation in forward pass")
        return [
            Prediction(s.id, probs[i], EmotionClass(int(np.argmax(probs[i]))))
            for i, s in enumerate(ds.samples)
        ]
    return [Prediction(s.id, p, argmax_label(p)) for s in ds.samples for p in (forward(model, s.features),)]


_CHECKPOINT_FORMAT = "serboot-model-v1"


def save_model(model: Model, path: Path | str, extra: Optional[dict] = None) -> None:
    """Write a checkpoint: four binary sections (w1, b1, w2, b2 as float32)
    plus a ``<path>.json`` sidecar with dims and any extra metadata."""
    path = Path(path)
    sections = b"".join(
        encode_matrix(arr)
        for arr in (model.w1, model.b1[None, :], model.w2, model.b2[None, :])
    )
    atomic_write_bytes(path, sections)
    sidecar = {
        "format": _CHECKPOINT_FORMAT,
        "hidden_dim": model.hidden_dim,
        "feature_dim": model.feature_dim,
        "pooling": model.pooling,
        "tool_version": __version__,
    }
    if extra:
        sidecar.update(extra)
    atomic_write_text(Path(str(path) + ".json"), json.dumps(sidecar, indent=2) + "\n")


def load_model(path: Path | str) -> Model:
    """Read a checkpoint written by :func:`save_model`."""
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    if sidecar.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {sidecar.get('format')!r}")
    raw = path.read_bytes()
    offset = 0
    tensors = []
    for name in ("w1", "b1", "w2", "b2"):
        arr, offset = decode_matrix(raw, offset, context=f"{path}[{name}]")
        tensors.append(arr)
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameter sections")
    w1, b1, w2, b2 = tensors
    model = Model(w1, b1[0], w2, b2[0], pooling=sidecar.get("pooling", "mean"))
    if model.hidden_dim != sidecar["hidden_dim"] or model.feature_dim != sidecar["feature_dim"]:
        raise ValueError(f"{path}: sidecar dims do not match parameter sections")
    return model
