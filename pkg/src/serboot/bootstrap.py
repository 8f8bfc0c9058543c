"""Iterative selection of synthesized training data.

Starting from a model trained on target data alone, each round scores the
full synthesized pool and keeps the samples the current model handles well:

* ``chi1`` keeps a sample when the predicted class equals its hard label.
* ``chi2`` keeps a sample when the predicted class equals its soft-label
  argmax AND the KL divergence of prediction from soft label is strictly
  below the median KL over the whole pool for the current model.

The model is then retrained from scratch on target + selected data. Every
round re-scans the full pool, so samples dropped earlier can return.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, EmotionClass, argmax_label, merge_datasets
from .evaluation import Metrics, evaluate_model
from .net import Model, TrainConfig, predict, train

log = logging.getLogger(__name__)

CRITERIA = ("chi1", "chi2")

#: Probabilities are clamped to [KL_CLAMP, 1] and renormalized before the KL.
KL_CLAMP = 1e-12

#: Fixed binning for KL diagnostics emitted with each round.
KL_HISTOGRAM_BINS = 20
KL_HISTOGRAM_RANGE = (0.0, 5.0)

#: Inputs to kl_divergence must sum to 1 within this tolerance.
KL_SUM_TOL = 1e-6


class MissingSoftLabelError(ValueError):
    """chi2 needs a soft label on every synthesized sample."""


def kl_divergence(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    """KL(p || q) = sum_c p_c * ln(p_c / q_c) over the four classes.

    Both inputs are clamped to [1e-12, 1] and renormalized first, so
    zero-probability entries cannot produce infinities. The result is
    non-negative up to float rounding (>= -1e-9).
    """
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    for name, arr in (("p", p_arr), ("q", q_arr)):
        if arr.shape != p_arr.shape or arr.ndim != 1 or arr.shape[0] != 4:
            raise ValueError(f"{name} must be a 4-entry distribution, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite entries in {name}")
        if abs(float(arr.sum()) - 1.0) > KL_SUM_TOL:
            raise ValueError(f"{name} sums to {float(arr.sum())!r}, expected 1 within {KL_SUM_TOL}")
    pc = np.clip(p_arr, KL_CLAMP, 1.0)
    pc = pc / pc.sum()
    qc = np.clip(q_arr, KL_CLAMP, 1.0)
    qc = qc / qc.sum()
    return float(np.sum(pc * np.log(pc / qc)))


def median(values: Sequence[float]) -> float:
    """Middle element for odd n, mean of the two middle elements for even n."""
    if len(values) == 0:
        raise ValueError("median of empty list")
    return float(np.median(np.asarray(values, dtype=np.float64)))


def chi1(pred: np.ndarray, hard_label: EmotionClass | int) -> bool:
    """Keep iff the predicted class (lowest-index ties) equals the hard label."""
    return argmax_label(pred) == EmotionClass(int(hard_label))


def chi2(pred: np.ndarray, soft_label, med_threshold: float) -> bool:
    """Keep iff argmax(pred) == argmax(soft label) and KL(pred, soft) < median.

    The inequality is strict: a sample sitting exactly at the median is
    rejected. ``med_threshold`` must be the median KL over the entire
    synthesized pool for the current model, not just the argmax-matched part.
    """
    if soft_label is None:
        raise MissingSoftLabelError("chi2 requires a soft label")
    if argmax_label(pred) != soft_label.argmax():
        return False
    return kl_divergence(pred, soft_label.probs) < med_threshold


@dataclass(frozen=True, eq=False)
class SelectionRound:
    """Record of one selection pass over the synthesized pool."""

    iteration: int
    criterion: str
    selected_ids: tuple[str, ...]
    kept: int
    total: int
    kl_values: Optional[tuple[float, ...]] = None  # aligned with pool order (chi2 only)
    median_threshold: Optional[float] = None       # chi2 only

    def to_json_dict(self) -> dict:
        doc: dict = {
            "iteration": self.iteration,
            "criterion": self.criterion,
            "kept": self.kept,
            "total": self.total,
            "median_threshold": self.median_threshold,
            "selected_ids": list(self.selected_ids),
        }
        if self.kl_values is not None:
            doc["kl_histogram"] = kl_histogram(self.kl_values)
        return doc


def kl_histogram(values: Sequence[float]) -> dict:
    """Histogram of KL values over 20 fixed bins spanning [0, 5].

    Values outside the range are clipped into the edge bins so the counts
    always sum to ``len(values)``.
    """
    clipped = np.clip(np.asarray(values, dtype=np.float64), *KL_HISTOGRAM_RANGE)
    counts, edges = np.histogram(clipped, bins=KL_HISTOGRAM_BINS, range=KL_HISTOGRAM_RANGE)
    return {"bin_edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def select_round(model: Model, d_syn: Dataset, criterion: str, iteration: int = 0) -> SelectionRound:
    """Score the full pool with ``model`` and apply the selection criterion.

    For chi2 the KL values and their median are computed over every pool
    sample before any filtering. Deterministic given (model, pool order).
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    if len(d_syn) == 0:
        raise ValueError("synthesized pool is empty")
    if criterion == "chi2":
        missing = [s.id for s in d_syn.samples if s.soft_label is None]
        if missing:
            raise MissingSoftLabelError(
                f"chi2 requires soft labels on every synthesized sample; missing for "
                f"{len(missing)} sample(s), e.g. {missing[:3]}"
            )
    preds = predict(model, d_syn)
    if criterion == "chi1":
        selected = tuple(
            s.id for s, p in zip(d_syn.samples, preds) if argmax_label(p.probs) == s.hard_label
        )
        return SelectionRound(iteration, criterion, selected, len(selected), len(d_syn))
    kls = tuple(kl_divergence(p.probs, s.soft_label.probs) for s, p in zip(d_syn.samples, preds))
    med = median(kls)
    selected = tuple(
        s.id
        for s, p, kl in zip(d_syn.samples, preds, kls)
        if argmax_label(p.probs) == s.soft_label.argmax() and kl < med
    )
    return SelectionRound(iteration, criterion, selected, len(selected), len(d_syn), kls, med)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    """Models, rounds, and (optionally) per-iteration test metrics."""

    models: tuple[Model, ...]                      # length iterations + 1
    rounds: tuple[SelectionRound, ...]             # length iterations
    metrics: Optional[tuple[Metrics, ...]]         # per model, when eval_split given
    warnings: tuple[str, ...]

    @property
    def final_model(self) -> Model:
        return self.models[-1]


def run_pipeline(
    d_tgt: Dataset,
    d_syn: Optional[Dataset],
    iterations: int,
    criterion: str,
    cfg: TrainConfig,
    eval_split: Optional[Dataset] = None,
) -> PipelineResult:
    """Train -> select -> retrain for ``iterations`` rounds.

    The first model is trained on target data alone. Each subsequent model is
    retrained from a fresh seeded init (same cfg, same seed) on target plus
    the samples the previous model selected. A round that selects nothing
    falls back to target-only training and records a warning. With
    ``iterations=0`` this reduces exactly to baseline training.
    """
    if len(d_tgt) == 0:
        raise ValueError("target dataset is empty")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")

    warnings: list[str] = []
    models = [train(d_tgt, cfg)]
    rounds: list[SelectionRound] = []
    for i in range(iterations):
        if d_syn is None or len(d_syn) == 0:
            rounds.append(SelectionRound(i, criterion, (), 0, 0))
            warnings.append(f"iteration {i}: synthesized pool is empty, nothing to select")
            models.append(train(d_tgt, cfg))
            continue
        rnd = select_round(models[-1], d_syn, criterion, iteration=i)
        rounds.append(rnd)
        if rnd.kept == 0:
            warnings.append(f"iteration {i}: selection kept 0 of {rnd.total} samples")
            models.append(train(d_tgt, cfg))
            continue
        selected = d_syn.subset_by_ids(rnd.selected_ids, name=f"{d_syn.name}#round{i}")
        combined = merge_datasets(d_tgt, selected)
        models.append(train(combined, cfg))
    for message in warnings:
        log.warning("%s", message)

    metrics = None
    if eval_split is not None:
        metrics = tuple(evaluate_model(m, eval_split) for m in models)
    return PipelineResult(tuple(models), tuple(rounds), metrics, tuple(warnings))
