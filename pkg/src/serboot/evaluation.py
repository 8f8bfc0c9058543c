"""Speaker-aware cross-validation, UA/WA/macro-F1 metrics, multi-seed aggregation.

Folds never share speakers between train and test. Classes absent from a
fold's test labels are excluded from the UA and macro-F1 averages; this avoids
0/0 recalls on small folds and is stated here prominently because different
toolkits disagree on it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import Dataset, EmotionClass, NUM_CLASSES
from .net import Model, TrainConfig, predict, train
from .util import derive_seed

METRIC_KEYS = ("ua", "wa", "macro_f1")


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class FoldPlan:
    """Speaker partition plus the derived per-fold sample index lists."""

    folds: tuple[tuple[str, ...], ...]
    train_indices: tuple[tuple[int, ...], ...]
    test_indices: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)


def partition_speakers(ds: Dataset, k: int, seed: int = 0) -> FoldPlan:
    """Greedy balanced speaker partition into ``k`` folds.

    Speakers are sorted by utterance count descending (ties by id) and each is
    assigned to the currently lightest fold (ties by fold index). The plan is
    fully determined by the data; ``seed`` is accepted for interface stability
    but unused by this strategy.
    """
    if k < 1:
        raise FoldError("need at least one fold")
    counts = Counter(s.speaker for s in ds.samples)
    if len(counts) < k:
        raise FoldError(f"need at least {k} distinct speakers, found {len(counts)}")
    order = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    loads = [0] * k
    assign: dict[str, int] = {}
    for speaker, count in order:
        fold = min(range(k), key=lambda i: (loads[i], i))
        assign[speaker] = fold
        loads[fold] += count
    folds = tuple(
        tuple(sorted(spk for spk, f in assign.items() if f == fold)) for fold in range(k)
    )
    test_indices = tuple(
        tuple(i for i, s in enumerate(ds.samples) if assign[s.speaker] == fold) for fold in range(k)
    )
    train_indices = tuple(
        tuple(i for i, s in enumerate(ds.samples) if assign[s.speaker] != fold) for fold in range(k)
    )
    return FoldPlan(folds, train_indices, test_indices)


@dataclass(frozen=True, eq=False)
class Metrics:
    """Unweighted accuracy, weighted (= overall) accuracy, macro-F1, confusion.

    ``confusion[true][pred]`` counts; rows sum to the per-class test counts.
    """

    ua: float
    wa: float
    macro_f1: float
    confusion: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {"ua": self.ua, "wa": self.wa, "macro_f1": self.macro_f1}


def compute_metrics(
    labels: Sequence[EmotionClass | int], preds: Sequence[EmotionClass | int]
) -> Metrics:
    """UA (mean per-class recall), WA (overall accuracy), macro-F1.

    Per-class F1 is 0 when precision + recall is 0. Only classes present in
    ``labels`` enter the UA and macro-F1 means.
    """
    if len(labels) == 0:
        raise ValueError("empty input")
    if len(labels) != len(preds):
        raise ValueError(f"length mismatch: {len(labels)} labels vs {len(preds)} predictions")
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    p = np.asarray([int(v) for v in preds], dtype=np.int64)
    if y.min() < 0 or y.max() >= NUM_CLASSES or p.min() < 0 or p.max() >= NUM_CLASSES:
        raise ValueError("class index out of range")
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(confusion, (y, p), 1)
    row = confusion.sum(axis=1)
    col = confusion.sum(axis=0)
    diag = np.diag(confusion)
    present = row > 0
    recall = np.divide(diag, row, out=np.zeros(NUM_CLASSES), where=row > 0)
    precision = np.divide(diag, col, out=np.zeros(NUM_CLASSES), where=col > 0)
    pr_sum = precision + recall
    f1 = np.divide(2 * precision * recall, pr_sum, out=np.zeros(NUM_CLASSES), where=pr_sum > 0)
    confusion.flags.writeable = False
    return Metrics(
        ua=float(recall[present].mean()),
        wa=float(diag.sum() / len(y)),
        macro_f1=float(f1[present].mean()),
        confusion=confusion,
    )


@dataclass(frozen=True, eq=False)
class RunResult:
    """One fold x seed training run."""

    fold: int
    seed: int
    seed_index: int
    run_seed: int
    metrics: Metrics

    def to_json_dict(self) -> dict:
        return {
            "fold": self.fold,
            "seed": self.seed,
            "seed_index": self.seed_index,
            "run_seed": self.run_seed,
            **{k: float(v) for k, v in self.metrics.as_dict().items()},
            "confusion": self.metrics.confusion.tolist(),
        }


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Per-run metrics plus aggregates (mean over folds, then over seeds)."""

    runs: tuple[RunResult, ...]
    mean: dict[str, float]
    std: dict[str, float]

    @classmethod
    def from_runs(cls, runs: Sequence[RunResult]) -> "MetricsReport":
        runs = tuple(runs)
        if not runs:
            raise ValueError("no runs to aggregate")
        mean = {}
        std = {}
        seed_indices = sorted({r.seed_index for r in runs})
        for key in METRIC_KEYS:
            per_seed = [
                np.mean([getattr(r.metrics, key) for r in runs if r.seed_index == si])
                for si in seed_indices
            ]
            mean[key] = float(np.mean(per_seed))
            std[key] = float(np.std([getattr(r.metrics, key) for r in runs]))
        return cls(runs, mean, std)

    def to_json_dict(self) -> dict:
        return {
            "runs": [r.to_json_dict() for r in self.runs],
            "aggregate": {"mean": self.mean, "std": self.std},
        }

    def render_table(self) -> str:
        """Text table with UA/WA/F1 as percentages, two decimals."""
        lines = [
            f"{'run':<16}{'UA(%)':>9}{'WA(%)':>9}{'F1(%)':>9}",
            "-" * 43,
        ]
        for r in self.runs:
            name = f"fold{r.fold}/seed{r.seed}"
            m = r.metrics
            lines.append(f"{name:<16}{100 * m.ua:>9.2f}{100 * m.wa:>9.2f}{100 * m.macro_f1:>9.2f}")
        lines.append("-" * 43)
        lines.append(
            f"{'mean':<16}{100 * self.mean['ua']:>9.2f}{100 * self.mean['wa']:>9.2f}"
            f"{100 * self.mean['macro_f1']:>9.2f}"
        )
        lines.append(
            f"{'std':<16}{100 * self.std['ua']:>9.2f}{100 * self.std['wa']:>9.2f}"
            f"{100 * self.std['macro_f1']:>9.2f}"
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class RunSpec:
    """Identity of one fold x seed run and its derived RNG seed."""

    fold: int
    seed: int
    seed_index: int
    run_seed: int


def run_specs(k: int, seeds: Sequence[int]) -> list[RunSpec]:
    """All fold x seed combinations with their per-run seeds.

    Each run's RNG stream is derived by hashing (base seed, fold index,
    seed index), so reruns and parallel schedules agree exactly.
    """
    return [
        RunSpec(fold, seed_value, seed_index, derive_seed(seed_value, fold, seed_index))
        for seed_index, seed_value in enumerate(seeds)
        for fold in range(k)
    ]


def evaluate_model(model: Model, test_set: Dataset) -> Metrics:
    preds = predict(model, test_set)
    return compute_metrics([s.hard_label for s in test_set.samples], [p.label for p in preds])


def cross_validate(
    ds: Dataset, cfg: TrainConfig, k: int = 5, seeds: Sequence[int] = (0, 1, 2)
) -> MetricsReport:
    """Speaker-aware k-fold cross-validation repeated over random seeds."""
    if k < 2:
        raise FoldError("cross-validation needs k >= 2")
    if not seeds:
        raise ValueError("need at least one seed")
    plan = partition_speakers(ds, k)
    runs = []
    for spec in run_specs(k, seeds):
        train_ds = ds.subset(plan.train_indices[spec.fold])
        test_ds = ds.subset(plan.test_indices[spec.fold])
        try:
            model = train(train_ds, replace(cfg, seed=spec.run_seed))
        except Exception as exc:
            raise RuntimeError(f"training failed in fold {spec.fold}, seed {spec.seed}: {exc}") from exc
        runs.append(RunResult(spec.fold, spec.seed, spec.seed_index, spec.run_seed, evaluate_model(model, test_ds)))
    return MetricsReport.from_runs(runs)
