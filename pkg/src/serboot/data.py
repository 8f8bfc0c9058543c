"""Core domain types: emotion classes, soft labels, samples, and datasets.

Everything here is immutable after construction, so datasets and samples can
be shared freely across parallel fold/seed workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Optional, Sequence

import numpy as np

NUM_CLASSES = 4

ORIGIN_TARGET = "target"
ORIGIN_SYNTHETIC = "synthetic"
ORIGINS = (ORIGIN_TARGET, ORIGIN_SYNTHETIC)

#: Tolerance for soft-label normalization.
SOFT_LABEL_SUM_TOL = 1e-9


class EmotionClass(IntEnum):
    """The four emotion categories, in a fixed index order.

    The index<->name mapping is part of the on-disk contract and must never
    be reordered.
    """

    ANGRY = 0
    HAPPY = 1
    NEUTRAL = 2
    SAD = 3

    @property
    def canonical_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "EmotionClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown emotion class {name!r}") from None


CLASS_NAMES = tuple(c.canonical_name for c in EmotionClass)


def argmax_label(dist: Sequence[float] | np.ndarray) -> EmotionClass:
    """Return the class with the highest score; ties go to the lowest index.

    The lowest-index tie rule keeps selection and prediction deterministic
    regardless of how the scores were produced.
    """
    arr = np.asarray(dist, dtype=np.float64)
    if arr.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} scores, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite score in distribution")
    return EmotionClass(int(np.argmax(arr)))


@dataclass(frozen=True, eq=False)
class SoftLabel:
    """A 4-class probability distribution, typically annotator votes after smoothing."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64, copy=True)
        if probs.shape != (NUM_CLASSES,):
            raise ValueError(f"soft label must have {NUM_CLASSES} entries, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("soft label has non-finite entries")
        if np.any(probs < 0):
            raise ValueError("soft label has negative entries")
        total = float(probs.sum())
        if abs(total - 1.0) > SOFT_LABEL_SUM_TOL:
            raise ValueError(f"soft label sums to {total!r}, expected 1 within {SOFT_LABEL_SUM_TOL}")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def argmax(self) -> EmotionClass:
        return argmax_label(self.probs)

    def tolist(self) -> list[float]:
        return [float(p) for p in self.probs]


def make_soft_label(votes: Sequence[int] | np.ndarray, alpha: float) -> SoftLabel:
    """Turn annotator vote counts into a smoothed probability distribution.

    probs = (1 - alpha) * votes / sum(votes) + alpha / 4

    ``alpha`` in [0, 1) is the smoothing mass spread uniformly over the four
    classes; every output entry is therefore at least alpha / 4.
    """
    v = np.asarray(votes, dtype=np.float64)
    if v.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} vote counts, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError("votes must be non-negative counts")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha!r}")
    total = float(v.sum())
    if total <= 0:
        raise ValueError("no annotator votes")
    return SoftLabel((1.0 - alpha) * v / total + alpha / NUM_CLASSES)


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One utterance: a T x d feature matrix plus labels and provenance.

    ``origin`` records whether the sample came from the target-language corpus
    or from the synthesized (translated) pool. Features are stored as float32,
    matching the on-disk format; numeric code widens to float64 internally.
    """

    id: str
    features: np.ndarray
    hard_label: EmotionClass
    speaker: str
    language: str
    origin: str
    soft_label: Optional[SoftLabel] = None

    def __post_init__(self) -> None:
        feats = np.array(self.features, dtype=np.float32, copy=True, order="C")
        if feats.ndim != 2:
            raise ValueError(f"sample {self.id!r}: features must be 2-D (frames x dim)")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        if not isinstance(self.hard_label, EmotionClass):
            object.__setattr__(self, "hard_label", EmotionClass(self.hard_label))
        if self.origin not in ORIGINS:
            raise ValueError(f"sample {self.id!r}: origin must be one of {ORIGINS}, got {self.origin!r}")

    @property
    def frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable ordered collection of samples sharing one feature dimension."""

    samples: tuple[LabeledSample, ...]
    feature_dim: int
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], name: str = "") -> "Dataset":
        samples = tuple(samples)
        if not samples:
            raise ValueError("cannot infer feature_dim from an empty sample list")
        return cls(samples, feature_dim=samples[0].dim, name=name)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> LabeledSample:
        return self.samples[index]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.samples)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(sorted({s.speaker for s in self.samples}))

    def subset(self, indices: Sequence[int], name: str = "") -> "Dataset":
        """New dataset with the given sample indices, in the given order."""
        picked = tuple(self.samples[i] for i in indices)
        return Dataset(picked, self.feature_dim, name=name or self.name)

    def subset_by_ids(self, ids: Sequence[str], name: str = "") -> "Dataset":
        """New dataset keeping samples whose id is in ``ids``, preserving order."""
        wanted = set(ids)
        picked = tuple(s for s in self.samples if s.id in wanted)
        return Dataset(picked, self.feature_dim, name=name or self.name)


def merge_datasets(a: Dataset, b: Dataset, name: str = "") -> Dataset:
    """Concatenate two datasets; ids must not collide and dims must match."""
    if len(b) == 0:
        return Dataset(a.samples, a.feature_dim, name=name or a.name)
    if len(a) and a.feature_dim != b.feature_dim:
        raise ValueError(f"feature dim mismatch in union: {a.feature_dim} vs {b.feature_dim}")
    dup = set(a.ids) & set(b.ids)
    if dup:
        raise ValueError(f"duplicate ids in union: {sorted(dup)[:5]}")
    return Dataset(a.samples + b.samples, b.feature_dim, name=name or f"{a.name}+{b.name}")


def validate_dataset(ds: Dataset) -> list[str]:
    """Check dataset invariants and return human-readable violations.

    Violations are data, not exceptions: an empty list means the dataset is
    well formed. Each entry names the offending sample and the broken rule.
    """
    violations: list[str] = []
    seen: set[str] = set()
    for s in ds.samples:
        if s.id in seen:
            violations.append(f"duplicate id {s.id}")
        else:
            seen.add(s.id)
        if s.frames < 1:
            violations.append(f"sample {s.id}: empty feature matrix")
        if s.dim != ds.feature_dim:
            violations.append(f"sample {s.id}: feature dim {s.dim} != dataset dim {ds.feature_dim}")
        if not np.all(np.isfinite(s.features)):
            violations.append(f"sample {s.id}: non-finite feature values")
        if s.soft_label is not None:
            soft_argmax = s.soft_label.argmax()
            if soft_argmax != s.hard_label:
                violations.append(
                    f"sample {s.id}: hard label {s.hard_label.canonical_name} "
                    f"!= soft-label argmax {soft_argmax.canonical_name}"
                )
    return violations
