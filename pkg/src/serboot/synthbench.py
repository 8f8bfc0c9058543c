"""Deterministic synthetic benchmark for the selection pipeline.

Generates a small "target" corpus and a larger "synthesized" pool with a
controlled domain gap: a clean fraction of the pool follows the target
distribution exactly, while the rest is mean-shifted (features drift toward a
different emotion's region, the way a translation can distort emotional
content) and a sub-fraction of those additionally carries a wrong hard label
(translation destroying the emotion outright). Hidden provenance tags let
tests score how well selection recovers the clean part.

Also provides feature-space versions of two classic augmentation baselines
(noise jitter, emotional+neutral frame concatenation) for comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (
    Dataset,
    EmotionClass,
    LabeledSample,
    NUM_CLASSES,
    ORIGIN_SYNTHETIC,
    ORIGIN_TARGET,
    SoftLabel,
    make_soft_label,
)
from .net import TrainConfig

#: Language tag carried by every generated sample (the pool models data that
#: already passed language filtering).
BENCH_LANGUAGE = "tgt"

#: Provenance tags.
CLEAN = "clean"
SHIFTED = "shifted"
LABEL_CORRUPTED = "label-corrupted"

#: Probability that a simulated annotator votes off the assigned label.
ANNOTATOR_DISSENT = 0.2

#: Dissent rate for label-corrupted samples: when the emotional content was
#: destroyed, annotators disagree far more, so these soft labels are flatter
#: (while still having the assigned wrong label as their argmax).
CORRUPTED_DISSENT = 0.45

#: How strongly a dissenting annotator's choice follows the sample's actual
#: position among the class means (0 would make dissent uniform).
ANNOTATOR_POSITION_SHARPNESS = 4.0

#: Fraction of the drift direction's norm lying in the span of the class
#: means. The in-span part pushes drifted samples toward other emotions'
#: regions, which is what makes training on them harmful.
DRIFT_SPAN_FRACTION = 1.0

#: Each class's noise is stretched by (1 + amplitude) along a few random
#: directions of its own. Class-specific covariance shapes bend the optimal
#: decision boundaries, so they cannot be estimated well from a handful of
#: samples per class; that is what makes additional clean data valuable.
#: The transforms are rescaled so the average per-dimension variance is
#: CLASS_STRETCH_EXCESS (1.0 would pin it exactly to sigma^2).
CLASS_STRETCH_DIRS = 3
CLASS_STRETCH_AMPLITUDE = 1.5
CLASS_STRETCH_EXCESS = 1.3


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark generator settings; everything is determined by ``base_seed``.

    ``separation`` in (0, 1] controls the pairwise angle of the four unit-norm
    class means (1.0 = maximal, a regular simplex). ``shift_magnitude`` is the
    absolute length of the drift applied to the corrupted fraction, along the
    direction from one randomly chosen class mean toward another.
    """

    feature_dim: int = 16
    frames: int = 1
    separation: float = 1.0
    sigma: float = 0.5
    n_target: int = 160
    n_synthetic: int = 800
    clean_fraction: float = 0.5
    shift_magnitude: float = 2.0  # 4 * sigma at the defaults
    label_corruption_rate: float = 0.5
    annotators: int = 10
    speakers: int = 8
    smoothing_alpha: float = 0.05
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.feature_dim < 5:
            raise ValueError("feature_dim must be >= 5 (mean construction needs 5 directions)")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not 0.0 < self.separation <= 1.0:
            raise ValueError("separation must be in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.sigma == 0 and self.separation == 0:
            raise ValueError("degenerate config: sigma 0 with coincident class means")
        if self.n_target < 1 or self.n_synthetic < 1:
            raise ValueError("sample counts must be >= 1")
        if not 0.0 <= self.clean_fraction <= 1.0:
            raise ValueError("clean_fraction must be in [0, 1]")
        if self.shift_magnitude < 0:
            raise ValueError("shift_magnitude must be >= 0")
        if not 0.0 <= self.label_corruption_rate <= 1.0:
            raise ValueError("label_corruption_rate must be in [0, 1]")
        if self.annotators < 1:
            raise ValueError("annotators must be >= 1")
        if self.speakers < 1:
            raise ValueError("speakers must be >= 1")
        if not 0.0 <= self.smoothing_alpha < 1.0:
            raise ValueError("smoothing_alpha must be in [0, 1)")


def default_train_config(seed: int = 0) -> TrainConfig:
    """Classifier settings sized for the benchmark (fast, desk-scale runs)."""
    return TrainConfig(
        hidden_dim=64,
        learning_rate=1e-2,
        epochs=90,
        batch_size=16,
        seed=seed,
    )


def _class_means(cfg: BenchConfig, rng: np.random.Generator) -> np.ndarray:
    """Four unit-norm class means with equal pairwise angles, randomly oriented.

    Built from a regular simplex blended with a common direction:
    cos(angle) runs from ~1 (separation -> 0) to -1/3 (separation = 1).
    """
    d = cfg.feature_dim
    basis, _ = np.linalg.qr(rng.standard_normal((d, NUM_CLASSES + 1)))
    e = basis[:, :NUM_CLASSES].T            # 4 orthonormal vectors
    u = basis[:, NUM_CLASSES]               # a 5th, orthogonal to all of them
    centered = e - e.mean(axis=0)
    simplex = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    a = np.sqrt(cfg.separation)
    b = np.sqrt(1.0 - cfg.separation)
    return a * simplex + b * u


def _simulate_votes(
    rng: np.random.Generator,
    label: EmotionClass,
    annotators: int,
    position: np.ndarray,
    means: np.ndarray,
    dissent_rate: float = ANNOTATOR_DISSENT,
) -> np.ndarray:
    """Annotator votes for one sample.

    Each annotator votes the assigned label with probability 1 - dissent_rate.
    A dissenting annotator picks among the other classes with probabilities
    following how much the sample's (pre-drift) position leans toward each of
    them, so soft labels carry real secondary-emotion signal. Votes are nudged
    afterwards so the assigned label always wins the (lowest-index tie) argmax.
    """
    scores = ANNOTATOR_POSITION_SHARPNESS * (means @ position)
    scores[int(label)] = -np.inf
    weights = np.exp(scores - scores.max())
    weights /= weights.sum()
    votes = np.zeros(NUM_CLASSES, dtype=np.int64)
    dissent = rng.random(annotators) < dissent_rate
    picks = rng.choice(NUM_CLASSES, size=annotators, p=weights)
    for is_dissent, pick in zip(dissent, picks):
        votes[pick if is_dissent else int(label)] += 1
    while int(np.argmax(votes)) != int(label):
        top = int(np.argmax(votes))
        votes[top] -= 1
        votes[int(label)] += 1
    return votes


def _make_sample(
    rng: np.random.Generator,
    cfg: BenchConfig,
    sample_id: str,
    mean: np.ndarray,
    noise_transform: np.ndarray,
    shift: np.ndarray,
    label: EmotionClass,
    speaker: str,
    origin: str,
    means: np.ndarray,
    dissent_rate: float = ANNOTATOR_DISSENT,
) -> LabeledSample:
    # Annotators react to the pre-drift signal; the drift is applied afterwards
    # (the way translation damage happens after the source was labeled).
    noise = rng.standard_normal((cfg.frames, cfg.feature_dim)) @ noise_transform
    base = mean + cfg.sigma * noise
    votes = _simulate_votes(rng, label, cfg.annotators, base.mean(axis=0), means, dissent_rate)
    return LabeledSample(
        id=sample_id,
        features=base + shift,
        hard_label=label,
        speaker=speaker,
        language=BENCH_LANGUAGE,
        origin=origin,
        soft_label=make_soft_label(votes, cfg.smoothing_alpha),
    )


def _stretch_transforms(cfg: BenchConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-class symmetric noise transforms, stretched along a few random
    directions and normalized so the average per-dimension variance stays 1
    (sigma keeps its meaning as the overall within-class scale)."""
    d = cfg.feature_dim
    k = CLASS_STRETCH_DIRS
    a = CLASS_STRETCH_AMPLITUDE
    scale = math.sqrt((d - k + k * (1.0 + a) ** 2) / d) / math.sqrt(CLASS_STRETCH_EXCESS)
    transforms = np.empty((NUM_CLASSES, d, d))
    for c in range(NUM_CLASSES):
        raw = rng.standard_normal((d, k))
        q, _ = np.linalg.qr(raw)
        transforms[c] = (np.eye(d) + a * (q @ q.T)) / scale
    return transforms


def generate(cfg: BenchConfig) -> tuple[Dataset, Dataset, dict[str, str]]:
    """Generate (target dataset, synthesized pool, provenance map).

    Both datasets are class-balanced (class = index mod 4) with speakers
    assigned round-robin over class-complete blocks, so every speaker covers
    all four classes and speaker-disjoint folds stay class-balanced. The
    provenance map tags each synthesized sample clean / shifted /
    label-corrupted; it is for scoring selection quality only and must not be
    fed to the pipeline.
    """
    rng = np.random.default_rng(cfg.base_seed)
    means = _class_means(cfg, rng)

    # Drift direction: fixed random unit vector with a controlled split between
    # the class-mean span and its orthogonal complement.
    coeffs = rng.standard_normal(NUM_CLASSES)
    u_span = coeffs @ means
    u_span = u_span / np.linalg.norm(u_span)
    raw = rng.standard_normal(cfg.feature_dim)
    u_perp = raw - means.T @ np.linalg.lstsq(means.T, raw, rcond=None)[0]
    norm_perp = np.linalg.norm(u_perp)
    if norm_perp > 1e-12:
        u_perp = u_perp / norm_perp
        alpha = DRIFT_SPAN_FRACTION
        direction = alpha * u_span + math.sqrt(1.0 - alpha * alpha) * u_perp
    else:
        direction = u_span
    shift_vec = cfg.shift_magnitude * direction
    no_shift = np.zeros(cfg.feature_dim)

    stretches = _stretch_transforms(cfg, rng)

    target_samples = []
    for i in range(cfg.n_target):
        cls = EmotionClass(i % NUM_CLASSES)
        spk = (i // NUM_CLASSES) % cfg.speakers
        target_samples.append(
            _make_sample(
                rng, cfg, f"tgt_{i:05d}", means[cls], stretches[cls], no_shift, cls,
                f"tgt_spk{spk}", ORIGIN_TARGET, means,
            )
        )
    d_tgt = Dataset(tuple(target_samples), cfg.feature_dim, name="bench-target")

    n = cfg.n_synthetic
    n_clean = round(cfg.clean_fraction * n)
    perm = rng.permutation(n)
    clean_set = set(perm[:n_clean].tolist())
    corrupted = perm[n_clean:]
    n_bad = round(cfg.label_corruption_rate * len(corrupted))
    bad_set = set(corrupted[:n_bad].tolist())

    syn_samples = []
    provenance: dict[str, str] = {}
    for i in range(n):
        true_cls = EmotionClass(i % NUM_CLASSES)
        spk = (i // NUM_CLASSES) % cfg.speakers
        sample_id = f"syn_{i:05d}"
        dissent = ANNOTATOR_DISSENT
        if i in clean_set:
            tag, shift, label = CLEAN, no_shift, true_cls
        elif i in bad_set:
            wrong = int(rng.integers(NUM_CLASSES - 1))
            wrong = wrong if wrong < int(true_cls) else wrong + 1
            tag, shift, label = LABEL_CORRUPTED, shift_vec, EmotionClass(wrong)
            dissent = CORRUPTED_DISSENT
        else:
            tag, shift, label = SHIFTED, shift_vec, true_cls
        syn_samples.append(
            _make_sample(
                rng, cfg, sample_id, means[true_cls], stretches[true_cls], shift, label,
                f"syn_spk{spk}", ORIGIN_SYNTHETIC, means, dissent,
            )
        )
        provenance[sample_id] = tag
    d_syn = Dataset(tuple(syn_samples), cfg.feature_dim, name="bench-synthetic")
    return d_tgt, d_syn, provenance


def noise_augment(ds: Dataset, sigma_n: float, copies: int, seed: int = 0) -> Dataset:
    """Append ``copies`` Gaussian-jittered versions of every sample.

    Labels are unchanged and new ids get a ``#noise{j}`` suffix. The output
    holds the originals first, then the jittered copies in sample order.
    """
    if sigma_n < 0:
        raise ValueError("sigma_n must be >= 0")
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if copies == 0:
        return ds
    rng = np.random.default_rng(seed)
    extra = []
    for s in ds.samples:
        for j in range(copies):
            jittered = s.features.astype(np.float64) + sigma_n * rng.standard_normal(s.features.shape)
            extra.append(
                LabeledSample(
                    id=f"{s.id}#noise{j}",
                    features=jittered,
                    hard_label=s.hard_label,
                    speaker=s.speaker,
                    language=s.language,
                    origin=s.origin,
                    soft_label=s.soft_label,
                )
            )
    return Dataset(ds.samples + tuple(extra), ds.feature_dim, name=ds.name)


def copypaste_augment(ds: Dataset, copies: int, seed: int) -> Dataset:
    """Concatenate each emotional sample with a random neutral sample's frames.

    Feature-space simplification of waveform copy-paste augmentation: for
    every non-neutral sample, ``copies`` new samples are appended whose frame
    sequence is the emotional frames followed by a (seeded, with-replacement)
    random neutral sample's frames, keeping the emotional label.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if copies == 0:
        return ds
    neutral = [s for s in ds.samples if s.hard_label == EmotionClass.NEUTRAL]
    if not neutral:
        raise ValueError("no neutral samples to paste from")
    rng = np.random.default_rng(seed)
    extra = []
    for s in ds.samples:
        if s.hard_label == EmotionClass.NEUTRAL:
            continue
        for j in range(copies):
            partner = neutral[int(rng.integers(len(neutral)))]
            combined = np.vstack([s.features, partner.features])
            extra.append(
                LabeledSample(
                    id=f"{s.id}#cp{j}",
                    features=combined,
                    hard_label=s.hard_label,
                    speaker=s.speaker,
                    language=s.language,
                    origin=s.origin,
                    soft_label=s.soft_label,
                )
            )
    return Dataset(ds.samples + tuple(extra), ds.feature_dim, name=ds.name)


def selection_quality(round_, provenance: dict[str, str]) -> tuple[float | None, float | None]:
    """Precision and recall of a selection round against the clean tag.

    Precision is None for an empty selection; recall is None when the
    provenance map contains no clean samples at all.
    """
    missing = [sid for sid in round_.selected_ids if sid not in provenance]
    if missing:
        raise ValueError(f"provenance does not cover selected ids, e.g. {missing[:3]}")
    clean = {sid for sid, tag in provenance.items() if tag == CLEAN}
    selected = set(round_.selected_ids)
    hits = len(clean & selected)
    precision = hits / len(selected) if selected else None
    recall = hits / len(clean) if clean else None
    return precision, recall
