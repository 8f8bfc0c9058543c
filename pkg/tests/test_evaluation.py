import numpy as np
import pytest

from serboot.data import Dataset, EmotionClass
from serboot.evaluation import (
    FoldError,
    MetricsReport,
    RunResult,
    compute_metrics,
    cross_validate,
    partition_speakers,
    run_specs,
)
from serboot.net import TrainConfig

from conftest import sample


def dataset_with_speaker_counts(counts: dict[str, int]) -> Dataset:
    samples = []
    i = 0
    for speaker, n in counts.items():
        for _ in range(n):
            samples.append(sample(f"u{i}", label=EmotionClass(i % 4), speaker=speaker))
            i += 1
    return Dataset.from_samples(samples)


class TestPartitionSpeakers:
    def test_greedy_example(self):
        ds = dataset_with_speaker_counts({"A": 4, "B": 3, "C": 2, "D": 1})
        plan = partition_speakers(ds, 2)
        assert set(plan.folds[0]) == {"A", "D"}
        assert set(plan.folds[1]) == {"B", "C"}
        assert len(plan.test_indices[0]) == len(plan.test_indices[1]) == 5

    def test_one_speaker_per_fold_when_symmetric(self):
        ds = dataset_with_speaker_counts({f"s{i}": 5 for i in range(4)})
        plan = partition_speakers(ds, 4)
        assert all(len(fold) == 1 for fold in plan.folds)

    def test_too_few_speakers(self):
        ds = dataset_with_speaker_counts({"A": 3, "B": 3})
        with pytest.raises(FoldError, match="at least 3 distinct speakers"):
            partition_speakers(ds, 3)

    def test_speaker_disjointness_random_datasets(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n_speakers = int(rng.integers(2, 10))
            counts = {f"s{i}": int(rng.integers(1, 8)) for i in range(n_speakers)}
            ds = dataset_with_speaker_counts(counts)
            k = int(rng.integers(2, n_speakers + 1))
            plan = partition_speakers(ds, k)
            for fold in range(k):
                train_speakers = {ds.samples[i].speaker for i in plan.train_indices[fold]}
                test_speakers = {ds.samples[i].speaker for i in plan.test_indices[fold]}
                assert not train_speakers & test_speakers
            all_test = [i for fold in plan.test_indices for i in fold]
            assert sorted(all_test) == list(range(len(ds)))


def brute_force_metrics(labels, preds):
    """Independent straightforward recomputation used as the oracle."""
    labels = [int(v) for v in labels]
    preds = [int(v) for v in preds]
    present = sorted(set(labels))
    recalls, f1s = [], []
    for c in present:
        tp = sum(1 for y, p in zip(labels, preds) if y == c and p == c)
        fn = sum(1 for y, p in zip(labels, preds) if y == c and p != c)
        fp = sum(1 for y, p in zip(labels, preds) if y != c and p == c)
        recall = tp / (tp + fn)
        precision = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        recalls.append(recall)
        f1s.append(f1)
    wa = sum(1 for y, p in zip(labels, preds) if y == p) / len(labels)
    return sum(recalls) / len(recalls), wa, sum(f1s) / len(f1s)


class TestComputeMetrics:
    def test_all_correct(self):
        m = compute_metrics([0, 1, 2, 3], [0, 1, 2, 3])
        assert m.ua == m.wa == m.macro_f1 == 1.0

    def test_worked_example(self):
        m = compute_metrics([0, 0, 1, 1], [0, 1, 1, 1])
        assert abs(m.wa - 0.75) < 1e-12
        assert abs(m.ua - 0.75) < 1e-12
        assert abs(m.macro_f1 - (2 / 3 + 0.8) / 2) < 1e-12

    def test_single_present_class(self):
        m = compute_metrics([2, 2, 2], [2, 2, 2])
        assert m.ua == 1.0
        assert m.macro_f1 == 1.0

    def test_confusion_row_sums_match_class_counts(self):
        labels = [0, 0, 1, 2, 2, 2, 3]
        preds = [0, 1, 1, 0, 2, 3, 3]
        m = compute_metrics(labels, preds)
        np.testing.assert_array_equal(m.confusion.sum(axis=1), [2, 1, 3, 1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            compute_metrics([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            compute_metrics([0, 1], [0])

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 40))
            labels = rng.integers(0, 4, size=n)
            preds = rng.integers(0, 4, size=n)
            m = compute_metrics(labels, preds)
            ua, wa, f1 = brute_force_metrics(labels, preds)
            assert abs(m.ua - ua) < 1e-12
            assert abs(m.wa - wa) < 1e-12
            assert abs(m.macro_f1 - f1) < 1e-12

    def test_ua_equals_wa_on_balanced_labels(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            per_class = int(rng.integers(1, 10))
            labels = np.repeat(np.arange(4), per_class)
            preds = rng.integers(0, 4, size=labels.size)
            m = compute_metrics(labels, preds)
            assert abs(m.ua - m.wa) < 1e-12


def separable_speaker_dataset():
    """Four speakers, each covering all classes, classes well separated."""
    rng = np.random.default_rng(5)
    samples = []
    i = 0
    for speaker in range(4):
        for rep in range(2):
            for cls in range(4):
                center = np.zeros(4)
                center[cls] = 3.0
                feats = (center + 0.1 * rng.normal(size=4)).reshape(1, 4)
                samples.append(sample(f"u{i}", feats, EmotionClass(cls), speaker=f"spk{speaker}"))
                i += 1
    return Dataset.from_samples(samples, name="sep-speakers")


class TestCrossValidate:
    def test_run_count(self):
        ds = separable_speaker_dataset()
        cfg = TrainConfig(hidden_dim=8, learning_rate=1e-2, epochs=5, batch_size=8, seed=0)
        report = cross_validate(ds, cfg, k=2, seeds=[0])
        assert len(report.runs) == 2

    def test_deterministic(self):
        ds = separable_speaker_dataset()
        cfg = TrainConfig(hidden_dim=8, learning_rate=1e-2, epochs=5, batch_size=8, seed=0)
        a = cross_validate(ds, cfg, k=2, seeds=[0, 1])
        b = cross_validate(ds, cfg, k=2, seeds=[0, 1])
        assert a.mean == b.mean
        assert a.std == b.std
        for ra, rb in zip(a.runs, b.runs):
            assert ra.metrics.as_dict() == rb.metrics.as_dict()

    def test_separable_dataset_scores_perfectly(self):
        ds = separable_speaker_dataset()
        cfg = TrainConfig(hidden_dim=8, learning_rate=1e-2, epochs=40, batch_size=8, seed=0)
        report = cross_validate(ds, cfg, k=2, seeds=[0])
        assert report.mean["wa"] == 1.0

    def test_aggregate_between_min_and_max(self):
        ds = separable_speaker_dataset()
        cfg = TrainConfig(hidden_dim=4, learning_rate=1e-2, epochs=3, batch_size=8, seed=0)
        report = cross_validate(ds, cfg, k=2, seeds=[0, 1, 2])
        for key in ("ua", "wa", "macro_f1"):
            values = [getattr(r.metrics, key) for r in report.runs]
            assert min(values) <= report.mean[key] <= max(values)

    def test_run_seed_derivation_is_stable(self):
        specs = run_specs(2, [0, 1])
        again = run_specs(2, [0, 1])
        assert [s.run_seed for s in specs] == [s.run_seed for s in again]
        assert len({s.run_seed for s in specs}) == len(specs)

    def test_render_table_shape(self):
        ds = separable_speaker_dataset()
        cfg = TrainConfig(hidden_dim=4, epochs=2, batch_size=8, seed=0)
        report = cross_validate(ds, cfg, k=2, seeds=[0])
        table = report.render_table()
        assert "UA(%)" in table and "mean" in table
        # two decimals, percent scale
        assert any("100.00" in line or "." in line for line in table.splitlines())
