import csv
import json

import numpy as np
import pytest

from serboot.cli import main
from serboot.data import Dataset, EmotionClass
from serboot.featio import write_dataset

from conftest import sample

BENCH_DOC = {
    "feature_dim": 8,
    "n_target": 48,
    "n_synthetic": 64,
    "speakers": 4,
    "annotators": 5,
    "base_seed": 1,
}

TRAIN_DOC = {"hidden_dim": 8, "learning_rate": 1e-2, "epochs": 3, "batch_size": 16, "seed": 0}


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    config = out / "bench.json"
    config.write_text(json.dumps(BENCH_DOC))
    assert main(["synthgen", "--config", str(config), "--out", str(out / "data")]) == 0
    return out / "data"


def run_config(bench_dir, out_dir, **overrides):
    doc = {
        "target_manifest": str(bench_dir / "target" / "manifest.jsonl"),
        "synthetic_manifest": str(bench_dir / "synthetic" / "manifest.jsonl"),
        "target_language": "tgt",
        "criterion": "chi2",
        "iterations": 1,
        "folds": 2,
        "seeds": [0],
        "train": dict(TRAIN_DOC),
        "out_dir": str(out_dir),
    }
    doc.update(overrides)
    return doc


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


class TestValidate:
    def test_generated_manifests_validate(self, bench_dir):
        assert main(["validate", str(bench_dir / "target" / "manifest.jsonl")]) == 0
        assert main(["validate", str(bench_dir / "synthetic" / "manifest.jsonl")]) == 0

    def test_duplicate_id_fails_with_violation_lines(self, tmp_path, capsys):
        ds = Dataset.from_samples([sample("x0"), sample("x1")])
        manifest = write_dataset(ds, tmp_path / "dup")
        lines = manifest.read_text().splitlines()
        lines.append(lines[0])
        manifest.write_text("\n".join(lines) + "\n")
        assert main(["validate", str(manifest)]) == 1
        out = capsys.readouterr().out
        assert "duplicate id x0" in out

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.jsonl")]) == 2


class TestSynthgen:
    def test_reproducible_bytes(self, tmp_path):
        config = tmp_path / "bench.json"
        config.write_text(json.dumps(BENCH_DOC))
        assert main(["synthgen", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        assert main(["synthgen", "--config", str(config), "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "target" / "manifest.jsonl").read_bytes()
        b = (tmp_path / "b" / "target" / "manifest.jsonl").read_bytes()
        assert a == b
        fa = sorted((tmp_path / "a" / "synthetic" / "features").iterdir())
        fb = sorted((tmp_path / "b" / "synthetic" / "features").iterdir())
        assert [p.name for p in fa] == [p.name for p in fb]
        assert all(x.read_bytes() == y.read_bytes() for x, y in zip(fa, fb))

    def test_provenance_written(self, bench_dir):
        provenance = json.loads((bench_dir / "provenance.json").read_text())
        assert len(provenance) == BENCH_DOC["n_synthetic"]

    def test_invalid_config_exits_1(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"feature_dim": 2}))
        assert main(["synthgen", "--config", str(config), "--out", str(tmp_path / "x")]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_key_exits_1(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"n_targets": 10}))
        assert main(["synthgen", "--config", str(config), "--out", str(tmp_path / "x")]) == 1
        assert "unknown" in capsys.readouterr().err


class TestBaseline:
    def test_writes_report_files(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out))
        assert main(["baseline", "--config", cfg_path]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["command"] == "baseline"
        assert len(report["runs"]) == 2  # 2 folds x 1 seed
        assert "config_hash" in report and report["version"]
        assert (out / "report.md").exists()

    def test_idempotent_outputs(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out))
        assert main(["baseline", "--config", cfg_path]) == 0
        first = (out / "report.json").read_bytes()
        assert main(["baseline", "--config", cfg_path]) == 0
        assert (out / "report.json").read_bytes() == first

    def test_bad_schema_fails_before_compute(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "out"
        doc = run_config(bench_dir, out)
        doc["iteration"] = 3  # typo for "iterations"
        cfg_path = write_config(tmp_path / "run.json", doc)
        assert main(["baseline", "--config", cfg_path]) == 1
        assert "unknown config key" in capsys.readouterr().err
        assert not out.exists()

    def test_augmented_baseline_runs(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        doc = run_config(bench_dir, out, augment={"kind": "noise", "sigma": 0.1, "copies": 1})
        cfg_path = write_config(tmp_path / "run.json", doc)
        assert main(["baseline", "--config", cfg_path]) == 0


class TestBootstrap:
    def test_zero_iterations_matches_baseline_metrics(self, bench_dir, tmp_path):
        base_out = tmp_path / "base"
        boot_out = tmp_path / "boot"
        base_cfg = write_config(tmp_path / "base.json", run_config(bench_dir, base_out))
        boot_cfg = write_config(tmp_path / "boot.json", run_config(bench_dir, boot_out, iterations=0))
        assert main(["baseline", "--config", base_cfg]) == 0
        assert main(["bootstrap", "--config", boot_cfg]) == 0
        base = json.loads((base_out / "report.json").read_text())
        boot = json.loads((boot_out / "report.json").read_text())
        for brun, run in zip(base["runs"], boot["runs"]):
            assert brun["ua"] == run["ua"]
            assert brun["wa"] == run["wa"]
            assert brun["macro_f1"] == run["macro_f1"]
        assert base["aggregate"]["mean"] == boot["aggregate"]["mean"]

    def test_rounds_and_per_iteration_outputs(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out, iterations=2))
        assert main(["bootstrap", "--config", cfg_path]) == 0
        report = json.loads((out / "report.json").read_text())
        assert [row["iteration"] for row in report["per_iteration"]] == [0, 1, 2]
        rounds = sorted((out / "rounds").iterdir())
        assert len(rounds) == 4  # 2 runs x 2 iterations
        doc = json.loads(rounds[0].read_text())
        assert {"fold", "seed", "iteration", "kept", "total", "selected_ids"} <= set(doc)
        assert sum(doc["kl_histogram"]["counts"]) == doc["total"]

    def test_language_filter_reported(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out))
        assert main(["bootstrap", "--config", cfg_path]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["language_filter"] == {"target": "tgt", "kept": 64, "dropped": 0}

    def test_filter_to_empty_pool_warns_and_matches_baseline(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "out"
        doc = run_config(bench_dir, out, target_language="zz", criterion="chi1")
        cfg_path = write_config(tmp_path / "run.json", doc)
        assert main(["bootstrap", "--config", cfg_path]) == 0
        assert "no synthesized samples left" in capsys.readouterr().err
        report = json.loads((out / "report.json").read_text())
        per_it = report["per_iteration"]
        assert per_it[0]["mean"] == per_it[-1]["mean"]

    def test_chi2_without_soft_labels_is_actionable(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        tgt = Dataset.from_samples(
            [sample(f"t{i}", rng.normal(size=(1, 4)), EmotionClass(i % 4), speaker=f"s{i % 2}")
             for i in range(8)]
        )
        syn = Dataset.from_samples(
            [sample(f"p{i}", rng.normal(size=(1, 4)), EmotionClass(i % 4), origin="synthetic")
             for i in range(8)]
        )
        tgt_manifest = write_dataset(tgt, tmp_path / "tgt")
        syn_manifest = write_dataset(syn, tmp_path / "syn")
        doc = {
            "target_manifest": str(tgt_manifest),
            "synthetic_manifest": str(syn_manifest),
            "criterion": "chi2",
            "iterations": 1,
            "folds": 2,
            "seeds": [0],
            "train": dict(TRAIN_DOC),
            "out_dir": str(tmp_path / "out"),
        }
        cfg_path = write_config(tmp_path / "run.json", doc)
        assert main(["bootstrap", "--config", cfg_path]) == 1
        err = capsys.readouterr().err
        assert "chi2" in err and "soft_label" in err and "chi1" in err

    def test_flag_overrides_win(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out, iterations=2))
        assert main(["bootstrap", "--config", cfg_path, "--iterations", "1", "--criterion", "chi1"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["iterations"] == 1
        assert report["config"]["criterion"] == "chi1"

    def test_parallel_jobs_match_sequential(self, bench_dir, tmp_path):
        seq_out = tmp_path / "seq"
        par_out = tmp_path / "par"
        seq_cfg = write_config(tmp_path / "seq.json", run_config(bench_dir, seq_out))
        par_cfg = write_config(tmp_path / "par.json", run_config(bench_dir, par_out))
        assert main(["bootstrap", "--config", seq_cfg]) == 0
        assert main(["bootstrap", "--config", par_cfg, "--jobs", "2"]) == 0
        seq = json.loads((seq_out / "report.json").read_text())
        par = json.loads((par_out / "report.json").read_text())
        assert seq["runs"] == par["runs"]


class TestSweep:
    def test_outputs_and_oracle_dominance(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out, iterations=1))
        assert main(["sweep", "--config", cfg_path]) == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        fixed = [r for r in rows if r["iteration"] != "oracle"]
        oracle = next(r for r in rows if r["iteration"] == "oracle")
        assert [r["iteration"] for r in fixed] == ["0", "1"]
        for key in ("ua", "wa", "macro_f1"):
            assert all(float(oracle[key]) >= float(r[key]) for r in fixed)
        assert (out / "sweep_runs.csv").exists()

    def test_zero_iterations_single_row(self, bench_dir, tmp_path):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out, iterations=0))
        assert main(["sweep", "--config", cfg_path]) == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["iteration"] for r in rows] == ["0", "oracle"]
        for key in ("ua", "wa", "macro_f1"):
            assert rows[0][key] == rows[1][key]


class TestReport:
    def test_rerenders_markdown(self, bench_dir, tmp_path, capsys):
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path / "run.json", run_config(bench_dir, out))
        assert main(["bootstrap", "--config", cfg_path]) == 0
        capsys.readouterr()
        assert main(["report", str(out / "report.json"), "--out", str(tmp_path / "r.md")]) == 0
        printed = capsys.readouterr().out
        assert "| run |" in printed
        assert (tmp_path / "r.md").read_text() == printed.rstrip("\n") + "\n" or (tmp_path / "r.md").exists()

    def test_rejects_non_report(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{}")
        assert main(["report", str(path)]) == 1

    def test_missing_report_file_exits_2(self, tmp_path):
        assert main(["report", str(tmp_path / "missing.json")]) == 2
