"""Command-line interface.

Commands::

    serboot validate  <manifest>
    serboot baseline  --config run.json [overrides]
    serboot bootstrap --config run.json [overrides]
    serboot sweep     --config run.json [overrides]   # iterations = max step
    serboot synthgen  [--config bench.json] --out DIR
    serboot report    <report.json> [--out report.md]

Exit codes: 0 success, 1 domain or validation error, 2 I/O error. Outputs are
written atomically and contain no timestamps, so identical inputs produce
identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bootstrap import run_pipeline
from .config import (
    AugmentConfig,
    RunConfig,
    apply_overrides,
    effective_config_dict,
    load_config_file,
    parse_bench_config,
    parse_run_config,
    run_config_hash,
)
from .data import Dataset
from .evaluation import (
    Metrics,
    MetricsReport,
    RunResult,
    RunSpec,
    partition_speakers,
    run_specs,
)
from .featio import ManifestError, filter_by_language, load_manifest, write_dataset
from .net import ConfigError, TrainConfig
from .synthbench import BenchConfig, copypaste_augment, generate, noise_augment
from .util import atomic_write_text, config_hash


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ManifestError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="serboot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"serboot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest and its feature files")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=cmd_validate)

    for name, func, help_text in (
        ("baseline", cmd_baseline, "speaker-aware cross-validation on target data only"),
        ("bootstrap", cmd_bootstrap, "iterative selection over the synthesized pool, then retraining"),
        ("sweep", cmd_sweep, "metrics at every iteration 0..N plus the best-step-per-run oracle"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=True, help="run config JSON")
        p.add_argument("--criterion", choices=("chi1", "chi2"), default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--folds", type=int, default=None)
        p.add_argument("--seeds", type=str, default=None, help="comma-separated, e.g. 0,1,2")
        p.add_argument("--jobs", type=int, default=1, help="parallel fold x seed workers")
        p.add_argument("--out", type=Path, default=None, help="override the config's out_dir")
        p.set_defaults(func=func)

    p = sub.add_parser("synthgen", help="generate the synthetic benchmark datasets")
    p.add_argument("--config", type=Path, default=None, help="benchmark config JSON (defaults apply)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("report", help="re-render a report.json as a text table")
    p.add_argument("report", type=Path)
    p.add_argument("--out", type=Path, default=None, help="also write a markdown file")
    p.set_defaults(func=cmd_report)

    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        ds = load_manifest(args.manifest)
    except ManifestError as exc:
        if exc.violations:
            for violation in exc.violations:
                print(violation)
        else:
            print(str(exc))
        return 1
    print(f"OK: {len(ds)} samples, feature dim {ds.feature_dim}")
    return 0


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    doc = load_config_file(args.config)
    cfg = parse_run_config(doc, base_dir=args.config.parent)
    return apply_overrides(cfg, args)


def _augment_split(ds: Dataset, augment: Optional[AugmentConfig]) -> Dataset:
    if augment is None:
        return ds
    if augment.kind == "noise":
        return noise_augment(ds, augment.sigma, augment.copies, seed=augment.seed)
    return copypaste_augment(ds, augment.copies, seed=augment.seed)


def _pipeline_worker(task: tuple) -> tuple:
    spec, train_ds, test_ds, d_syn, iterations, criterion, train_cfg = task
    result = run_pipeline(train_ds, d_syn, iterations, criterion, train_cfg, eval_split=test_ds)
    rounds = [r.to_json_dict() for r in result.rounds]
    return spec, result.metrics, rounds, result.warnings


def _run_all(
    cfg: RunConfig,
    d_tgt: Dataset,
    d_syn: Optional[Dataset],
    iterations: int,
    jobs: int,
) -> list[tuple[RunSpec, tuple[Metrics, ...], list[dict], tuple[str, ...]]]:
    """Run the pipeline for every fold x seed; order is fixed by run_specs."""
    plan = partition_speakers(d_tgt, cfg.folds)
    tasks = []
    for spec in run_specs(cfg.folds, cfg.seeds):
        train_ds = _augment_split(d_tgt.subset(plan.train_indices[spec.fold]), cfg.augment)
        test_ds = d_tgt.subset(plan.test_indices[spec.fold])
        train_cfg = replace(cfg.train, seed=spec.run_seed)
        tasks.append((spec, train_ds, test_ds, d_syn, iterations, cfg.criterion, train_cfg))
    if jobs <= 1:
        return [_pipeline_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_pipeline_worker, tasks))


def _iteration_reports(
    results: Sequence[tuple], iterations: int
) -> list[MetricsReport]:
    """One aggregated report per iteration 0..iterations."""
    reports = []
    for i in range(iterations + 1):
        runs = [
            RunResult(spec.fold, spec.seed, spec.seed_index, spec.run_seed, metrics[i])
            for spec, metrics, _, _ in results
        ]
        reports.append(MetricsReport.from_runs(runs))
    return reports


def _render_markdown(doc: dict) -> str:
    lines = [
        f"# serboot {doc['command']} report",
        "",
        f"- tool version: {doc['version']}",
        f"- config hash: `{doc['config_hash']}`",
        "",
    ]
    if doc.get("per_iteration"):
        lines += ["## Aggregate by iteration", "", "| iteration | UA(%) | WA(%) | F1(%) |", "|---|---:|---:|---:|"]
        for row in doc["per_iteration"]:
            m = row["mean"]
            lines.append(
                f"| {row['iteration']} | {100 * m['ua']:.2f} | {100 * m['wa']:.2f} | {100 * m['macro_f1']:.2f} |"
            )
        lines.append("")
    lines += ["## Runs", "", "| run | UA(%) | WA(%) | F1(%) |", "|---|---:|---:|---:|"]
    for run in doc["runs"]:
        lines.append(
            f"| fold{run['fold']}/seed{run['seed']} | {100 * run['ua']:.2f} "
            f"| {100 * run['wa']:.2f} | {100 * run['macro_f1']:.2f} |"
        )
    agg = doc["aggregate"]
    lines.append(
        f"| **mean** | **{100 * agg['mean']['ua']:.2f}** | **{100 * agg['mean']['wa']:.2f}** "
        f"| **{100 * agg['mean']['macro_f1']:.2f}** |"
    )
    lines.append(
        f"| std | {100 * agg['std']['ua']:.2f} | {100 * agg['std']['wa']:.2f} "
        f"| {100 * agg['std']['macro_f1']:.2f} |"
    )
    lines.append("")
    return "\n".join(lines)


def _write_report(out_dir: Path, doc: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "report.json", json.dumps(doc, indent=2) + "\n")
    atomic_write_text(out_dir / "report.md", _render_markdown(doc))


def _base_doc(command: str, cfg: RunConfig) -> dict:
    return {
        "tool": "serboot",
        "version": __version__,
        "command": command,
        "config_hash": run_config_hash(cfg),
        "config": effective_config_dict(cfg),
    }


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    d_tgt = load_manifest(cfg.target_manifest)
    results = _run_all(cfg, d_tgt, None, iterations=0, jobs=args.jobs)
    report = _iteration_reports(results, 0)[0]
    doc = _base_doc("baseline", cfg)
    doc.update(report.to_json_dict())
    _write_report(cfg.out_dir, doc)
    print(report.render_table())
    print(f"report written to {cfg.out_dir / 'report.json'}")
    return 0


def _load_synthetic(cfg: RunConfig) -> tuple[Optional[Dataset], Optional[dict]]:
    if cfg.synthetic_manifest is None:
        raise ConfigError("this command needs 'synthetic_manifest' in the config")
    d_syn = load_manifest(cfg.synthetic_manifest)
    filter_info = None
    if cfg.target_language is not None:
        before = len(d_syn)
        d_syn = filter_by_language(d_syn, cfg.target_language)
        filter_info = {"target": cfg.target_language, "kept": len(d_syn), "dropped": before - len(d_syn)}
        if len(d_syn) == 0:
            print(
                f"warning: no synthesized samples left after language filter "
                f"{cfg.target_language!r}; result will equal the baseline",
                file=sys.stderr,
            )
    if cfg.criterion == "chi2" and any(s.soft_label is None for s in d_syn.samples):
        n_missing = sum(1 for s in d_syn.samples if s.soft_label is None)
        raise ConfigError(
            f"criterion chi2 needs a soft_label on every synthesized sample, but "
            f"{n_missing} of {len(d_syn)} lack one; add soft labels to the manifest "
            f"or run with --criterion chi1"
        )
    return d_syn, filter_info


def cmd_bootstrap(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    d_tgt = load_manifest(cfg.target_manifest)
    d_syn, filter_info = _load_synthetic(cfg)
    results = _run_all(cfg, d_tgt, d_syn, iterations=cfg.iterations, jobs=args.jobs)

    reports = _iteration_reports(results, cfg.iterations)
    final = reports[-1]
    doc = _base_doc("bootstrap", cfg)
    doc["language_filter"] = filter_info
    doc["per_iteration"] = [
        {"iteration": i, "mean": r.mean, "std": r.std} for i, r in enumerate(reports)
    ]
    doc["runs"] = []
    for spec, metrics, _, warnings in results:
        entry = {
            "fold": spec.fold,
            "seed": spec.seed,
            "seed_index": spec.seed_index,
            "run_seed": spec.run_seed,
            **{k: float(v) for k, v in metrics[-1].as_dict().items()},
            "iterations": [
                {"iteration": i, **{k: float(v) for k, v in m.as_dict().items()}}
                for i, m in enumerate(metrics)
            ],
            "warnings": list(warnings),
        }
        doc["runs"].append(entry)
    doc["aggregate"] = {"mean": final.mean, "std": final.std}

    rounds_dir = cfg.out_dir / "rounds"
    rounds_dir.mkdir(parents=True, exist_ok=True)
    for spec, _, rounds, _ in results:
        for rnd in rounds:
            rnd_doc = {"fold": spec.fold, "seed": spec.seed, **rnd}
            path = rounds_dir / f"fold{spec.fold}_seed{spec.seed}_iter{rnd['iteration']}.json"
            atomic_write_text(path, json.dumps(rnd_doc, indent=2) + "\n")
    _write_report(cfg.out_dir, doc)
    print(final.render_table())
    base_f1 = reports[0].mean["macro_f1"]
    final_f1 = final.mean["macro_f1"]
    print(f"macro-F1: {100 * base_f1:.2f} at iteration 0 -> {100 * final_f1:.2f} at iteration {cfg.iterations}")
    print(f"report written to {cfg.out_dir / 'report.json'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    d_tgt = load_manifest(cfg.target_manifest)
    d_syn, filter_info = _load_synthetic(cfg)
    max_iterations = cfg.iterations
    results = _run_all(cfg, d_tgt, d_syn, iterations=max_iterations, jobs=args.jobs)
    reports = _iteration_reports(results, max_iterations)

    # Oracle: per run, the best value over iterations (per metric), aggregated
    # the same way as the fixed-iteration rows. By construction it dominates
    # every fixed-iteration aggregate.
    oracle_runs = [
        RunResult(
            spec.fold,
            spec.seed,
            spec.seed_index,
            spec.run_seed,
            Metrics(
                ua=max(m.ua for m in metrics),
                wa=max(m.wa for m in metrics),
                macro_f1=max(m.macro_f1 for m in metrics),
                confusion=metrics[-1].confusion,
            ),
        )
        for spec, metrics, _, _ in results
    ]
    oracle = MetricsReport.from_runs(oracle_runs)

    lines = ["iteration,ua,wa,macro_f1"]
    for i, report in enumerate(reports):
        lines.append(
            f"{i},{report.mean['ua']:.6f},{report.mean['wa']:.6f},{report.mean['macro_f1']:.6f}"
        )
    lines.append(f"oracle,{oracle.mean['ua']:.6f},{oracle.mean['wa']:.6f},{oracle.mean['macro_f1']:.6f}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(cfg.out_dir / "sweep.csv", "\n".join(lines) + "\n")

    run_lines = ["fold,seed,iteration,ua,wa,macro_f1"]
    for spec, metrics, _, _ in results:
        for i, m in enumerate(metrics):
            run_lines.append(f"{spec.fold},{spec.seed},{i},{m.ua:.6f},{m.wa:.6f},{m.macro_f1:.6f}")
    atomic_write_text(cfg.out_dir / "sweep_runs.csv", "\n".join(run_lines) + "\n")

    print("\n".join(lines))
    print(f"sweep written to {cfg.out_dir / 'sweep.csv'}")
    return 0


def cmd_synthgen(args: argparse.Namespace) -> int:
    if args.config is not None:
        bench = parse_bench_config(load_config_file(args.config))
    else:
        bench = BenchConfig()
    d_tgt, d_syn, provenance = generate(bench)
    out = Path(args.out)
    target_manifest = write_dataset(d_tgt, out / "target")
    synthetic_manifest = write_dataset(d_syn, out / "synthetic")
    bench_doc = {f: getattr(bench, f) for f in bench.__dataclass_fields__}
    atomic_write_text(
        out / "bench_config.json",
        json.dumps({"tool": "serboot", "version": __version__, "config_hash": config_hash(bench_doc), **bench_doc}, indent=2) + "\n",
    )
    atomic_write_text(out / "provenance.json", json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    print(f"target:    {target_manifest}  ({len(d_tgt)} samples)")
    print(f"synthetic: {synthetic_manifest}  ({len(d_syn)} samples)")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    if "runs" not in doc or "aggregate" not in doc:
        raise ValueError(f"{args.report}: not a serboot report (missing runs/aggregate)")
    markdown = _render_markdown(doc)
    print(markdown)
    if args.out is not None:
        atomic_write_text(args.out, markdown)
    return 0


if __name__ == "__main__":
    sys.exit(main())
