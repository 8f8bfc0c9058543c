"""JSON run configuration: schema validation, flag overrides, hashing.

A run config is a single JSON document checked into the experiment directory;
command-line flags override individual fields. Unknown keys are rejected
outright so typos fail before any compute. Paths are resolved relative to the
config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .bootstrap import CRITERIA
from .net import ConfigError, TrainConfig
from .synthbench import BenchConfig
from .util import config_hash

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_BENCH_KEYS = {f.name for f in fields(BenchConfig)}

_RUN_KEYS = {
    "target_manifest",
    "synthetic_manifest",
    "target_language",
    "criterion",
    "iterations",
    "folds",
    "seeds",
    "train",
    "out_dir",
    "augment",
}

_AUGMENT_KEYS = {"kind", "sigma", "copies", "seed"}
_AUGMENT_KINDS = ("noise", "copypaste")


@dataclass(frozen=True)
class AugmentConfig:
    """Optional feature-space augmentation applied to each training split."""

    kind: str
    sigma: float = 0.1
    copies: int = 1
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    target_manifest: Path
    out_dir: Path
    synthetic_manifest: Optional[Path] = None
    target_language: Optional[str] = None
    criterion: str = "chi2"
    iterations: int = 2
    folds: int = 5
    seeds: tuple[int, ...] = (0, 1, 2)
    train: TrainConfig = TrainConfig()
    augment: Optional[AugmentConfig] = None


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    _require(not unknown, f"unknown {where} key(s): {', '.join(sorted(unknown))}")


def load_config_file(path: Path | str) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    _require(isinstance(doc, dict), f"{path}: top level must be a JSON object")
    return doc


def parse_run_config(doc: dict, base_dir: Path) -> RunConfig:
    """Validate a config document and build a RunConfig.

    ``base_dir`` anchors relative paths (normally the config file's parent).
    """
    _check_keys(doc, _RUN_KEYS, "config")
    _require("target_manifest" in doc, "config is missing 'target_manifest'")
    _require("out_dir" in doc, "config is missing 'out_dir'")
    for key in ("target_manifest", "synthetic_manifest", "target_language", "out_dir", "criterion"):
        if key in doc and doc[key] is not None:
            _require(isinstance(doc[key], str), f"config key {key!r} must be a string")
    criterion = doc.get("criterion", "chi2")
    _require(criterion in CRITERIA, f"criterion must be one of {CRITERIA}, got {criterion!r}")
    iterations = doc.get("iterations", 2)
    _require(isinstance(iterations, int) and not isinstance(iterations, bool) and iterations >= 0,
             "iterations must be an integer >= 0")
    folds = doc.get("folds", 5)
    _require(isinstance(folds, int) and not isinstance(folds, bool) and folds >= 2,
             "folds must be an integer >= 2")
    seeds_raw = doc.get("seeds", [0, 1, 2])
    _require(
        isinstance(seeds_raw, list)
        and len(seeds_raw) >= 1
        and all(isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw),
        "seeds must be a non-empty list of integers",
    )
    train_doc = doc.get("train", {})
    _require(isinstance(train_doc, dict), "config key 'train' must be an object")
    _check_keys(train_doc, _TRAIN_KEYS, "train")
    train_cfg = TrainConfig(**train_doc)  # TrainConfig validates values

    augment = None
    if doc.get("augment") is not None:
        aug_doc = doc["augment"]
        _require(isinstance(aug_doc, dict), "config key 'augment' must be an object")
        _check_keys(aug_doc, _AUGMENT_KEYS, "augment")
        _require("kind" in aug_doc, "augment config is missing 'kind'")
        _require(aug_doc["kind"] in _AUGMENT_KINDS, f"augment kind must be one of {_AUGMENT_KINDS}")
        augment = AugmentConfig(**aug_doc)

    return RunConfig(
        target_manifest=(base_dir / doc["target_manifest"]),
        out_dir=(base_dir / doc["out_dir"]),
        synthetic_manifest=(base_dir / doc["synthetic_manifest"]) if doc.get("synthetic_manifest") else None,
        target_language=doc.get("target_language"),
        criterion=criterion,
        iterations=iterations,
        folds=folds,
        seeds=tuple(seeds_raw),
        train=train_cfg,
        augment=augment,
    )


def apply_overrides(cfg: RunConfig, args: Any) -> RunConfig:
    """Apply command-line flag overrides (flags win over the config file)."""
    updates: dict[str, Any] = {}
    if getattr(args, "criterion", None) is not None:
        _require(args.criterion in CRITERIA, f"criterion must be one of {CRITERIA}")
        updates["criterion"] = args.criterion
    if getattr(args, "iterations", None) is not None:
        _require(args.iterations >= 0, "iterations must be >= 0")
        updates["iterations"] = args.iterations
    if getattr(args, "folds", None) is not None:
        _require(args.folds >= 2, "folds must be >= 2")
        updates["folds"] = args.folds
    if getattr(args, "seeds", None) is not None:
        updates["seeds"] = _parse_seed_list(args.seeds)
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = Path(args.out)
    return replace(cfg, **updates) if updates else cfg


def _parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {text!r}") from None
    _require(len(seeds) >= 1, "--seeds must name at least one seed")
    return seeds


def effective_config_dict(cfg: RunConfig) -> dict:
    """JSON-compatible view of the effective config, for reports and hashing."""
    doc: dict[str, Any] = {
        "target_manifest": str(cfg.target_manifest),
        "synthetic_manifest": str(cfg.synthetic_manifest) if cfg.synthetic_manifest else None,
        "target_language": cfg.target_language,
        "criterion": cfg.criterion,
        "iterations": cfg.iterations,
        "folds": cfg.folds,
        "seeds": list(cfg.seeds),
        "train": {f.name: getattr(cfg.train, f.name) for f in fields(TrainConfig)},
        "out_dir": str(cfg.out_dir),
    }
    if cfg.augment is not None:
        doc["augment"] = {
            "kind": cfg.augment.kind,
            "sigma": cfg.augment.sigma,
            "copies": cfg.augment.copies,
            "seed": cfg.augment.seed,
        }
    return doc


def run_config_hash(cfg: RunConfig) -> str:
    return config_hash(effective_config_dict(cfg))


def parse_bench_config(doc: dict) -> BenchConfig:
    _check_keys(doc, _BENCH_KEYS, "benchmark config")
    try:
        return BenchConfig(**doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
