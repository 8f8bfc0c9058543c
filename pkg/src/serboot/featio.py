"""Bit-exact on-disk formats: binary feature matrices and JSONL manifests.

Feature file layout (little-endian throughout):

    bytes 0-3   magic "BSF1"
    bytes 4-7   rows (uint32, >= 1)
    bytes 8-11  cols (uint32, >= 1)
    bytes 12-   rows*cols IEEE-754 binary32 values, row-major

Manifests are JSON Lines, one sample per line, with keys
``id, feature_path, label, soft_label (optional), speaker, language, origin``.
``feature_path`` is resolved relative to the manifest's directory. Blank lines
and lines starting with ``#`` are ignored, so writers may include a header
comment.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import (
    Dataset,
    EmotionClass,
    LabeledSample,
    NUM_CLASSES,
    ORIGINS,
    SoftLabel,
    validate_dataset,
)
from .util import atomic_write_bytes, atomic_write_text

log = logging.getLogger(__name__)

MAGIC = b"BSF1"
_HEADER = struct.Struct("<4sII")

REQUIRED_KEYS = frozenset({"id", "feature_path", "label", "speaker", "language", "origin"})
OPTIONAL_KEYS = frozenset({"soft_label"})


class FeatureFileError(ValueError):
    """Malformed feature file. ``code`` is a stable machine-readable tag:
    one of ``bad_magic``, ``bad_header``, ``truncated``, ``non_finite``."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ManifestError(ValueError):
    """Manifest that fails the schema or whose dataset breaks an invariant."""

    def __init__(self, message: str, line: Optional[int] = None, violations: Sequence[str] = ()):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.violations = tuple(violations)


def encode_matrix(matrix: np.ndarray) -> bytes:
    """Serialize one matrix to the binary section format (header + payload)."""
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"matrix must be 2-D with at least one row and column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]) + payload


def decode_matrix(buf: bytes, offset: int = 0, context: str = "") -> tuple[np.ndarray, int]:
    """Parse one binary section from ``buf`` starting at ``offset``.

    Returns the (read-only float32) matrix and the offset just past it.
    """
    where = f"{context}: " if context else ""
    if len(buf) - offset < _HEADER.size:
        if len(buf) - offset >= 4 and buf[offset : offset + 4] != MAGIC:
            raise FeatureFileError("bad_magic", f"{where}bad magic {buf[offset:offset + 4]!r}")
        raise FeatureFileError("truncated", f"{where}shorter than the 16-byte header")
    magic, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FeatureFileError("bad_magic", f"{where}bad magic {magic!r}")
    if rows < 1 or cols < 1:
        raise FeatureFileError("bad_header", f"{where}header claims {rows}x{cols} matrix")
    end = offset + _HEADER.size + rows * cols * 4
    if len(buf) < end:
        raise FeatureFileError(
            "truncated", f"{where}payload needs {end - offset} bytes, only {len(buf) - offset} present"
        )
    mat = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=offset + _HEADER.size)
    mat = mat.reshape(rows, cols).copy()
    if not np.all(np.isfinite(mat)):
        raise FeatureFileError("non_finite", f"{where}payload contains non-finite values")
    mat.flags.writeable = False
    return mat, end


def write_feature_file(matrix: np.ndarray, path: Path | str) -> None:
    """Write one T x d matrix; ``read_feature_file`` restores it bit-for-bit."""
    atomic_write_bytes(Path(path), encode_matrix(matrix))


def read_feature_file(path: Path | str) -> np.ndarray:
    """Read a feature file written by :func:`write_feature_file`.

    Raises :class:`FeatureFileError` on malformed content; the file must
    contain exactly one section with no trailing bytes.
    """
    path = Path(path)
    raw = path.read_bytes()
    mat, end = decode_matrix(raw, 0, context=str(path))
    if end != len(raw):
        raise FeatureFileError("truncated", f"{path}: {len(raw) - end} unexpected trailing bytes")
    return mat


def _parse_entry(obj: object, line_no: int) -> dict:
    if not isinstance(obj, dict):
        raise ManifestError("entry must be a JSON object", line=line_no)
    keys = set(obj)
    missing = REQUIRED_KEYS - keys
    if missing:
        raise ManifestError(f"missing field(s): {', '.join(sorted(missing))}", line=line_no)
    unknown = keys - REQUIRED_KEYS - OPTIONAL_KEYS
    if unknown:
        raise ManifestError(f"unknown field(s): {', '.join(sorted(unknown))}", line=line_no)
    for key in ("id", "feature_path", "label", "speaker", "language", "origin"):
        if not isinstance(obj[key], str):
            raise ManifestError(f"field {key!r} must be a string", line=line_no)
    if obj["origin"] not in ORIGINS:
        raise ManifestError(f"origin must be one of {ORIGINS}, got {obj['origin']!r}", line=line_no)
    soft = obj.get("soft_label")
    if soft is not None:
        if not isinstance(soft, list) or len(soft) != NUM_CLASSES or not all(
            isinstance(x, (int, float)) for x in soft
        ):
            raise ManifestError(f"soft_label must be a list of {NUM_CLASSES} numbers", line=line_no)
    return obj


def load_manifest(
    manifest_path: Path | str,
    expected_language: Optional[str] = None,
    name: Optional[str] = None,
) -> Dataset:
    """Load a manifest and its feature files into a validated Dataset.

    Samples keep manifest order. When ``expected_language`` is given, entries
    with a different language tag are dropped (their feature files are not
    read) and the kept/dropped counts are logged. Schema problems raise
    :class:`ManifestError` naming the offending line; dataset-invariant
    violations raise a :class:`ManifestError` carrying the violation list.
    """
    path = Path(manifest_path)
    text = path.read_text(encoding="utf-8")
    samples: list[LabeledSample] = []
    dim: Optional[int] = None
    dropped = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"malformed JSON: {exc.msg}", line=line_no) from None
        entry = _parse_entry(obj, line_no)
        if expected_language is not None and entry["language"] != expected_language:
            dropped += 1
            continue
        try:
            label = EmotionClass.from_name(entry["label"])
        except ValueError as exc:
            raise ManifestError(str(exc), line=line_no) from None
        feature_path = path.parent / entry["feature_path"]
        try:
            features = read_feature_file(feature_path)
        except FileNotFoundError:
            raise ManifestError(f"feature file not found: {entry['feature_path']}", line=line_no) from None
        except FeatureFileError as exc:
            raise ManifestError(f"feature file {entry['feature_path']}: {exc}", line=line_no) from None
        if dim is None:
            dim = features.shape[1]
        elif features.shape[1] != dim:
            raise ManifestError(
                f"feature dim mismatch: file has {features.shape[1]} columns, dataset has {dim}",
                line=line_no,
            )
        soft = entry.get("soft_label")
        try:
            soft_label = SoftLabel(np.asarray(soft, dtype=np.float64)) if soft is not None else None
        except ValueError as exc:
            raise ManifestError(f"bad soft_label: {exc}", line=line_no) from None
        samples.append(
            LabeledSample(
                id=entry["id"],
                features=features,
                hard_label=label,
                speaker=entry["speaker"],
                language=entry["language"],
                origin=entry["origin"],
                soft_label=soft_label,
            )
        )
    ds = Dataset(tuple(samples), feature_dim=dim if dim is not None else 0, name=name or path.stem)
    violations = validate_dataset(ds)
    if violations:
        raise ManifestError(f"{len(violations)} validation violation(s)", violations=violations)
    if expected_language is not None:
        log.info("language filter %r: kept %d, dropped %d", expected_language, len(samples), dropped)
    return ds


def filter_by_language(ds: Dataset, target: str) -> Dataset:
    """Keep exactly the samples tagged with the target language, in order."""
    kept = tuple(s for s in ds.samples if s.language == target)
    log.info("language filter %r: kept %d, dropped %d", target, len(kept), len(ds) - len(kept))
    return Dataset(kept, ds.feature_dim, name=ds.name)


def write_dataset(
    ds: Dataset,
    out_dir: Path | str,
    manifest_name: str = "manifest.jsonl",
    features_dirname: str = "features",
    header_comment: Optional[str] = None,
) -> Path:
    """Write a dataset as feature files plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    features_dir = out_dir / features_dirname
    features_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    if header_comment:
        lines.extend(f"# {row}" for row in header_comment.splitlines())
    for s in ds.samples:
        if "/" in s.id or "\\" in s.id:
            raise ValueError(f"sample id {s.id!r} is not filesystem-safe")
        rel = f"{features_dirname}/{s.id}.bsf"
        write_feature_file(s.features, out_dir / rel)
        entry: dict = {
            "id": s.id,
            "feature_path": rel,
            "label": s.hard_label.canonical_name,
        }
        if s.soft_label is not None:
            entry["soft_label"] = s.soft_label.tolist()
        entry.update({"speaker": s.speaker, "language": s.language, "origin": s.origin})
        lines.append(json.dumps(entry))
    manifest_path = out_dir / manifest_name
    atomic_write_text(manifest_path, "\n".join(lines) + "\n")
    return manifest_path
