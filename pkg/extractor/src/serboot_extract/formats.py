"""Writers for the serboot on-disk interchange formats.

Implemented against the published format contract, independently of the
serboot package itself:

* feature files: magic ``BSF1``, rows/cols as little-endian uint32, then a
  row-major IEEE-754 binary32 payload;
* manifests: JSON Lines with keys ``id, feature_path, label,
  soft_label (optional), speaker, language, origin``; ``#`` lines are
  comments.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"BSF1"
_HEADER = struct.Struct("<4sII")

CLASS_NAMES = ("angry", "happy", "neutral", "sad")
ORIGINS = ("target", "synthetic")


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def write_feature_file(matrix: np.ndarray, path: Path) -> None:
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite feature values")
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    atomic_write_bytes(Path(path), _HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]) + payload)


def smooth_votes(votes: list[int], alpha: float) -> list[float]:
    """(1 - alpha) * votes / sum(votes) + alpha / 4, the soft-label convention."""
    v = np.asarray(votes, dtype=np.float64)
    if v.shape != (4,) or np.any(v < 0):
        raise ValueError("votes must be 4 non-negative counts")
    total = float(v.sum())
    if total <= 0:
        raise ValueError("votes must not be all zero")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must be in [0, 1)")
    return [float(x) for x in (1.0 - alpha) * v / total + alpha / 4.0]


def manifest_entry(
    sample_id: str,
    feature_path: str,
    label: str,
    speaker: str,
    language: str,
    origin: str,
    soft_label: list[float] | None = None,
) -> str:
    if label not in CLASS_NAMES:
        raise ValueError(f"label must be one of {CLASS_NAMES}, got {label!r}")
    if origin not in ORIGINS:
        raise ValueError(f"origin must be one of {ORIGINS}, got {origin!r}")
    entry: dict = {"id": sample_id, "feature_path": feature_path, "label": label}
    if soft_label is not None:
        top = max(range(4), key=lambda i: (soft_label[i], -i))
        if CLASS_NAMES[top] != label:
            raise ValueError(
                f"sample {sample_id!r}: soft label argmax {CLASS_NAMES[top]!r} "
                f"does not match label {label!r}"
            )
        entry["soft_label"] = soft_label
    entry.update({"speaker": speaker, "language": language, "origin": origin})
    return json.dumps(entry)


def write_manifest(path: Path, lines: list[str], header_comment: str | None = None) -> None:
    rows = []
    if header_comment:
        rows.extend(f"# {line}" for line in header_comment.splitlines())
    rows.extend(lines)
    atomic_write_bytes(Path(path), ("\n".join(rows) + "\n").encode("utf-8"))
