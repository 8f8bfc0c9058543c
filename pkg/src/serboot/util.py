"""Small shared helpers: deterministic seeds, hashing, atomic file writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

_SEED_DOMAIN = b"serboot-seed:"


def derive_seed(*parts: Any) -> int:
    """Derive a 64-bit RNG seed from a tuple of values.

    Stable across processes and Python versions (unlike the builtin ``hash``),
    so runs identified by (base seed, fold index, seed index) are reproducible.
    """
    payload = ":".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(_SEED_DOMAIN + payload).digest()
    return int.from_bytes(digest[:8], "little")


def canonical_json(doc: Any) -> str:
    """Serialize with sorted keys and no whitespace, for hashing and diffs."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc: Any) -> str:
    """Short stable fingerprint of a JSON-compatible configuration."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()[:12]


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write a file via temp-then-rename so readers never see partial output."""
    path = Path(path)
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


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
