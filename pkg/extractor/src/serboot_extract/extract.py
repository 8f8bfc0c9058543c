"""Batch extraction: audio manifest -> feature files + dataset manifest.

Input is a JSON-Lines audio manifest, one object per utterance::

    {"audio_path": "wavs/u1.wav", "label": "angry", "speaker": "spk1",
     "origin": "target", "votes": [6, 2, 1, 1], "id": "u1"}

``votes`` and ``id`` are optional (the id defaults to the audio file's stem).
``audio_path`` is resolved relative to the audio manifest. Undecodable audio
is skipped with a warning and excluded from the output manifest; schema
problems fail the run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .audio import AudioDecodeError, load_audio
from .formats import (
    CLASS_NAMES,
    ORIGINS,
    manifest_entry,
    smooth_votes,
    write_feature_file,
    write_manifest,
)
from .langid import LanguageIdentifier
from .providers import EmbeddingProvider

log = logging.getLogger(__name__)

_REQUIRED = {"audio_path", "label", "speaker", "origin"}
_OPTIONAL = {"votes", "id"}


@dataclass(frozen=True)
class AudioManifestEntry:
    audio_path: Path
    label: str
    speaker: str
    origin: str
    sample_id: str
    votes: Optional[list[int]] = None


class AudioManifestError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def parse_audio_manifest(path: Path | str) -> list[AudioManifestEntry]:
    path = Path(path)
    entries: list[AudioManifestEntry] = []
    seen: set[str] = set()
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AudioManifestError(f"malformed JSON: {exc.msg}", line=line_no) from None
        if not isinstance(obj, dict):
            raise AudioManifestError("entry must be a JSON object", line=line_no)
        missing = _REQUIRED - set(obj)
        if missing:
            raise AudioManifestError(f"missing field(s): {', '.join(sorted(missing))}", line=line_no)
        unknown = set(obj) - _REQUIRED - _OPTIONAL
        if unknown:
            raise AudioManifestError(f"unknown field(s): {', '.join(sorted(unknown))}", line=line_no)
        if obj["label"] not in CLASS_NAMES:
            raise AudioManifestError(
                f"label must be one of {CLASS_NAMES}, got {obj['label']!r}", line=line_no
            )
        if obj["origin"] not in ORIGINS:
            raise AudioManifestError(
                f"origin must be one of {ORIGINS}, got {obj['origin']!r}", line=line_no
            )
        votes = obj.get("votes")
        if votes is not None and (
            not isinstance(votes, list)
            or len(votes) != 4
            or not all(isinstance(v, int) and v >= 0 for v in votes)
        ):
            raise AudioManifestError("votes must be 4 non-negative integers", line=line_no)
        audio_path = path.parent / obj["audio_path"]
        sample_id = obj.get("id") or audio_path.stem
        if sample_id in seen:
            raise AudioManifestError(f"duplicate id {sample_id!r}", line=line_no)
        seen.add(sample_id)
        entries.append(
            AudioManifestEntry(
                audio_path=audio_path,
                label=obj["label"],
                speaker=obj["speaker"],
                origin=obj["origin"],
                sample_id=sample_id,
                votes=votes,
            )
        )
    return entries


def extract(
    audio_manifest: Path | str,
    provider: EmbeddingProvider,
    out_dir: Path | str,
    identify_language: LanguageIdentifier,
    smoothing_alpha: float = 0.05,
) -> Path:
    """Run the provider over every decodable utterance and emit a dataset.

    Returns the written manifest path. Annotator votes, when present, become
    smoothed soft labels; a vote distribution whose winner is not the entry's
    label fails the run (bad data should not slip through silently).
    """
    out_dir = Path(out_dir)
    entries = parse_audio_manifest(audio_manifest)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)

    lines: list[str] = []
    kept = 0
    skipped = 0
    for entry in entries:
        try:
            waveform, sample_rate = load_audio(entry.audio_path)
        except AudioDecodeError as exc:
            log.warning("skipping %s: %s", entry.sample_id, exc)
            skipped += 1
            continue
        feats = np.asarray(provider.embed(waveform, sample_rate))
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] != provider.dim:
            raise RuntimeError(
                f"provider {provider.name!r} returned shape {feats.shape}, "
                f"expected (frames, {provider.dim})"
            )
        rel = f"features/{entry.sample_id}.bsf"
        write_feature_file(feats, out_dir / rel)
        soft = smooth_votes(entry.votes, smoothing_alpha) if entry.votes is not None else None
        language = identify_language(waveform, sample_rate)
        lines.append(
            manifest_entry(
                entry.sample_id, rel, entry.label, entry.speaker, language, entry.origin,
                soft_label=soft,
            )
        )
        kept += 1

    header = (
        f"extracted by serboot-extract: model={provider.name} dim={provider.dim}\n"
        "re-extraction reproduces this manifest up to any floating-point "
        "nondeterminism of the embedding model"
    )
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest_path, lines, header_comment=header)
    log.info("extracted %d utterance(s), skipped %d", kept, skipped)
    return manifest_path
