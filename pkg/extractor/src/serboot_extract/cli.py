"""Command-line interface for the extractor.

    serboot-extract extract --model logmel --audio-manifest m.jsonl --out dir
    serboot-extract models

Exit codes: 0 success, 1 domain/validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .extract import extract
from .langid import make_identifier
from .providers import ModelUnavailableError, available_models, create_provider


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="serboot-extract", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed audio files and write features + manifest")
    p.add_argument("--model", required=True, help="embedding model name (see `models`)")
    p.add_argument("--audio-manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--language", default=None, help="constant language tag for every utterance")
    p.add_argument("--lang-id", default=None, help="language-id model (e.g. whisper)")
    p.add_argument("--layer", default="final", help="upstream layer to pool features from")
    p.add_argument("--alpha", type=float, default=0.05, help="soft-label smoothing for votes")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("models", help="list embedding models and their feature dims")
    p.set_defaults(func=cmd_models)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModelUnavailableError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def cmd_extract(args: argparse.Namespace) -> int:
    provider = create_provider(args.model, layer=args.layer)
    identifier = make_identifier(args.lang_id, args.language)
    manifest = extract(
        args.audio_manifest, provider, args.out, identifier, smoothing_alpha=args.alpha
    )
    print(f"manifest written to {manifest}")
    return 0


def cmd_models(args: argparse.Namespace) -> int:
    for name, dim in sorted(available_models().items()):
        print(f"{name:24s} dim={dim}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
