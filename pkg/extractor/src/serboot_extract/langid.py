"""Language identification pass for the extraction pipeline.

The pipeline tags every utterance with a language so the downstream consumer
can filter out failed translations. Two built-ins:

* a constant tag (``--language de``) for corpora whose language is known;
* ``whisper``, which runs OpenAI Whisper's language detector when the package
  and weights are installed locally.

Without either, utterances are tagged ``und`` (BCP-47 undetermined).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .providers import ModelUnavailableError

LanguageIdentifier = Callable[[np.ndarray, int], str]

UNDETERMINED = "und"


def constant_identifier(tag: str) -> LanguageIdentifier:
    def identify(waveform: np.ndarray, sample_rate: int) -> str:
        return tag

    return identify


def whisper_identifier(model_size: str = "base") -> LanguageIdentifier:
    try:
        import whisper  # type: ignore[import-not-found]
    except ImportError:
        raise ModelUnavailableError(
            "language id model 'whisper' needs the openai-whisper package and "
            "local weights (pip install openai-whisper)"
        ) from None
    model = whisper.load_model(model_size)

    def identify(waveform: np.ndarray, sample_rate: int) -> str:
        if sample_rate != 16000:
            # Whisper expects 16 kHz input; crude linear resample is enough
            # for language detection.
            target = int(round(waveform.size * 16000 / sample_rate))
            waveform = np.interp(
                np.linspace(0, waveform.size - 1, target), np.arange(waveform.size), waveform
            ).astype(np.float32)
        audio = whisper.pad_or_trim(waveform.astype(np.float32))
        mel = whisper.log_mel_spectrogram(audio).to(model.device)
        _, probs = model.detect_language(mel)
        return max(probs, key=probs.get)

    return identify


def make_identifier(lang_id: str | None, language: str | None) -> LanguageIdentifier:
    """Resolve the CLI options into one identifier callable."""
    if language is not None and lang_id is not None:
        raise ValueError("pass either --language or --lang-id, not both")
    if language is not None:
        return constant_identifier(language)
    if lang_id is None:
        return constant_identifier(UNDETERMINED)
    if lang_id == "whisper":
        return whisper_identifier()
    raise ValueError(f"unknown language id model {lang_id!r}; known: ['whisper']")
