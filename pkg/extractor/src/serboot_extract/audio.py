"""Minimal WAV decoding: PCM 8/16/32-bit, any channel count, to float32 mono."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np


class AudioDecodeError(ValueError):
    pass


_WIDTH_DTYPES = {1: np.uint8, 2: np.dtype("<i2"), 4: np.dtype("<i4")}


def load_audio(path: Path | str) -> tuple[np.ndarray, int]:
    """Decode a PCM WAV file to a mono float32 waveform in [-1, 1].

    Returns (waveform, sample_rate). Raises :class:`AudioDecodeError` for
    anything that cannot be decoded; missing files raise OSError as usual.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            frames = wav.getnframes()
            raw = wav.readframes(frames)
    except (wave.Error, EOFError) as exc:
        raise AudioDecodeError(f"{path}: not a decodable WAV file ({exc})") from None
    if width not in _WIDTH_DTYPES:
        raise AudioDecodeError(f"{path}: unsupported sample width {width}")
    if frames == 0:
        raise AudioDecodeError(f"{path}: empty audio stream")
    data = np.frombuffer(raw, dtype=_WIDTH_DTYPES[width])
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    if width == 1:  # unsigned
        waveform = (data.astype(np.float32) - 128.0) / 128.0
    else:
        waveform = data.astype(np.float32) / float(2 ** (8 * width - 1))
    return waveform, rate
