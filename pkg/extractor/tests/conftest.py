import json
import math
import struct
import wave
from pathlib import Path

import numpy as np
import pytest


def write_sine_wav(path: Path, freq: float, seconds: float = 0.3, rate: int = 16000) -> None:
    t = np.arange(int(seconds * rate)) / rate
    signal = (0.6 * np.sin(2 * math.pi * freq * t) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(signal.tobytes())


@pytest.fixture
def audio_corpus(tmp_path):
    """Three short wavs plus an audio manifest describing them."""
    wav_dir = tmp_path / "wavs"
    wav_dir.mkdir()
    specs = [
        ("u1", 220.0, "angry", [6, 2, 1, 1], "spk1"),
        ("u2", 440.0, "happy", [1, 7, 1, 1], "spk2"),
        ("u3", 880.0, "neutral", None, "spk1"),
    ]
    lines = []
    for name, freq, label, votes, speaker in specs:
        write_sine_wav(wav_dir / f"{name}.wav", freq)
        entry = {
            "audio_path": f"wavs/{name}.wav",
            "label": label,
            "speaker": speaker,
            "origin": "target",
        }
        if votes is not None:
            entry["votes"] = votes
        lines.append(json.dumps(entry))
    manifest = tmp_path / "audio.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_feature_header(path: Path) -> tuple[int, int]:
    magic, rows, cols = struct.unpack_from("<4sII", path.read_bytes())
    assert magic == b"BSF1"
    return rows, cols
