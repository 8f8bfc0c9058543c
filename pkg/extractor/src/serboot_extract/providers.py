"""Pluggable speech embedding providers.

A provider turns a mono waveform into a T x d feature matrix. The registry
ships a self-contained log-mel filterbank extractor (always available) and
entries for the usual pretrained upstream encoders with their hidden sizes;
the pretrained ones need their respective packages and weights installed
locally. ``register_provider`` lets applications plug in anything else.
"""

from __future__ import annotations

import importlib
import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np


class ModelUnavailableError(RuntimeError):
    """The named embedding model is not installed in this environment."""


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        """Return a (frames, dim) float matrix for one utterance."""
        ...


class LogMelProvider:
    """Classic log-mel filterbank features (25 ms frames, 10 ms hop).

    Self-contained and deterministic; useful as a lightweight upstream and for
    exercising the pipeline without pretrained weights.
    """

    def __init__(self, n_mels: int = 40, layer: str = "final"):
        self.name = "logmel"
        self.dim = n_mels

    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        frame = max(int(round(0.025 * sample_rate)), 2)
        hop = max(int(round(0.010 * sample_rate)), 1)
        x = np.asarray(waveform, dtype=np.float64)
        if x.size < frame:
            x = np.pad(x, (0, frame - x.size))
        n_frames = 1 + (x.size - frame) // hop
        window = np.hanning(frame)
        idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
        power = np.abs(np.fft.rfft(x[idx] * window, axis=1)) ** 2
        bank = _mel_filterbank(self.dim, frame, sample_rate)
        feats = np.log(np.maximum(power @ bank.T, 1e-10))
        return feats.astype(np.float32)


def _hz_to_mel(hz: np.ndarray | float) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank(n_mels: int, frame: int, sample_rate: int) -> np.ndarray:
    n_bins = frame // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(20.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(center - lo, 1e-9)
        down = (hi - freqs) / max(hi - center, 1e-9)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


@dataclass(frozen=True)
class PretrainedSpec:
    """How to reach a pretrained upstream: import target and hidden size."""

    name: str
    dim: int
    module: str
    hint: str


#: The usual upstream encoders and their final-layer hidden sizes.
PRETRAINED_SPECS = {
    "emotion2vec": PretrainedSpec("emotion2vec", 768, "funasr", "pip install funasr"),
    "wavlm-large": PretrainedSpec("wavlm-large", 1024, "transformers", "pip install transformers torch"),
    "xls-r-300m": PretrainedSpec("xls-r-300m", 1024, "transformers", "pip install transformers torch"),
    "seamless-expressivity": PretrainedSpec(
        "seamless-expressivity", 512, "seamless_communication",
        "install seamless_communication and fetch the expressivity encoder weights",
    ),
}

_FACTORIES: dict[str, Callable[..., EmbeddingProvider]] = {}


def register_provider(name: str, factory: Callable[..., EmbeddingProvider]) -> None:
    """Register (or replace) a provider factory under ``name``.

    The factory is called as ``factory(layer=...)`` and must return an object
    with ``name``, ``dim``, and ``embed``.
    """
    _FACTORIES[name] = factory


def _pretrained_factory(spec: PretrainedSpec) -> Callable[..., EmbeddingProvider]:
    def factory(layer: str = "final") -> EmbeddingProvider:
        try:
            importlib.import_module(spec.module)
        except ImportError:
            raise ModelUnavailableError(
                f"embedding model {spec.name!r} needs the {spec.module!r} package "
                f"and local weights ({spec.hint})"
            ) from None
        raise ModelUnavailableError(
            f"embedding model {spec.name!r}: {spec.module!r} is importable but no "
            f"local weights are configured; register a provider for {spec.name!r} "
            f"that loads your checkpoint (expected output dim {spec.dim})"
        )

    return factory


register_provider("logmel", LogMelProvider)
for _spec in PRETRAINED_SPECS.values():
    register_provider(_spec.name, _pretrained_factory(_spec))


def available_models() -> dict[str, int]:
    """Model name -> output feature dimension for everything registered."""
    dims = {"logmel": LogMelProvider().dim}
    dims.update({name: spec.dim for name, spec in PRETRAINED_SPECS.items()})
    return dims


def model_dim(name: str) -> int:
    dims = available_models()
    if name not in dims:
        raise ValueError(f"unknown embedding model {name!r}; known: {sorted(dims)}")
    return dims[name]


def create_provider(name: str, layer: str = "final") -> EmbeddingProvider:
    """Instantiate a registered provider.

    ``layer`` selects which upstream layer to pool features from; providers
    that only expose final-layer features may ignore it.
    """
    if name not in _FACTORIES:
        raise ValueError(f"unknown embedding model {name!r}; known: {sorted(_FACTORIES)}")
    return _FACTORIES[name](layer=layer)
