"""serboot-extract: bridge real audio corpora into the serboot data format."""

__version__ = "0.1.0"

from .audio import AudioDecodeError, load_audio  # noqa: F401
from .extract import AudioManifestEntry, AudioManifestError, extract, parse_audio_manifest  # noqa: F401
from .providers import (  # noqa: F401
    EmbeddingProvider,
    LogMelProvider,
    ModelUnavailableError,
    available_models,
    create_provider,
    model_dim,
    register_provider,
)
