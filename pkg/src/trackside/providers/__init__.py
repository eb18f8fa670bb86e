"""Inference gateway: all neural-model inference behind one interface.

Two implementations ship: the deterministic sidecar-driven provider in
:mod:`trackside.providers.synthetic` (test backbone, no trained weights) and
the HTTP client in :mod:`trackside.providers.remote` for attaching real
models.
"""

from trackside.providers.base import (
    Capability,
    ImageRegion,
    InferenceProvider,
    ProviderUnavailable,
    ScoredBox,
    UnreadableImage,
)
from trackside.providers.remote import RemoteProvider
from trackside.providers.synthetic import SyntheticProvider

__all__ = [
    "Capability",
    "ImageRegion",
    "InferenceProvider",
    "ProviderUnavailable",
    "RemoteProvider",
    "ScoredBox",
    "SyntheticProvider",
    "UnreadableImage",
]
