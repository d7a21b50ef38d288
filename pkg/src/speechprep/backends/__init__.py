"""Pluggable stage backends: wire protocol, deterministic stubs, transports."""

from .gateway import (
    AsrBackend,
    BackendSet,
    DiarizationBackend,
    ItemContext,
    ScoringBackend,
    SeparationBackend,
    VadBackend,
    build_backend,
    build_backend_set,
)
from .protocol import PROTOCOL_VERSION
from .stubs import EnergyVadParams

__all__ = [
    "AsrBackend",
    "BackendSet",
    "DiarizationBackend",
    "EnergyVadParams",
    "ItemContext",
    "PROTOCOL_VERSION",
    "ScoringBackend",
    "SeparationBackend",
    "VadBackend",
    "build_backend",
    "build_backend_set",
]
