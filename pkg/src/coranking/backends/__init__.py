from coranking.backends.base import BackendFailure, Capabilities, RerankerBackend, SamplingUnsupported
from coranking.backends.factory import ConfigError, build_backend
from coranking.backends.remote import EndpointConfig, RemoteBackend
from coranking.backends.scripted import ScriptedBackend
from coranking.backends.simulators import (
    BestOfSamplesAdjuster,
    BiasedBackend,
    BiasModel,
    IdentityBackend,
    OracleBackend,
    RandomBackend,
    biased_rerank,
)

__all__ = [
    "BackendFailure",
    "BestOfSamplesAdjuster",
    "BiasModel",
    "BiasedBackend",
    "Capabilities",
    "ConfigError",
    "EndpointConfig",
    "IdentityBackend",
    "OracleBackend",
    "RandomBackend",
    "RemoteBackend",
    "RerankerBackend",
    "SamplingUnsupported",
    "ScriptedBackend",
    "biased_rerank",
    "build_backend",
]
