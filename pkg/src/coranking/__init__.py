"""Collaborative listwise passage reranking with small and large LLM rerankers."""

from coranking.backends import (
    BackendFailure,
    BestOfSamplesAdjuster,
    BiasedBackend,
    BiasModel,
    EndpointConfig,
    IdentityBackend,
    OracleBackend,
    RandomBackend,
    RemoteBackend,
    RerankerBackend,
    SamplingUnsupported,
    ScriptedBackend,
)
from coranking.core import (
    CandidateList,
    InvalidParams,
    InvalidPermutation,
    Passage,
    Qrels,
    Query,
    Ranking,
    RunEntry,
    apply_ranking,
    validate_ranking,
)
from coranking.metrics import MetricReport, dcg_at_k, ndcg_at_k, reward
from coranking.pipeline import CoRanker, CostReport, StrategySpec, UnitCosts, compare_strategies, latency_model, run_strategy
from coranking.windowing import WindowSchedule, run_pass, schedule

__version__ = "0.1.0"
