"""Build backends from declarative config mappings."""

from __future__ import annotations

from typing import Any, Mapping

from coranking.backends.base import RerankerBackend
from coranking.backends.remote import EndpointConfig, RemoteBackend
from coranking.backends.scripted import ScriptedBackend
from coranking.backends.simulators import (
    BestOfSamplesAdjuster,
    BiasedBackend,
    BiasModel,
    IdentityBackend,
    OracleBackend,
    RandomBackend,
)
from coranking.core import CorankingError, Qrels
from coranking.prompting import PromptTemplate

NEEDS_QRELS = {"oracle", "biased", "noisy-oracle", "best-of"}
BACKEND_TYPES = NEEDS_QRELS | {"identity", "random", "remote", "scripted"}


class ConfigError(CorankingError, ValueError):
    pass


def _bias(cfg: Mapping[str, Any], seed: int) -> BiasModel:
    sigma = float(cfg.get("sigma", 0.0))
    bias_seed = int(cfg.get("seed", seed))
    if "mid_list" in cfg:
        return BiasModel.mid_list(**dict(cfg["mid_list"]), sigma=sigma, seed=bias_seed)
    return BiasModel(tuple(cfg.get("penalties", ())), sigma, bias_seed)


def build_backend(
    cfg: Mapping[str, Any],
    qrels: Qrels | None = None,
    seed: int = 0,
    llr: RerankerBackend | None = None,
    name: str | None = None,
) -> RerankerBackend:
    """Instantiate one backend.

    Args:
        cfg: Mapping with a ``type`` key and type-specific options.
        qrels: Judgments, required by the grade-aware simulators.
        seed: Default seed for simulators that do not set their own.
        llr: Large reranker instance, required by ``best-of`` adjusters.
        name: Optional display name.

    Raises:
        ConfigError: on unknown types or missing requirements.
    """
    kind = cfg.get("type")
    if kind not in BACKEND_TYPES:
        raise ConfigError(f"unknown backend type {kind!r}; expected one of {sorted(BACKEND_TYPES)}")
    if kind in NEEDS_QRELS and qrels is None:
        raise ConfigError(f"backend type {kind!r} needs qrels (set paths.qrels)")
    max_window = int(cfg.get("max_window", 100))

    if kind == "identity":
        backend: RerankerBackend = IdentityBackend()
    elif kind == "oracle":
        backend = OracleBackend(qrels, max_window=max_window)
    elif kind in ("biased", "noisy-oracle"):
        bias = _bias(cfg, seed)
        if kind == "noisy-oracle":
            bias = BiasModel((), bias.sigma, bias.seed)
        backend = BiasedBackend(qrels, bias, max_window=max_window)
    elif kind == "random":
        backend = RandomBackend(seed=int(cfg.get("seed", seed)), max_window=max_window)
    elif kind == "best-of":
        if llr is None:
            raise ConfigError("best-of adjuster needs an llr backend")
        sampler_cfg = cfg.get("sampler", {"type": "random"})
        sampler = build_backend(sampler_cfg, qrels, seed)
        backend = BestOfSamplesAdjuster(
            sampler,
            llr,
            qrels,
            m=int(cfg.get("m", 8)),
            seed=int(cfg.get("seed", seed)),
            k=int(cfg.get("k", 10)),
            include_identity=bool(cfg.get("include_identity", True)),
        )
    elif kind == "remote":
        try:
            endpoint = EndpointConfig(
                **{k: v for k, v in cfg.items() if k not in ("type", "template", "name")}
            )
        except TypeError as exc:
            raise ConfigError(f"bad remote backend config: {exc}") from exc
        template = PromptTemplate.from_file(cfg["template"]) if "template" in cfg else PromptTemplate()
        return RemoteBackend(endpoint, template, name=name or cfg.get("name"))
    else:
        if "path" not in cfg:
            raise ConfigError("scripted backend needs a trace path")
        backend = ScriptedBackend.from_jsonl(cfg["path"], stage=cfg.get("stage"))

    if name or cfg.get("name"):
        backend.name = name or cfg["name"]
    return backend
