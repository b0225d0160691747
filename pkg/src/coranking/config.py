"""Run configuration: one declarative YAML or JSON document.

Every numeric default mirrors the reference setup: 100 candidates, window
20, step 10, top-20 condensed list, NDCG@10, significance gap 0.4 and at
most 5 teacher iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from coranking.backends import ConfigError, RerankerBackend, build_backend
from coranking.core import Qrels
from coranking.pipeline import REQUIRED_BACKENDS, STRATEGIES, StrategySpec, UnitCosts
from coranking.validation import check_window_params

PATH_KEYS = ("queries", "corpus", "run", "qrels")


@dataclass
class RunConfig:
    strategy: str = "coranking"
    strategies: list[str] = field(default_factory=lambda: ["llr-sliding", "naive", "coranking"])
    paths: dict[str, str] = field(default_factory=dict)
    backends: dict[str, dict] = field(default_factory=dict)
    depth: int = 100
    window: int = 20
    step: int = 10
    top_k: int = 20
    k: int = 10
    seed: int = 0
    concurrency: int = 1
    output_dir: str = "out"
    mu: float = 0.4
    m: int = 8
    max_iterations: int = 5
    sft_depth: int = 20
    lenient: bool = False
    unit_costs: dict[str, float] = field(default_factory=dict)
    tag: str = "coranking"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: str | Path | None = None) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**dict(data))
        if base_dir is not None:
            cfg.paths = {
                key: str(Path(base_dir, value)) if not Path(value).is_absolute() else value
                for key, value in cfg.paths.items()
            }
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        text = path.read_text("utf-8")
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_mapping(data, base_dir=path.parent)

    def validate(self) -> None:
        for name in [self.strategy, *self.strategies]:
            if name not in STRATEGIES:
                raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGIES)}")
        try:
            check_window_params(self.window, self.step, self.top_k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.depth < 1 or self.k < 1 or self.m < 1 or self.max_iterations < 1:
            raise ConfigError("depth, k, m and max_iterations must be >= 1")
        if self.mu < 0:
            raise ConfigError("mu must be >= 0")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        for key, value in self.paths.items():
            if key not in PATH_KEYS:
                raise ConfigError(f"unknown path key {key!r}")
            if not Path(value).exists():
                raise ConfigError(f"paths.{key}: {value} does not exist")
        try:
            UnitCosts(**self.unit_costs)
        except TypeError as exc:
            raise ConfigError(f"bad unit_costs: {exc}") from exc

    @property
    def costs(self) -> UnitCosts:
        return UnitCosts(**self.unit_costs)

    def require_paths(self, *keys: str) -> None:
        missing = [k for k in keys if k not in self.paths]
        if missing:
            raise ConfigError(f"config lacks paths: {', '.join(missing)}")

    def build_backends(self, qrels: Qrels | None, roles: tuple[str, ...]) -> dict[str, RerankerBackend]:
        """Instantiate the backends for ``roles`` (llr first, adjusters may need it)."""
        missing = [r for r in roles if r not in self.backends]
        if missing:
            raise ConfigError(f"config lacks backends: {', '.join(missing)}")
        built: dict[str, RerankerBackend] = {}
        for role in sorted(roles, key=lambda r: r != "llr"):
            cfg = self.backends[role]
            if not isinstance(cfg, Mapping):
                raise ConfigError(f"backends.{role} must be a mapping")
            built[role] = build_backend(cfg, qrels, self.seed, llr=built.get("llr"), name=cfg.get("name", role))
        return built

    def spec(self, kind: str, backends: Mapping[str, RerankerBackend]) -> StrategySpec:
        return StrategySpec(
            kind=kind,
            top_k=self.top_k,
            window=self.window,
            step=self.step,
            slr=backends.get("slr"),
            poa=backends.get("poa"),
            llr=backends.get("llr"),
            lenient=self.lenient,
        )


def roles_for(kinds: list[str]) -> tuple[str, ...]:
    roles: set[str] = set()
    for kind in kinds:
        roles.update(REQUIRED_BACKENDS[kind])
    return tuple(r for r in ("slr", "poa", "llr") if r in roles)
