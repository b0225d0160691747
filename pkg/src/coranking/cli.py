"""Command-line entry point.

Exit codes: 0 ok, 1 usage or configuration error, 2 I/O or data-format
error, 3 backend failure (fatal or systemic). Logs go to stderr; data goes
to files and stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from coranking import io
from coranking.backends import BackendFailure, ConfigError
from coranking.backends.factory import NEEDS_QRELS
from coranking.config import RunConfig, roles_for
from coranking.core import CorankingError, InvalidParams
from coranking.datagen import build_dpo_dataset, build_sft_dataset
from coranking.fixtures import make_fixture, simulation_backends
from coranking.metrics import evaluate_rankings
from coranking.pipeline import STRATEGIES, UnitCosts, compare_strategies, run_strategy

logger = logging.getLogger("coranking")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class SystemicFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        raise UsageError(f"{self.prog}: {message}")


def _strategy_list(value: str) -> list[str]:
    names = [s.strip() for s in value.split(",") if s.strip()]
    bad = [s for s in names if s not in STRATEGIES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown strategy {', '.join(bad) or value!r}; choose from {', '.join(STRATEGIES)}"
        )
    return names


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config)
    for attr in ("strategy", "output_dir", "seed", "concurrency", "k"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "strategies", None):
        cfg.strategies = args.strategies
    if getattr(args, "lenient", False):
        cfg.lenient = True
    cfg.validate()
    return cfg


def _dataset(cfg: RunConfig, need_qrels: bool) -> io.Dataset:
    cfg.require_paths("queries", "corpus", "run", *(("qrels",) if need_qrels else ()))
    ds = io.load_dataset(
        cfg.paths["queries"], cfg.paths["corpus"], cfg.paths["run"], cfg.paths.get("qrels"), cfg.depth
    )
    if not ds.lists:
        raise io.DataFormatError(cfg.paths["run"], None, "no candidate lists could be built")
    return ds


def _needs_qrels(cfg: RunConfig, roles: Sequence[str]) -> bool:
    return any(cfg.backends.get(r, {}).get("type") in NEEDS_QRELS for r in roles)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_rerank(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    roles = roles_for([cfg.strategy])
    if _needs_qrels(cfg, roles):
        cfg.require_paths("qrels")
    ds = _dataset(cfg, need_qrels=False)
    backends = cfg.build_backends(ds.qrels, roles)
    spec = cfg.spec(cfg.strategy, backends)
    out = _out_dir(cfg)
    rankings: dict[str, list[str]] = {}
    cost_records, trace_records = [], []
    totals = {"slr_calls": 0, "poa_calls": 0, "llr_calls": 0, "modeled_ms": 0.0}

    for cands in ds.lists:
        result = run_strategy(spec, cands, cfg.costs)
        rankings[cands.query.id] = result.ranked_ids
        c = result.cost
        cost_records.append(
            {
                "qid": c.query_id,
                "strategy": cfg.strategy,
                "slr_calls": c.slr_calls,
                "poa_calls": c.poa_calls,
                "llr_calls": c.llr_calls,
                "modeled_ms": c.modeled_ms,
                "wall_ms": {s: round(v, 3) for s, v in c.stage_ms.items()},
            }
        )
        trace_records.extend(t.to_record() for t in result.trace)
        for key in ("slr_calls", "poa_calls", "llr_calls"):
            totals[key] += getattr(c, key)
        totals["modeled_ms"] += c.modeled_ms

    io.write_run(out / "run.trec", io.rankings_to_entries(rankings), tag=cfg.tag)
    io.write_jsonl(out / "costs.jsonl", cost_records)
    io.write_jsonl(out / "trace.jsonl", trace_records)
    print(f"queries\t{len(rankings)}")
    for key, value in totals.items():
        print(f"{key}\t{value:g}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    entries = io.read_run(args.run)
    if not entries:
        raise io.DataFormatError(args.run, None, "no entries")
    qrels = io.read_qrels(args.qrels)
    report = evaluate_rankings(io.group_run(entries, order="trec_eval"), qrels, args.k)
    sys.stdout.write(report.to_tsv())
    if report.excluded:
        logger.warning("excluded %d queries absent from qrels: %s", len(report.excluded), " ".join(report.excluded))
    if report.degenerate:
        logger.warning("%d queries have no relevant judgments (scored 0)", len(report.degenerate))
    return EXIT_OK


def _header(cfg: RunConfig, backends: dict, extra: dict) -> dict:
    return {
        "header": {
            "seed": cfg.seed,
            "k": cfg.k,
            "backends": {role: b.name for role, b in sorted(backends.items())},
            **extra,
        }
    }


def cmd_build_sft(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    ds = _dataset(cfg, need_qrels=True)
    teacher_role = "teacher" if "teacher" in cfg.backends else "llr"
    backends = cfg.build_backends(ds.qrels, (teacher_role,))
    examples, summary = build_sft_dataset(
        ds.lists,
        backends[teacher_role],
        ds.qrels,
        max_iterations=cfg.max_iterations,
        k=cfg.k,
        depth=cfg.sft_depth,
        concurrency=cfg.concurrency,
    )
    out = _out_dir(cfg)
    header = _header(cfg, backends, {"max_iterations": cfg.max_iterations, "depth": cfg.sft_depth})
    for ex in examples:
        ex.verify(ds.qrels, cfg.k)
    io.write_jsonl(out / "sft.jsonl", [header, *(ex.to_record() for ex in examples)])
    print("\n".join(summary.lines("examples")))
    if summary.systemic_failure:
        raise SystemicFailure(f"{summary.failed}/{summary.total} queries failed")
    return EXIT_OK


def cmd_build_dpo(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.mu is not None:
        cfg.mu = args.mu
    if args.m is not None:
        cfg.m = args.m
    cfg.validate()
    ds = _dataset(cfg, need_qrels=True)
    backends = cfg.build_backends(ds.qrels, ("slr", "llr"))
    pairs, summary = build_dpo_dataset(
        ds.lists,
        backends["slr"],
        backends["llr"],
        ds.qrels,
        m=cfg.m,
        mu=cfg.mu,
        seed=cfg.seed,
        top_k=cfg.top_k,
        window=cfg.window,
        step=cfg.step,
        k=cfg.k,
        concurrency=cfg.concurrency,
    )
    out = _out_dir(cfg)
    header = _header(cfg, backends, {"mu": cfg.mu, "m": cfg.m, "top_k": cfg.top_k})
    for pair in pairs:
        pair.verify(cfg.mu)
    io.write_jsonl(out / "dpo.jsonl", [header, *(p.to_record() for p in pairs)])
    print("\n".join(summary.lines("pairs")))
    if summary.systemic_failure:
        raise SystemicFailure(f"{summary.failed}/{summary.total} queries failed")
    return EXIT_OK


def _emit_comparison(report, out: Path, fmt: str) -> None:
    io.write_jsonl(out / "compare.jsonl", report.records)
    sys.stdout.write(report.to_markdown() if fmt == "markdown" else report.to_tsv())


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    roles = roles_for(cfg.strategies)
    ds = _dataset(cfg, need_qrels=True)
    backends = cfg.build_backends(ds.qrels, roles)
    specs = {name: cfg.spec(name, backends) for name in cfg.strategies}
    report = compare_strategies(
        specs, ds.lists, ds.qrels, cfg.k, cfg.costs, cfg.concurrency, wall_clock=args.wall_clock
    )
    _emit_comparison(report, _out_dir(cfg), args.format)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    fixture = make_fixture(args.queries, depth=args.depth, seed=args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.write_fixture:
        fixture.write(out / "fixture")
    backends = simulation_backends(fixture.qrels, seed=args.seed, m=args.m)
    cfg = RunConfig(strategies=args.strategies or ["llr-sliding", "naive", "coranking"])
    specs = {name: cfg.spec(name, backends) for name in cfg.strategies}
    report = compare_strategies(
        specs, fixture.candidate_lists(args.depth), fixture.qrels, args.k, UnitCosts(), args.concurrency
    )
    _emit_comparison(report, out, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coranking", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def with_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="YAML or JSON run configuration")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--concurrency", type=int)

    p = sub.add_parser("rerank", help="rerank first-stage candidates with one strategy")
    with_config(p)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--lenient", action="store_true", help="keep order of failed windows")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="NDCG@k of a TREC run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("build-sft", help="gold rankings by iterated teacher reranking")
    with_config(p)
    p.set_defaults(func=cmd_build_sft)

    p = sub.add_parser("build-dpo", help="significance-filtered preference pairs")
    with_config(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_build_dpo)

    for name, func, help_text in (
        ("compare", cmd_compare, "compare strategies on a configured dataset"),
        ("simulate", cmd_simulate, "compare strategies on a synthetic fixture with simulators"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--strategies", type=_strategy_list)
        p.add_argument("--format", choices=("tsv", "markdown"), default="tsv")
        if name == "compare":
            with_config(p)
            p.add_argument("--wall-clock", action="store_true", help="add wall-clock timings to records")
        else:
            p.add_argument("--output-dir", dest="output_dir", default="sim-out")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--queries", type=int, default=20)
            p.add_argument("--depth", type=int, default=100)
            p.add_argument("--m", type=int, default=256, help="adjuster samples per query")
            p.add_argument("--k", type=int, default=10)
            p.add_argument("--concurrency", type=int, default=1)
            p.add_argument("--write-fixture", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, InvalidParams, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (BackendFailure, SystemicFailure) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except CorankingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
