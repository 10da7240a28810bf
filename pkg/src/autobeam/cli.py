"""Command-line front end: build, tune, search, bench, gold, info.

Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import io as vio
from .autotune import Autotuner, FitnessKind, OptimizerSettings, build_index
from .errors import DataError, UsageError
from .evaluation import DEFAULT_K, brute_force_batch, run_benchmark
from .graph import DEFAULT_BLOCK_SIZE, DEFAULT_LOG_BASE, degree_summary
from .metric import MetricKind, VectorDataset, normalize_rows

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 2, 3, 4

# independent RNG streams derived from the one --seed flag
STREAM_DATA, STREAM_QUERIES, STREAM_BUILD, STREAM_TUNE = range(4)

DISTRIBUTIONS = ("uniform", "gaussian")


def stream(seed: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), purpose])


def synthetic(count: int, dim: int, distribution: str = "gaussian", seed: int = 0,
              purpose: int = STREAM_DATA) -> np.ndarray:
    rng = np.random.default_rng(stream(seed, purpose))
    if distribution == "uniform":
        return rng.random((count, dim), dtype=np.float32)
    if distribution == "gaussian":
        return rng.standard_normal((count, dim), dtype=np.float32)
    raise UsageError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")


def parse_synthetic(text: str) -> tuple[int, int, str]:
    parts = text.split(",")
    try:
        count, dim = int(parts[0]), int(parts[1])
    except (ValueError, IndexError):
        raise UsageError(f"--synthetic expects COUNT,DIM[,DIST], got {text!r}") from None
    dist = parts[2] if len(parts) > 2 else "gaussian"
    if len(parts) > 3 or count < 0 or dim < 1 or dist not in DISTRIBUTIONS:
        raise UsageError(f"--synthetic expects COUNT,DIM[,uniform|gaussian], got {text!r}")
    return count, dim, dist


def load_dataset(args) -> VectorDataset:
    metric = MetricKind.parse(args.metric)
    if args.synthetic:
        count, dim, dist = parse_synthetic(args.synthetic)
        if count == 0:
            raise UsageError("synthetic dataset needs COUNT >= 1")
        return VectorDataset.from_array(synthetic(count, dim, dist, args.seed), metric)
    if not args.input:
        raise UsageError("need --input or --synthetic")
    return vio.read_vectors(args.input, args.format, metric, args.dim, args.count)


def load_queries(args, metric: MetricKind) -> np.ndarray:
    if args.synthetic_queries:
        count, dim, dist = parse_synthetic(args.synthetic_queries)
        q = synthetic(count, dim, dist, args.seed, STREAM_QUERIES)
        return normalize_rows(q) if metric is MetricKind.NORMALIZED_COSINE and count else q
    if not args.queries:
        raise UsageError("need --queries or --synthetic-queries")
    return vio.read_queries(args.queries, metric, args.format, args.dim, args.count)


def settings_from(args) -> OptimizerSettings:
    kind = FitnessKind(args.opt)
    return OptimizerSettings(target=kind, min_recall=args.min_recall, k=args.k)


# -- subcommands ------------------------------------------------------------

def cmd_build(args) -> dict:
    if not 1 < args.logbase <= 2:
        raise UsageError(f"--logbase must lie in (1, 2], got {args.logbase}")
    if args.block_size < 1:
        raise UsageError("--block-size must be positive")
    dataset = load_dataset(args)
    t0 = time.perf_counter()
    graph = build_index(dataset, args.logbase, settings_from(args),
                        seed=stream(args.seed, STREAM_BUILD), block_size=args.block_size,
                        workers=args.workers, sequential=args.sequential)
    seconds = time.perf_counter() - t0
    vio.save_index(graph, args.out)
    p = graph.search_params
    report = {
        "build_seconds": seconds,
        "optimize_seconds": graph.stats.optimize_seconds,
        "memory_bytes": graph.memory_bytes(),
        "index_memory_bytes": graph.memory_bytes(include_dataset=False),
        "n": len(graph),
        "dim": dataset.dim,
        "log_base": args.logbase,
        "opt": args.opt,
        "config": {"bsize": p.bsize, "delta": p.delta},
        "reoptimizations": graph.stats.reoptimizations,
        "gold_computations": graph.stats.gold_computations,
        "degrees": degree_summary(graph),
    }
    print(f"built n={len(graph)} dim={dataset.dim} in {seconds:.2f}s "
          f"(optimize {graph.stats.optimize_seconds:.2f}s, {graph.stats.reoptimizations} events) "
          f"memory={report['memory_bytes']} bytes bsize={p.bsize} delta={p.delta:.4f}")
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2)
    return report


def cmd_tune(args) -> dict:
    graph = vio.load_index(args.index)
    tuner = Autotuner(settings_from(args), stream(args.seed, STREAM_TUNE))
    outcome = tuner.optimize(graph)
    vio.save_index(graph, args.out or args.index)
    c = outcome.config
    result = {
        "bsize": c.bsize,
        "delta": c.delta,
        "mean_visits": outcome.mean_visits,
        "opt_seconds": outcome.seconds,
        "train_recall": outcome.train_recall,
        "gold_computations": graph.stats.gold_computations,
    }
    train = "n/a" if outcome.train_recall is None else f"{outcome.train_recall:.4f}"
    print(f"bsize={c.bsize} delta={c.delta:.4f} mean_visits={outcome.mean_visits:.1f} "
          f"opt_seconds={outcome.seconds:.2f} train_recall={train} "
          f"gold_computations={graph.stats.gold_computations}")
    return result


def cmd_search(args) -> np.ndarray:
    graph = vio.load_index(args.index)
    queries = load_queries(args, graph.dataset.metric)
    k = min(args.k, len(graph))
    if len(queries) == 0:
        ids = np.zeros((0, k), dtype=np.int32)
    else:
        ids, _, counts, visits = graph.search_batch(
            queries, k, bsize=args.bsize, delta=args.delta, maxvisits=args.maxvisits)
        if np.any(counts < k):
            raise DataError("some queries returned fewer than k results")
        print(f"searched {len(queries)} queries, mean visits {visits.mean():.1f}")
    if args.out:
        vio.write_ivecs(args.out, ids)
    else:
        for row in ids:
            print(" ".join(map(str, row)))
    return ids


def cmd_gold(args) -> np.ndarray:
    if args.index:
        dataset = vio.load_index(args.index).dataset
    else:
        dataset = load_dataset(args)
    queries = load_queries(args, dataset.metric)
    if len(queries) and queries.shape[1] != dataset.dim:
        raise UsageError(f"query dimension {queries.shape[1]} does not match {dataset.dim}")
    gold = brute_force_batch(dataset, queries, args.k)
    vio.write_ivecs(args.out, gold)
    print(f"wrote {len(gold)} gold lists (k={gold.shape[1]}) to {args.out}")
    return gold


def cmd_bench(args) -> dict:
    graph = vio.load_index(args.index)
    queries = load_queries(args, graph.dataset.metric)
    gold = vio.read_ivecs(args.gold)
    if len(queries) == 0 and gold.size == 0:
        gold = np.zeros((0, min(args.k, len(graph))), dtype=np.int32)
    build_seconds = 0.0
    if args.build_report:
        with open(args.build_report) as f:
            build_seconds = float(json.load(f)["build_seconds"])
    report = run_benchmark(graph, queries, gold, args.k, build_seconds=build_seconds,
                           maxvisits=args.maxvisits, workers=args.workers).to_dict()
    with open(args.out, "w") as f:
        json.dump(report, f, indent=2)
    rec = "n/a" if report["macro_recall"] is None else f"{report['macro_recall']:.4f}"
    vis = "n/a" if report["mean_visits"] is None else f"{report['mean_visits']:.1f}"
    print(f"recall={rec} qps={report['qps']:.1f} visits={vis} queries={report['m']} k={args.k}")
    return report


def cmd_info(args) -> dict:
    graph = vio.load_index(args.index)
    p = graph.search_params
    info = {
        "n": len(graph),
        "dim": graph.dataset.dim,
        "metric": graph.dataset.metric.label,
        "log_base": graph.log_base,
        "config": {"bsize": p.bsize, "delta": p.delta},
        "hints": len(graph.hints),
        "memory_bytes": graph.memory_bytes(),
        "degrees": degree_summary(graph),
    }
    print(json.dumps(info, indent=2))
    return info


# -- argument parsing -------------------------------------------------------

def _add_data_flags(p, queries: bool = False):
    src = p.add_argument_group("input")
    if queries:
        src.add_argument("--queries", help="query vectors")
        src.add_argument("--synthetic-queries", metavar="COUNT,DIM[,DIST]",
                         help="generate queries instead of reading them")
    else:
        src.add_argument("--input", help="dataset vectors")
        src.add_argument("--synthetic", metavar="COUNT,DIM[,DIST]",
                         help="generate a uniform or gaussian dataset instead of reading one")
    src.add_argument("--format", choices=vio.FORMATS, default="fvecs")
    src.add_argument("--dim", type=int, help="dimension (raw-f32 only)")
    src.add_argument("--count", type=int, help="record count (raw-f32 only)")


def _add_data_flags_queries_only(p):
    p.add_argument("--queries", help="query vectors")
    p.add_argument("--synthetic-queries", metavar="COUNT,DIM[,DIST]")


def _add_tuning_flags(p):
    p.add_argument("--opt", choices=[k.value for k in FitnessKind],
                   default=FitnessKind.PARETO_RECALL.value, help="optimizer fitness")
    p.add_argument("--min-recall", type=float, default=0.9, help="target r for min-recall")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autobeam", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build and save an index")
    _add_data_flags(p)
    p.add_argument("--metric", default="l2", help="l2 or cosine")
    p.add_argument("--logbase", type=float, default=DEFAULT_LOG_BASE)
    _add_tuning_flags(p)
    p.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--sequential", action="store_true", help="insert one element at a time")
    p.add_argument("--report", help="write build statistics as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("tune", help="re-tune the search parameters of an index")
    p.add_argument("--index", required=True)
    _add_tuning_flags(p)
    p.add_argument("--out", help="output index (default: overwrite --index)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("search", help="answer k-NN queries")
    p.add_argument("--index", required=True)
    _add_data_flags(p, queries=True)
    p.add_argument("--bsize", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--maxvisits", type=int)
    p.add_argument("--out", help="ivecs output (default: print)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bench", help="timed single-worker benchmark")
    p.add_argument("--index", required=True)
    _add_data_flags(p, queries=True)
    p.add_argument("--gold", required=True, help="ivecs gold standard")
    p.add_argument("--build-report", help="JSON written by build --report")
    p.add_argument("--maxvisits", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="JSON report")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gold", help="exhaustive k-NN gold standard")
    p.add_argument("--index", help="take the dataset from an index")
    _add_data_flags(p)
    _add_data_flags_queries_only(p)
    p.add_argument("--metric", default="l2", help="l2 or cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gold)

    p = sub.add_parser("info", help="describe an index")
    p.add_argument("--index", required=True)
    p.set_defaults(func=cmd_info)

    for name, p in sub.choices.items():
        if name != "info":
            p.add_argument("-k", "--k", type=int, default=DEFAULT_K)
            p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "k", 1) < 1:
        print("autobeam: error: k must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as exc:
        print(f"autobeam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"autobeam: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"autobeam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
