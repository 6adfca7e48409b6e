"""``uhnsw`` command line: build, gt, query, sweep, ablation, dist-bench."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import bench
from .hnsw import HnswIndex, HnswParams, build
from .io import Dataset, parse_source
from .oracle import GroundTruthCache
from .universal import UhnswConfig

log = logging.getLogger("uhnsw")

DESK_DATA = "synth:gaussian:10000:128:42"
DESK_QUERIES = "synth:gaussian:100:128:43"


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _p_values(text: str) -> list[float]:
    if text == "all":
        return list(bench.DEFAULT_P_SET)
    return _floats(text)


def _add_data(p: argparse.ArgumentParser, queries: bool = True) -> None:
    p.add_argument("--data", default=DESK_DATA,
                   help="dataset: .fvecs/.bvecs path (optionally PATH@m:seed) or "
                        "synth:<dist>:<n>:<d>:<seed>")
    if queries:
        p.add_argument("--queries", default=DESK_QUERIES, help="query set, same syntax as --data")


def _add_uhnsw(p: argparse.ArgumentParser) -> None:
    p.add_argument("--index-lo", help="snapshot of the lower-p base graph (G1, or G0.5 for -e)")
    p.add_argument("--index-hi", help="snapshot of the higher-p base graph (G2, or G1 for -e)")
    p.add_argument("--index", help="single snapshot, for --variant hnsw")
    p.add_argument("--variant", choices=("default", "e", "hnsw"), default="default")
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--t", type=int, default=300)
    p.add_argument("--tau", type=float, default=0.92)
    p.add_argument("--kappa", type=int, default=None, help="batch size (default: K)")
    p.add_argument("--ef-search", type=int, default=400)
    p.add_argument("--cutoff-p", type=float, default=None,
                   help="base selection cutoff (default 1.4, or 0.6 for -e)")
    p.add_argument("--p", default="all",
                   help="comma-separated p values, or 'all' for 0.5,0.6,...,2.0")
    p.add_argument("--p-mode", choices=("fixed", "uniform", "each"), default="uniform",
                   help="fixed: one p for all queries; uniform: draw per query; "
                        "each: run every query under every p")
    p.add_argument("--gt", required=True, help="ground-truth cache directory (see 'gt')")
    p.add_argument("--seed", type=int, default=0, help="seed for per-query p draws")
    p.add_argument("--serial", action="store_true", help="single-threaded reference timing")
    p.add_argument("--repeat", type=int, default=1,
                   help="timed passes per measurement; the fastest is reported")


def _config(args, data: Dataset) -> UhnswConfig:
    if not (args.index_lo and args.index_hi):
        raise ValueError("--index-lo and --index-hi are required")
    lo = HnswIndex.load(args.index_lo, data)
    hi = HnswIndex.load(args.index_hi, data)
    kw = dict(t=args.t, tau=args.tau, kappa=args.kappa, ef_search=args.ef_search)
    if args.cutoff_p is not None:
        kw["cutoff_p"] = args.cutoff_p
    if args.variant == "e":
        return UhnswConfig.extended(lo, hi, **kw)
    return UhnswConfig.default(lo, hi, **kw)


def _truth(args, data: Dataset, queries):
    cache = GroundTruthCache(args.gt)
    return lambda p: cache.lookup(data, queries, p, args.K)


def cmd_build(args) -> int:
    data = parse_source(args.data)
    params = HnswParams(M=args.M, ef_construction=args.ef_construction, seed=args.seed,
                        metric=args.metric)
    t0 = time.perf_counter()
    index = build(data, params)
    elapsed = time.perf_counter() - t0
    index.save(args.out)
    print(f"built L{params.metric:g} graph over {data.name} (n={data.n}, d={data.d}) "
          f"in {elapsed:.2f} s -> {args.out}")
    return 0


def cmd_gt(args) -> int:
    data = parse_source(args.data)
    queries = parse_source(args.queries).data
    if args.K > data.n:
        raise ValueError(f"K={args.K} exceeds dataset size {data.n}")
    cache = GroundTruthCache(args.out)
    for p in _p_values(args.p):
        t0 = time.perf_counter()
        gt = cache.get(data, queries, p, args.K)
        path = cache.path_for(data, queries, p, args.K)
        print(f"p={p:g}: {gt.n_queries}x{gt.K} ids -> {path} ({time.perf_counter() - t0:.2f} s)")
    print(f"cache hits={cache.hits} misses={cache.misses}")
    return 0


def _run(args, config, data, queries):
    """Answer the workload; returns per-query rows and wall seconds.

    ``--p-mode each`` runs the full query set once per listed p.
    """
    truth = _truth(args, data, queries)
    p_values = _p_values(args.p)
    if args.p_mode != "each":
        ps = bench.p_schedule(len(queries), p_values, args.p_mode, args.seed)
        return bench.run_workload(config, queries, ps, args.K, truth, serial=args.serial,
                                  repeat=args.repeat)
    rows, wall = [], 0.0
    for p in p_values:
        ps = np.full(len(queries), p)
        r, w = bench.run_workload(config, queries, ps, args.K, truth, serial=args.serial,
                                  repeat=args.repeat)
        rows.extend(r)
        wall += w
    return rows, wall


def cmd_query(args) -> int:
    data = parse_source(args.data)
    queries = parse_source(args.queries).data
    if args.variant == "hnsw":
        if not args.index:
            raise ValueError("--variant hnsw needs --index")
        index = HnswIndex.load(args.index, data)
        rows, wall = bench.run_baseline(index, queries, args.K, args.ef_search,
                                        _truth(args, data, queries), serial=args.serial)
        records = bench.aggregate(rows, None, args.K, data.name, wall,
                                  ef_search=args.ef_search)
    else:
        config = _config(args, data)
        rows, wall = _run(args, config, data, queries)
        records = bench.aggregate(rows, config, args.K, data.name, wall)
    bench.write_csv(args.out, records)
    if args.per_query:
        bench.write_csv(args.per_query, rows)
    _print_records(records)
    return 0


def cmd_sweep(args) -> int:
    data = parse_source(args.data)
    queries = parse_source(args.queries).data
    if args.param in ("t", "tau"):
        values = _ints(args.values) if args.param == "t" else _floats(args.values)
    else:
        raise ValueError(f"cannot sweep {args.param!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    if args.idealized:
        if args.param != "t":
            raise ValueError("--idealized sweeps t only")
        records = bench.idealized_sweep(data, queries, _p_values(args.p), values, args.K,
                                        _floats(args.base), _truth(args, data, queries))
    else:
        config = _config(args, data)
        if args.p_mode == "each":
            raise ValueError("sweep needs --p-mode fixed or uniform")
        ps = bench.p_schedule(len(queries), _p_values(args.p), args.p_mode, args.seed)
        records = bench.sweep(args.param, values, config, queries, ps, args.K,
                              _truth(args, data, queries), data.name, serial=args.serial,
                              repeat=args.repeat)
    bench.write_csv(args.out, records)
    _print_records(records)
    return 0


def cmd_ablation(args) -> int:
    data = parse_source(args.data)
    queries = parse_source(args.queries).data
    config = _config(args, data)
    rows = bench.ablation(config, queries, _p_values(args.p), args.K,
                          _truth(args, data, queries), data.name)
    bench.write_csv(args.out, rows)
    for r in rows:
        print(f"p={r.p:g} recall initial={r.recall_initial:.3f} rerank={r.recall_rerank:.3f} "
              f"gen={r.generation_ms:.3f}ms verify={r.verification_ms:.3f}ms "
              f"verify(no early stop)={r.verification_full_ms:.3f}ms")
    return 0


def cmd_dist_bench(args) -> int:
    rows = bench.dist_bench(_ints(args.d), _floats(args.p), args.reps)
    bench.write_csv(args.out, rows)
    for r in rows:
        print(f"d={r.d} p={r.p:g} ({r.tier}): {r.mean_ns:.1f} ns")
    return 0


def _print_records(records) -> None:
    for r in records:
        print(f"{r.variant} p={r.p} t={r.t} tau={r.tau:g} recall={r.recall:.4f} "
              f"ms={r.query_ms:.3f} Nb={r.n_base:.0f} Np={r.n_lp:.1f} qps={r.qps:.0f}")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhnsw", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an HNSW graph and save a snapshot")
    _add_data(p, queries=False)
    p.add_argument("--metric", type=float, required=True, help="base metric p")
    p.add_argument("--M", type=int, default=32)
    p.add_argument("--ef-construction", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("gt", help="compute exact ground truth into a cache directory")
    _add_data(p)
    p.add_argument("--p", default="all")
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--out", required=True, help="cache directory")
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("query", help="run a (q, p) workload and write BenchRecords")
    _add_data(p)
    _add_uhnsw(p)
    p.add_argument("--out", required=True)
    p.add_argument("--per-query", help="also dump per-query rows to this CSV")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("sweep", help="QPS-recall curve over t or tau")
    _add_data(p)
    _add_uhnsw(p)
    p.add_argument("--param", choices=("t", "tau"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--idealized", action="store_true",
                   help="exact base-metric candidates, full re-rank (t sweeps only)")
    p.add_argument("--base", default="1,2", help="base metrics for --idealized")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablation", help="verification lift and early-stop savings")
    _add_data(p)
    _add_uhnsw(p)
    p.set_defaults(p="0.51,0.9")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("dist-bench", help="time the distance kernels")
    p.add_argument("--d", default="128,256,960")
    p.add_argument("--p", default="1,2,0.5,1.5,0.7,1.3")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dist_bench)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
