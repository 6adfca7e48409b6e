"""Experiment runners behind the CLI.

Each runner returns plain records; :func:`write_csv` turns them into a CSV
whose first column is the schema tag. Recall and count columns depend only
on the inputs and seeds; timing columns are wall-clock.
"""

from __future__ import annotations

import contextlib
import csv
import gc
import io as _stdio
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from .hnsw import HnswIndex
from .io import Dataset, atomic_write_bytes
from .metrics import as_p, tier_of, time_distance_kernel
from .oracle import GroundTruth, recall
from .universal import UhnswConfig, _verify_arrays, idealized_recall, trace_query

log = logging.getLogger(__name__)

SCHEMA = "uhnsw-bench-v1"
DEFAULT_P_SET = tuple(round(0.5 + 0.1 * i, 1) for i in range(16))  # 0.5 .. 2.0

TruthFn = Callable[[float], GroundTruth]


@dataclass
class BenchRecord:
    variant: str
    dataset: str
    p: str  # a p value, or "all" for the aggregate row
    K: int
    t: int
    tau: float
    kappa: int
    ef_search: int
    n_queries: int
    recall: float
    query_ms: float
    n_base: float
    n_lp: float
    qps: float


@dataclass
class QueryRow:
    query: int
    p: float
    recall: float
    time_ms: float
    n_base: int
    n_lp: int


@dataclass
class AblationRow:
    dataset: str
    p: float
    K: int
    t: int
    tau: float
    n_queries: int
    recall_initial: float
    recall_rerank: float
    generation_ms: float
    verification_ms: float
    verification_full_ms: float
    n_lp: float
    n_lp_full: float


@dataclass
class DistBenchRow:
    d: int
    p: float
    tier: str
    reps: int
    mean_ns: float


@contextlib.contextmanager
def _timed_section():
    """Suspend the garbage collector while timing, as ``timeit`` does."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def _workers() -> int:
    # one thread per core: extra threads only inflate per-query wall times
    return os.cpu_count() or 1


def p_schedule(n_queries: int, p_values: Sequence[float], mode: str = "uniform",
               seed: int = 0) -> np.ndarray:
    """Per-query p values: one fixed value, or uniform draws from a set."""
    ps = [as_p(p) for p in p_values]
    if not ps:
        raise ValueError("empty p list")
    if mode == "fixed":
        if len(ps) != 1:
            raise ValueError("fixed mode takes exactly one p")
        return np.full(n_queries, ps[0])
    if mode == "uniform":
        return np.random.default_rng(seed).choice(np.asarray(ps), size=n_queries)
    raise ValueError(f"unknown p mode {mode!r}")


def _run_pass(config: UhnswConfig, queries: np.ndarray, ps: np.ndarray, K: int,
              serial: bool, tau: float | None):
    def one(i):
        t0 = time.perf_counter_ns()
        tr = trace_query(queries[i], ps[i], K, config, tau=tau)
        return tr, time.perf_counter_ns() - t0

    with _timed_section():
        t0 = time.perf_counter()
        if serial:
            out = [one(i) for i in range(len(queries))]
        else:
            with ThreadPoolExecutor(max_workers=_workers()) as pool:
                out = list(pool.map(one, range(len(queries))))
        return out, time.perf_counter() - t0


def run_workload(config: UhnswConfig, queries: np.ndarray, ps: np.ndarray, K: int,
                 truth: TruthFn, *, serial: bool = True, tau: float | None = None,
                 warmup: bool = True, repeat: int = 1) -> tuple[list[QueryRow], float]:
    """Answer every query and score it; returns per-query rows and wall seconds.

    With ``repeat > 1`` the timed pass runs that many times and the fastest
    pass is reported. Results and counts are identical across passes.
    """
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if len(ps) != len(queries):
        raise ValueError("need one p per query")
    truths = {float(p): truth(float(p)) for p in np.unique(ps)}
    for p, gt in truths.items():
        if gt.n_queries != len(queries) or gt.K < K:
            raise ValueError(f"ground truth for p={p:g} does not match the query set")
    if warmup:
        _run_pass(config, queries, ps, K, True, tau)
    out, wall = min((_run_pass(config, queries, ps, K, serial, tau) for _ in range(repeat)),
                    key=lambda pass_: pass_[1])
    rows = []
    for i, (tr, ns) in enumerate(out):
        gt = truths[float(ps[i])]
        rows.append(QueryRow(query=i, p=float(ps[i]), recall=recall(tr.ids, gt[i][:K]),
                             time_ms=ns / 1e6, n_base=tr.stats.n_base, n_lp=tr.stats.n_lp))
    return rows, wall


def run_baseline(index: HnswIndex, queries: np.ndarray, K: int, ef_search: int,
                 truth: TruthFn, *, serial: bool = True) -> tuple[list[QueryRow], float]:
    """Plain HNSW search on a graph built under the target metric itself."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    gt = truth(index.metric)

    def one(i):
        t0 = time.perf_counter_ns()
        ids, _, n_base = index.search_arrays(queries[i], K, max(ef_search, K))
        return ids, n_base, time.perf_counter_ns() - t0

    one(0)
    with _timed_section():
        t0 = time.perf_counter()
        if serial:
            out = [one(i) for i in range(len(queries))]
        else:
            with ThreadPoolExecutor(max_workers=_workers()) as pool:
                out = list(pool.map(one, range(len(queries))))
        wall = time.perf_counter() - t0
    rows = [QueryRow(query=i, p=index.metric, recall=recall(ids, gt[i][:K]), time_ms=ns / 1e6,
                     n_base=int(nb), n_lp=0) for i, (ids, nb, ns) in enumerate(out)]
    return rows, wall


def aggregate(rows: Sequence[QueryRow], config: UhnswConfig | None, K: int, dataset: str,
              wall_s: float, *, tau: float | None = None, variant: str | None = None,
              per_p: bool = True, ef_search: int | None = None) -> list[BenchRecord]:
    """Per-p records (ascending p) followed by one ``p="all"`` record.

    ``config`` may be None for the plain-HNSW baseline; t, tau and kappa are
    then reported as 0.
    """
    if config is not None:
        tau = config.tau if tau is None else tau
        variant = variant or config.variant
        t, kappa, ef = config.t, config.kappa or K, config.ef_search
    else:
        tau, t, kappa, ef = 0.0, 0, 0, ef_search or 0
        variant = variant or "hnsw-baseline"

    def rec(label: str, sel: list[QueryRow], qps: float) -> BenchRecord:
        return BenchRecord(
            variant=variant, dataset=dataset, p=label, K=K, t=t, tau=tau,
            kappa=kappa, ef_search=ef, n_queries=len(sel),
            recall=float(np.mean([r.recall for r in sel])),
            query_ms=float(np.mean([r.time_ms for r in sel])),
            n_base=float(np.mean([r.n_base for r in sel])),
            n_lp=float(np.mean([r.n_lp for r in sel])),
            qps=qps,
        )

    out = []
    if per_p:
        for p in sorted({r.p for r in rows}):
            sel = [r for r in rows if r.p == p]
            out.append(rec(f"{p:g}", sel, 1e3 / float(np.mean([r.time_ms for r in sel]))))
    out.append(rec("all", list(rows), len(rows) / wall_s if wall_s > 0 else float("inf")))
    return out


def sweep(param: str, values: Iterable, config: UhnswConfig, queries: np.ndarray,
          ps: np.ndarray, K: int, truth: TruthFn, dataset: str, *,
          serial: bool = True, repeat: int = 1) -> list[BenchRecord]:
    """One aggregate record per swept value of ``t`` or ``tau``."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if param not in ("t", "tau"):
        raise ValueError(f"cannot sweep {param!r}; choose t or tau")
    out = []
    for v in values:
        cfg = config.replace(t=int(v)) if param == "t" else config.replace(tau=float(v))
        rows, wall = run_workload(cfg, queries, ps, K, truth, serial=serial, repeat=repeat)
        out.extend(aggregate(rows, cfg, K, dataset, wall, per_p=False))
    return out


def idealized_sweep(dataset: Dataset, queries: np.ndarray, p_values: Sequence[float],
                    t_values: Sequence[int], K: int, base_metrics: Sequence[float],
                    truth: TruthFn) -> list[BenchRecord]:
    """Idealized recall over a grid of (base metric, p, t); recall column only."""
    if not p_values or not t_values:
        raise ValueError("sweep needs at least one value")
    out = []
    for base in base_metrics:
        for p in p_values:
            gt = truth(as_p(p))
            for t in t_values:
                r = idealized_recall(dataset, queries, p, K, int(t), base, truth=gt.ids)
                out.append(BenchRecord(
                    variant=f"idealized-L{as_p(base):g}", dataset=dataset.name, p=f"{p:g}",
                    K=K, t=int(t), tau=1.0, kappa=K, ef_search=0, n_queries=len(queries),
                    recall=r, query_ms=0.0, n_base=0.0, n_lp=0.0, qps=0.0))
    return out


def ablation(config: UhnswConfig, queries: np.ndarray, p_values: Sequence[float], K: int,
             truth: TruthFn, dataset: str) -> list[AblationRow]:
    """Recall before/after re-ranking and verification time with/without early stop."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    X = config.dataset.data
    kappa = config.kappa or K
    out = []
    for p in p_values:
        pv = as_p(p)
        gt = truth(pv)
        # warm-up so compilation is not billed to the first query
        trace_query(queries[0], pv, K, config)
        r0, r1, gen, ver, full, nlp, nlp_full = [], [], [], [], [], [], []
        for i, q in enumerate(queries):
            tr = trace_query(q, pv, K, config)
            truth_i = gt[i][:K]
            r0.append(recall(tr.candidates[:K], truth_i))
            r1.append(recall(tr.ids, truth_i))
            gen.append(tr.generation_ns / 1e6)
            ver.append(tr.verification_ns / 1e6)
            nlp.append(tr.stats.n_lp)
            t0 = time.perf_counter_ns()
            res = _verify_arrays(X, q, pv, tr.candidates, K, 1.0, kappa)
            full.append((time.perf_counter_ns() - t0) / 1e6)
            nlp_full.append(res[2])
        out.append(AblationRow(
            dataset=dataset, p=pv, K=K, t=config.t, tau=config.tau, n_queries=len(queries),
            recall_initial=float(np.mean(r0)), recall_rerank=float(np.mean(r1)),
            generation_ms=float(np.mean(gen)), verification_ms=float(np.mean(ver)),
            verification_full_ms=float(np.mean(full)), n_lp=float(np.mean(nlp)),
            n_lp_full=float(np.mean(nlp_full)),
        ))
    return out


def dist_bench(d_values: Sequence[int], p_values: Sequence[float], reps: int) -> list[DistBenchRow]:
    if not d_values or not p_values:
        raise ValueError("dist-bench needs at least one d and one p")
    out = []
    for d in d_values:
        for p in p_values:
            pv = as_p(p)
            out.append(DistBenchRow(d=int(d), p=pv, tier=tier_of(pv).value, reps=reps,
                                    mean_ns=time_distance_kernel(int(d), pv, reps)))
    return out


def to_csv_text(rows: Sequence) -> str:
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in fields(rows[0])]
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema", *names])
    for r in rows:
        d = asdict(r)
        w.writerow([SCHEMA, *(_fmt(d[n]) for n in names)])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, rows: Sequence) -> None:
    """Write atomically so a failed run never leaves a partial file."""
    atomic_write_bytes(path, to_csv_text(rows).encode())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        if r.get("schema") != SCHEMA:
            raise ValueError(f"{path}: unexpected schema tag {r.get('schema')!r}")
    return rows
