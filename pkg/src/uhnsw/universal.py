"""Universal-L_p queries over a pair of base-metric HNSW graphs.

A query ``(q, p, K)`` picks the base graph whose metric suits ``p``, pulls the
``t`` nearest candidates under that base metric, then re-ranks them under
``L_p`` in batches of ``kappa``, stopping once a batch leaves at least a
``tau`` fraction of the current top-K unchanged.

Two graph pairs are supported:

* default: ``(L1, L2)``, cutoff 1.4, serves p in [0.5, 2]
* extended: ``(L0.5, L1)``, cutoff 0.6, serves p in [0.2, 1]
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .hnsw import HnswIndex, ScoredId, _check_query, _scored
from .io import Dataset
from .metrics import MetricParam, as_p, pth_power, root_of
from .oracle import _power_sums, _topk


@dataclass(frozen=True)
class UhnswConfig:
    base_lo: HnswIndex
    base_hi: HnswIndex
    t: int = 300
    tau: float = 0.92
    kappa: int | None = None  # None binds to K at query time
    ef_search: int = 400
    cutoff_p: float = 1.4
    p_range: tuple[float, float] = (0.5, 2.0)
    variant: str = "uhnsw"

    def __post_init__(self) -> None:
        if self.base_lo.metric >= self.base_hi.metric:
            raise ValueError("base_lo must use a smaller p than base_hi")
        if self.base_lo.dataset is not self.base_hi.dataset:
            if self.base_lo.dataset.digest != self.base_hi.dataset.digest:
                raise ValueError("base indexes must cover the same dataset")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.ef_search < self.t:
            raise ValueError(f"ef_search ({self.ef_search}) must be >= t ({self.t})")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.kappa is not None and self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        lo, hi = self.p_range
        if not 0.0 < lo <= hi <= 2.0:
            raise ValueError(f"bad supported p range {self.p_range}")

    @classmethod
    def default(cls, g1: HnswIndex, g2: HnswIndex, **kw) -> UhnswConfig:
        return cls(base_lo=g1, base_hi=g2, **kw)

    @classmethod
    def extended(cls, g05: HnswIndex, g1: HnswIndex, **kw) -> UhnswConfig:
        kw.setdefault("cutoff_p", 0.6)
        kw.setdefault("p_range", (0.2, 1.0))
        kw.setdefault("variant", "uhnsw-e")
        return cls(base_lo=g05, base_hi=g1, **kw)

    @property
    def dataset(self) -> Dataset:
        return self.base_lo.dataset

    def replace(self, **kw) -> UhnswConfig:
        fields = dict(self.__dict__)
        fields.update(kw)
        return UhnswConfig(**fields)


@dataclass(frozen=True)
class QueryTuple:
    q: np.ndarray
    p: float
    K: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", as_p(self.p))
        if self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass(frozen=True)
class QueryStats:
    n_base: int
    n_lp: int
    batches_consumed: int
    terminated_early: bool


class QueryTrace(NamedTuple):
    """Everything one query produced, for the benchmark harness."""

    ids: np.ndarray
    dists: np.ndarray
    stats: QueryStats
    candidates: np.ndarray  # base-metric order; the direct result on the shortcut path
    generation_ns: int
    verification_ns: int


def select_base_index(p, config: UhnswConfig) -> HnswIndex:
    return config.base_lo if as_p(p) <= config.cutoff_p else config.base_hi


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _lex_order(keys, ids):
    o1 = np.argsort(ids, kind="mergesort")
    o2 = np.argsort(keys[o1], kind="mergesort")
    return o1[o2]


@njit(cache=True, nogil=True)
def _verify_kernel(data, q, p, cand, K, tau, kappa, exhaustive):
    t = cand.shape[0]
    Q = q.reshape(1, q.shape[0])
    mk = np.empty(K + kappa, np.float32)
    mi = np.empty(K + kappa, np.int32)
    for j in range(K):
        mi[j] = cand[j]
        mk[j] = pth_power(Q, 0, data, cand[j], p)
    order = _lex_order(mk[:K], mi[:K])
    rk = mk[:K][order].copy()
    ri = mi[:K][order].copy()
    n_lp = K
    pos = K
    batches = 0
    early = False
    while pos < t:
        b = min(kappa, t - pos)
        mk[:K] = rk
        mi[:K] = ri
        for j in range(b):
            c = cand[pos + j]
            mi[K + j] = c
            mk[K + j] = pth_power(Q, 0, data, c, p)
        n_lp += b
        pos += b
        batches += 1
        order = _lex_order(mk[: K + b], mi[: K + b])[:K]
        kept = 0
        for j in range(K):
            if order[j] < K:
                kept += 1
        rk = mk[order].copy()
        ri = mi[order].copy()
        if not exhaustive and kept / K >= tau:
            early = True
            break
    dists = np.empty(K, np.float64)
    for j in range(K):
        dists[j] = root_of(rk[j], p)
    return ri, dists, n_lp, batches, early


def _verify_arrays(data, q, p: float, cand: np.ndarray, K: int, tau: float, kappa: int):
    return _verify_kernel(data, q, p, cand, K, float(tau), kappa, tau >= 1.0)


def verify_candidates(candidates, q, p, K: int, tau: float, kappa: int | None = None,
                      *, data: np.ndarray | Dataset):
    """Batched L_p re-ranking of ``candidates`` with early termination.

    ``candidates`` is a base-metric-ascending list of :class:`ScoredId` (or
    ids). The first ``K`` seed the result; each further batch of ``kappa`` is
    merged in and the top-K recomputed. The loop stops when at least a ``tau``
    fraction of the previous top-K survives a merge. ``tau = 1`` disables
    early termination, so every candidate is verified.

    Returns ``(results, QueryStats)``; ``n_base`` is 0 in the stats fragment.
    """
    pv = as_p(p)
    X = data.data if isinstance(data, Dataset) else np.ascontiguousarray(data, np.float32)
    cand = np.asarray([c.id if isinstance(c, ScoredId) else c for c in candidates], np.int32)
    if K < 1:
        raise ValueError("K must be >= 1")
    if cand.shape[0] < K:
        raise ValueError(f"need at least K={K} candidates, got {cand.shape[0]}")
    if np.unique(cand).shape[0] != cand.shape[0]:
        raise ValueError("candidate ids must be distinct")
    if cand.min() < 0 or cand.max() >= X.shape[0]:
        raise ValueError("candidate id out of range")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    kappa = K if kappa is None else kappa
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    qv = _check_query(q, X.shape[1])
    ids, dists, n_lp, batches, early = _verify_arrays(X, qv, pv, cand, K, tau, kappa)
    stats = QueryStats(n_base=0, n_lp=int(n_lp), batches_consumed=int(batches),
                       terminated_early=bool(early))
    return _scored(ids, dists), stats


# ---------------------------------------------------------------------------
# full query
# ---------------------------------------------------------------------------


def _exact_candidates(X: np.ndarray, q: np.ndarray, base_p: float, t: int):
    ids = _topk(_power_sums(X, q, base_p), t).astype(np.int32)
    return ids, X.shape[0]


def trace_query(q, p, K: int, config: UhnswConfig, *, exact_candidates: bool = False,
                tau: float | None = None) -> QueryTrace:
    """Run one query and keep the intermediate pieces.

    ``exact_candidates`` swaps the graph search for a brute-force scan under
    the base metric. ``tau`` overrides ``config.tau`` for this call.
    """
    pv = as_p(p)
    lo, hi = config.p_range
    if not lo <= pv <= hi:
        raise ValueError(f"p={pv:g} outside the supported range [{lo:g}, {hi:g}]")
    if K < 1:
        raise ValueError("K must be >= 1")
    tau = config.tau if tau is None else tau
    X = config.dataset.data
    qv = _check_query(q, X.shape[1])

    direct = next((g for g in (config.base_lo, config.base_hi) if g.metric == pv), None)
    if direct is not None:
        t0 = time.perf_counter_ns()
        if exact_candidates:
            ids, n_base = _exact_candidates(X, qv, pv, min(K, X.shape[0]))
            dists = _power_sums(X[ids], qv, pv) ** (1.0 / pv)
        else:
            ids, dists, n_base = direct.search_arrays(qv, K, max(config.ef_search, K))
        gen_ns = time.perf_counter_ns() - t0
        stats = QueryStats(n_base=int(n_base), n_lp=0, batches_consumed=0,
                           terminated_early=False)
        return QueryTrace(ids, dists, stats, ids, gen_ns, 0)

    if K > config.t:
        raise ValueError(f"K={K} exceeds the candidate set size t={config.t}")
    base = select_base_index(pv, config)
    t0 = time.perf_counter_ns()
    if exact_candidates:
        cand, n_base = _exact_candidates(X, qv, base.metric, min(config.t, X.shape[0]))
    else:
        cand, _, n_base = base.search_arrays(qv, config.t, config.ef_search)
    t1 = time.perf_counter_ns()
    if cand.shape[0] < K:
        raise ValueError(f"only {cand.shape[0]} candidates for K={K}")
    kappa = config.kappa or K
    ids, dists, n_lp, batches, early = _verify_arrays(X, qv, pv, cand, K, tau, kappa)
    t2 = time.perf_counter_ns()
    stats = QueryStats(n_base=int(n_base), n_lp=int(n_lp), batches_consumed=int(batches),
                       terminated_early=bool(early))
    return QueryTrace(ids, dists, stats, cand, t1 - t0, t2 - t1)


def query(qt: QueryTuple, config: UhnswConfig, *, exact_candidates: bool = False):
    """Top-K of ``qt.q`` under ``L_{qt.p}``; returns ``(results, QueryStats)``."""
    tr = trace_query(qt.q, qt.p, qt.K, config, exact_candidates=exact_candidates)
    return _scored(tr.ids, tr.dists), tr.stats


# ---------------------------------------------------------------------------
# idealized recall
# ---------------------------------------------------------------------------


def idealized_recall(dataset: Dataset, queries, p, K: int, t: int, base_metric,
                     truth=None) -> float:
    """Mean recall when the candidates are the exact base-metric top-``t``.

    Candidates are fully re-ranked under ``L_p`` (no early stop), so this is
    the ceiling that graph search plus verification can reach. ``truth``
    may supply precomputed exact L_p ids (one row per query, >= K columns).
    """
    pv = as_p(p)
    base_p = base_metric.p if isinstance(base_metric, MetricParam) else as_p(base_metric)
    if not 1 <= K <= t:
        raise ValueError(f"need 1 <= K <= t, got K={K}, t={t}")
    if t > dataset.n:
        raise ValueError(f"t={t} exceeds dataset size {dataset.n}")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    X = dataset.data
    total = 0.0
    for i, q in enumerate(queries):
        target = _power_sums(X, q, pv)
        cand = _topk(_power_sums(X, q, base_p), t) if base_p != pv else _topk(target, t)
        order = np.argsort(cand, kind="stable")
        cand = cand[order]
        top = cand[np.argsort(target[cand], kind="stable")[:K]]
        exact = truth[i][:K] if truth is not None else _topk(target, K)
        total += len(set(top.tolist()) & set(np.asarray(exact).tolist())) / K
    return total / queries.shape[0]
