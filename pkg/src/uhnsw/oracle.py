"""Exact brute-force K-NN under any L_p, recall, and a ground-truth file cache.

Everything here runs in float64 with plain numpy and shares no code with the
float32 kernels in :mod:`uhnsw.metrics`, so it can serve as their referee.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hnsw import ScoredId
from .io import Dataset, atomic_write_bytes
from .metrics import as_p

log = logging.getLogger(__name__)

GT_MAGIC = b"UHGT1"
_GT_HEADER = "<iid"

_CHUNK_ELEMS = 1 << 22


def _power_sums(X: np.ndarray, q: np.ndarray, p: float) -> np.ndarray:
    """``sum_i |x_i - q_i|^p`` for every row of ``X``, in float64."""
    q = np.asarray(q, dtype=np.float64)
    out = np.empty(X.shape[0], np.float64)
    step = max(1, _CHUNK_ELEMS // max(X.shape[1], 1))
    for lo in range(0, X.shape[0], step):
        diff = np.abs(X[lo:lo + step].astype(np.float64) - q)
        if p == 1.0:
            out[lo:lo + step] = diff.sum(axis=1)
        elif p == 2.0:
            out[lo:lo + step] = np.einsum("ij,ij->i", diff, diff)
        else:
            out[lo:lo + step] = np.power(diff, p).sum(axis=1)
    return out


def _topk(sums: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the power sums: equal sums keep ascending id order
    if k < sums.shape[0]:
        kth = np.partition(sums, k - 1)[k - 1]
        pool = np.flatnonzero(sums <= kth)
    else:
        pool = np.arange(sums.shape[0])
    order = np.argsort(sums[pool], kind="stable")
    return pool[order][:k]


def brute_force_ids(X: np.ndarray, q, p: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Array form: exact top-``k`` ids and their L_p distances."""
    sums = _power_sums(X, q, p)
    ids = _topk(sums, k)
    return ids, sums[ids] ** (1.0 / p)


def brute_force_knn(dataset: Dataset, q, p, K: int) -> list[ScoredId]:
    pv = as_p(p)
    if not 1 <= K <= dataset.n:
        raise ValueError(f"K={K} must be in [1, n={dataset.n}]")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (dataset.d,):
        raise ValueError(f"query dimension {q.shape} does not match dataset d={dataset.d}")
    ids, dists = brute_force_ids(dataset.data, q, pv, K)
    return [ScoredId(int(i), float(x)) for i, x in zip(ids, dists)]


def recall(result_ids, truth_ids) -> float:
    """``|S* ∩ S| / K`` for equal-size id collections."""
    result = set(int(i) for i in result_ids)
    truth = set(int(i) for i in truth_ids)
    k = len(truth_ids)
    if len(result_ids) != k or len(result) != k or len(truth) != k:
        raise ValueError(
            f"recall needs K distinct ids on both sides, got {len(result_ids)} and {k}"
        )
    return len(result & truth) / k


@dataclass(frozen=True)
class GroundTruth:
    """Exact top-K ids for each query, computed under one ``p``."""

    ids: np.ndarray  # (n_queries, K) int32
    p: float
    K: int

    def __post_init__(self) -> None:
        ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        if ids.ndim != 2 or ids.shape[1] != self.K:
            raise ValueError(f"ground truth must have shape (n_queries, {self.K})")
        object.__setattr__(self, "ids", ids)

    @property
    def n_queries(self) -> int:
        return self.ids.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.ids[i]

    def to_bytes(self) -> bytes:
        return (GT_MAGIC + struct.pack(_GT_HEADER, self.n_queries, self.K, self.p)
                + self.ids.astype("<i4").tobytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> GroundTruth:
        if raw[:5] != GT_MAGIC:
            raise ValueError("not a ground-truth file (bad magic)")
        nq, k, p = struct.unpack_from(_GT_HEADER, raw, 5)
        off = 5 + struct.calcsize(_GT_HEADER)
        if len(raw) != off + 4 * nq * k:
            raise ValueError("ground-truth file size does not match its header")
        ids = np.frombuffer(raw, "<i4", nq * k, off).reshape(nq, k)
        return cls(ids=ids, p=p, K=k)

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> GroundTruth:
        return cls.from_bytes(Path(path).read_bytes())


def compute_ground_truth(dataset: Dataset, queries: np.ndarray, p, K: int) -> GroundTruth:
    pv = as_p(p)
    if not 1 <= K <= dataset.n:
        raise ValueError(f"K={K} must be in [1, n={dataset.n}]")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if queries.shape[1] != dataset.d:
        raise ValueError("query dimension does not match dataset")
    ids = np.empty((queries.shape[0], K), np.int32)
    for i, q in enumerate(queries):
        ids[i] = _topk(_power_sums(dataset.data, q, pv), K)
    return GroundTruth(ids=ids, p=pv, K=K)


def cache_key(dataset: Dataset, queries: np.ndarray, p: float, K: int) -> str:
    qh = hashlib.sha1(np.ascontiguousarray(queries, dtype=np.float32).tobytes()).hexdigest()
    return f"gt-{dataset.digest[:12]}-{qh[:12]}-p{as_p(p):g}-K{K}.uhgt"


class GroundTruthCache:
    """Directory of ground-truth files keyed by (dataset, queries, p, K)."""

    def __init__(self, root):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path_for(self, dataset: Dataset, queries, p, K: int) -> Path:
        return self.root / cache_key(dataset, queries, p, K)

    def get(self, dataset: Dataset, queries, p, K: int) -> GroundTruth:
        path = self.path_for(dataset, queries, p, K)
        if path.exists():
            gt = GroundTruth.load(path)
            if gt.K == K and gt.n_queries == len(queries):
                self.hits += 1
                return gt
            log.warning("stale ground-truth file %s, recomputing", path)
        self.misses += 1
        gt = compute_ground_truth(dataset, queries, p, K)
        gt.save(path)
        return gt

    def lookup(self, dataset: Dataset, queries, p, K: int) -> GroundTruth:
        """Like :meth:`get` but never computes; a missing file is an error."""
        path = self.path_for(dataset, queries, p, K)
        if not path.exists():
            raise FileNotFoundError(f"no ground truth for p={as_p(p):g}, K={K} under {self.root}")
        self.hits += 1
        return GroundTruth.load(path)
