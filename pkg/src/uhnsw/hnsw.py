"""Hierarchical navigable small-world graph over one fixed L_p base metric.

The graph is stored in flat arrays so the numba kernels can walk it:

* ``nbr0[n, 2M]`` / ``cnt0[n]``: layer-0 adjacency (degree cap 2M).
* ``slot[n]``: row into the upper-layer arrays, ``-1`` for layer-0-only nodes.
* ``nbr_up[n_up, max_level, M]`` / ``cnt_up[n_up, max_level]``: layers >= 1.

Distances inside the graph are p-th power sums (``sum |x_i - q_i|^p``); the
root is applied only to returned results. Every ordering compares
``(dist, id)`` lexicographically so ties always go to the lower id.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from .io import Dataset, atomic_write_bytes
from .metrics import as_p, pth_power, root_of

MAGIC = b"UHNSW1"


class ScoredId(NamedTuple):
    id: int
    dist: float


@dataclass(frozen=True)
class HnswParams:
    M: int = 32
    ef_construction: int = 500
    seed: int = 0
    metric: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", as_p(self.metric))
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.ef_construction < self.M:
            raise ValueError(
                f"ef_construction ({self.ef_construction}) must be >= M ({self.M})"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


# ---------------------------------------------------------------------------
# heap primitives over parallel (key, id) arrays
# ---------------------------------------------------------------------------


@njit(inline="always")
def _lt(da, ia, db, ib):
    return da < db or (da == db and ia < ib)


@njit(cache=True, nogil=True)
def _min_push(keys, ids, size, d, i):
    k = size
    while k > 0:
        parent = (k - 1) >> 1
        if _lt(d, i, keys[parent], ids[parent]):
            keys[k] = keys[parent]
            ids[k] = ids[parent]
            k = parent
        else:
            break
    keys[k] = d
    ids[k] = i
    return size + 1


@njit(cache=True, nogil=True)
def _min_pop(keys, ids, size):
    size -= 1
    d = keys[size]
    i = ids[size]
    k = 0
    while True:
        c = 2 * k + 1
        if c >= size:
            break
        if c + 1 < size and _lt(keys[c + 1], ids[c + 1], keys[c], ids[c]):
            c += 1
        if _lt(keys[c], ids[c], d, i):
            keys[k] = keys[c]
            ids[k] = ids[c]
            k = c
        else:
            break
    if size > 0:
        keys[k] = d
        ids[k] = i
    return size


@njit(cache=True, nogil=True)
def _max_push(keys, ids, size, d, i):
    k = size
    while k > 0:
        parent = (k - 1) >> 1
        if _lt(keys[parent], ids[parent], d, i):
            keys[k] = keys[parent]
            ids[k] = ids[parent]
            k = parent
        else:
            break
    keys[k] = d
    ids[k] = i
    return size + 1


@njit(cache=True, nogil=True)
def _max_pop(keys, ids, size):
    size -= 1
    d = keys[size]
    i = ids[size]
    k = 0
    while True:
        c = 2 * k + 1
        if c >= size:
            break
        if c + 1 < size and _lt(keys[c], ids[c], keys[c + 1], ids[c + 1]):
            c += 1
        if _lt(d, i, keys[c], ids[c]):
            keys[k] = keys[c]
            ids[k] = ids[c]
            k = c
        else:
            break
    if size > 0:
        keys[k] = d
        ids[k] = i
    return size


@njit(cache=True, nogil=True)
def _sort_pairs(keys, ids):
    order = np.argsort(ids, kind="mergesort")
    keys = keys[order]
    ids = ids[order]
    order = np.argsort(keys, kind="mergesort")
    return keys[order], ids[order]


# ---------------------------------------------------------------------------
# graph walking
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _adjacency(node, level, nbr0, cnt0, slot, nbr_up, cnt_up):
    if level == 0:
        return nbr0[node, : cnt0[node]]
    s = slot[node]
    return nbr_up[s, level - 1, : cnt_up[s, level - 1]]


@njit(cache=True, nogil=True)
def _greedy(data, p, Q, qi, cur, cur_d, level, nbr0, cnt0, slot, nbr_up, cnt_up):
    evals = 0
    changed = True
    while changed:
        changed = False
        adj = _adjacency(cur, level, nbr0, cnt0, slot, nbr_up, cnt_up)
        for j in range(adj.shape[0]):
            e = adj[j]
            de = pth_power(Q, qi, data, e, p)
            evals += 1
            if _lt(de, e, cur_d, cur):
                cur = e
                cur_d = de
                changed = True
    return cur, cur_d, evals


@njit(cache=True, nogil=True)
def _search_layer(data, p, Q, qi, ep, ep_d, ef, level, nbr0, cnt0, slot, nbr_up, cnt_up,
                  visited, epoch):
    """Best-first search on one layer for query row ``Q[qi]``.

    Returns (keys, ids) ascending and the eval count.
    """
    n = data.shape[0]
    ck = np.empty(n + 1, np.float32)
    ci = np.empty(n + 1, np.int32)
    rk = np.empty(ef + 1, np.float32)
    ri = np.empty(ef + 1, np.int32)
    visited[ep] = epoch
    cs = _min_push(ck, ci, 0, ep_d, ep)
    rs = _max_push(rk, ri, 0, ep_d, ep)
    evals = 0
    while cs > 0:
        cd = ck[0]
        c = ci[0]
        if rs >= ef and _lt(rk[0], ri[0], cd, c):
            break
        cs = _min_pop(ck, ci, cs)
        adj = _adjacency(c, level, nbr0, cnt0, slot, nbr_up, cnt_up)
        for j in range(adj.shape[0]):
            e = adj[j]
            if visited[e] == epoch:
                continue
            visited[e] = epoch
            de = pth_power(Q, qi, data, e, p)
            evals += 1
            if rs < ef or _lt(de, e, rk[0], ri[0]):
                cs = _min_push(ck, ci, cs, de, e)
                rs = _max_push(rk, ri, rs, de, e)
                if rs > ef:
                    rs = _max_pop(rk, ri, rs)
    keys, ids = _sort_pairs(rk[:rs].copy(), ri[:rs].copy())
    return keys, ids, evals


@njit(cache=True, nogil=True)
def _select_neighbors(data, p, cand_k, cand_i, m):
    """Diversity heuristic with fill-up; candidates must be sorted ascending."""
    nc = cand_i.shape[0]
    chosen = np.empty(m, np.int32)
    nchosen = 0
    pruned = np.empty(nc, np.int32)
    npruned = 0
    for a in range(nc):
        if nchosen >= m:
            break
        c = cand_i[a]
        dq = cand_k[a]
        good = True
        for b in range(nchosen):
            if pth_power(data, c, data, chosen[b], p) < dq:
                good = False
                break
        if good:
            chosen[nchosen] = c
            nchosen += 1
        else:
            pruned[npruned] = c
            npruned += 1
    b = 0
    while nchosen < m and b < npruned:
        chosen[nchosen] = pruned[b]
        nchosen += 1
        b += 1
    return chosen[:nchosen]


@njit(cache=True, nogil=True)
def _connect(data, p, node, new, level, cap, nbr0, cnt0, slot, nbr_up, cnt_up):
    """Add edge node -> new, shrinking node's list with the heuristic on overflow."""
    if level == 0:
        row = nbr0[node]
        cnt = cnt0[node]
    else:
        s = slot[node]
        row = nbr_up[s, level - 1]
        cnt = cnt_up[s, level - 1]
    if cnt < cap:
        row[cnt] = new
        cnt += 1
    else:
        keys = np.empty(cnt + 1, np.float32)
        ids = np.empty(cnt + 1, np.int32)
        for j in range(cnt):
            ids[j] = row[j]
            keys[j] = pth_power(data, node, data, row[j], p)
        ids[cnt] = new
        keys[cnt] = pth_power(data, node, data, new, p)
        keys, ids = _sort_pairs(keys, ids)
        kept = _select_neighbors(data, p, keys, ids, cap)
        cnt = kept.shape[0]
        row[:cnt] = kept
    if level == 0:
        cnt0[node] = cnt
    else:
        cnt_up[slot[node], level - 1] = cnt


@njit(cache=True, nogil=True)
def _build_graph(data, p, M, efc, levels, slot, nbr0, cnt0, nbr_up, cnt_up):
    n = data.shape[0]
    visited = np.zeros(n, np.uint32)
    epoch = np.uint32(0)
    ep = 0
    top = levels[0]
    for i in range(1, n):
        lvl = levels[i]
        cur = ep
        cur_d = pth_power(data, i, data, cur, p)
        for lc in range(top, lvl, -1):
            cur, cur_d, _ = _greedy(data, p, data, i, cur, cur_d, lc, nbr0, cnt0, slot,
                                    nbr_up, cnt_up)
        for lc in range(min(lvl, top), -1, -1):
            epoch += np.uint32(1)
            keys, ids, _ = _search_layer(data, p, data, i, cur, cur_d, efc, lc, nbr0, cnt0, slot,
                                         nbr_up, cnt_up, visited, epoch)
            chosen = _select_neighbors(data, p, keys, ids, M)
            k = chosen.shape[0]
            if lc == 0:
                nbr0[i, :k] = chosen
                cnt0[i] = k
                cap = 2 * M
            else:
                nbr_up[slot[i], lc - 1, :k] = chosen
                cnt_up[slot[i], lc - 1] = k
                cap = M
            for j in range(k):
                _connect(data, p, chosen[j], i, lc, cap, nbr0, cnt0, slot, nbr_up, cnt_up)
            cur = ids[0]
            cur_d = keys[0]
        if lvl > top:
            top = lvl
            ep = i
    return ep, top


@njit(cache=True, nogil=True)
def _knn_search_kernel(data, p, q, k, ef, ep, top, nbr0, cnt0, slot, nbr_up, cnt_up):
    Q = q.reshape(1, q.shape[0])
    cur = ep
    cur_d = pth_power(Q, 0, data, cur, p)
    evals = 1
    for lc in range(top, 0, -1):
        cur, cur_d, e = _greedy(data, p, Q, 0, cur, cur_d, lc, nbr0, cnt0, slot, nbr_up, cnt_up)
        evals += e
    visited = np.zeros(data.shape[0], np.uint8)
    keys, ids, e = _search_layer(data, p, Q, 0, cur, cur_d, max(ef, k), 0, nbr0, cnt0, slot,
                                 nbr_up, cnt_up, visited, np.uint8(1))
    evals += e
    k = min(k, ids.shape[0])
    dists = np.empty(k, np.float64)
    for j in range(k):
        dists[j] = root_of(keys[j], p)
    return ids[:k].copy(), dists, evals


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def assign_levels(n: int, M: int, seed: int) -> np.ndarray:
    """Geometric levels ``floor(-ln(U) / ln(M))`` drawn in insertion order."""
    rng = np.random.default_rng(seed)
    u = 1.0 - rng.random(n)  # (0, 1]
    return np.floor(-np.log(u) / math.log(M)).astype(np.int32)


class HnswIndex:
    """A built graph plus a handle on the dataset it indexes."""

    def __init__(self, dataset: Dataset, params: HnswParams, levels, entry_point, nbr0, cnt0,
                 nbr_up, cnt_up):
        self.dataset = dataset
        self.params = params
        self.levels = levels
        self.entry_point = int(entry_point)
        self.max_level = int(levels[self.entry_point])
        self.nbr0 = nbr0
        self.cnt0 = cnt0
        self.nbr_up = nbr_up
        self.cnt_up = cnt_up
        self.slot = _slots(levels)

    @property
    def metric(self) -> float:
        return self.params.metric

    @property
    def n(self) -> int:
        return self.dataset.n

    def neighbors(self, node: int, level: int = 0) -> np.ndarray:
        """Out-edges of ``node`` on ``level`` (empty if the node is not on it)."""
        if level > self.levels[node]:
            return np.empty(0, np.int32)
        return _adjacency(node, level, self.nbr0, self.cnt0, self.slot, self.nbr_up,
                          self.cnt_up).copy()

    def search_arrays(self, q, t: int, ef_search: int):
        """Array form of :meth:`knn_search`: ``(ids, dists, n_base)``."""
        q = _check_query(q, self.dataset.d)
        if t < 1:
            raise ValueError("t must be >= 1")
        if ef_search < t:
            raise ValueError(f"ef_search ({ef_search}) must be >= t ({t})")
        return _knn_search_kernel(self.dataset.data, self.params.metric, q, t, ef_search,
                                  self.entry_point, self.max_level, self.nbr0, self.cnt0,
                                  self.slot, self.nbr_up, self.cnt_up)

    def count_distance_evals(self, q, t: int, ef_search: int) -> tuple[list[ScoredId], int]:
        ids, dists, evals = self.search_arrays(q, t, ef_search)
        return _scored(ids, dists), int(evals)

    def knn_search(self, q, t: int, ef_search: int) -> list[ScoredId]:
        return self.count_distance_evals(q, t, ef_search)[0]

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        pr = self.params
        out = [
            MAGIC,
            struct.pack("<iiQd", pr.M, pr.ef_construction, pr.seed, pr.metric),
            struct.pack("<iiii", self.n, self.dataset.d, self.entry_point, self.max_level),
            bytes.fromhex(self.dataset.digest),
            self.levels.astype("<i4").tobytes(),
        ]
        for level in range(self.max_level + 1):
            for node in np.flatnonzero(self.levels >= level):
                adj = self.neighbors(int(node), level)
                out.append(struct.pack("<i", adj.shape[0]))
                out.append(adj.astype("<i4").tobytes())
        return b"".join(out)

    def save(self, path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, dataset: Dataset) -> HnswIndex:
        if raw[:6] != MAGIC:
            raise ValueError("not an index snapshot (bad magic)")
        off = 6
        M, efc, seed, metric = struct.unpack_from("<iiQd", raw, off)
        off += struct.calcsize("<iiQd")
        n, d, ep, max_level = struct.unpack_from("<iiii", raw, off)
        off += 16
        digest = raw[off:off + 20].hex()
        off += 20
        if (n, d) != (dataset.n, dataset.d) or digest != dataset.digest:
            raise ValueError("snapshot was built over a different dataset")
        params = HnswParams(M=M, ef_construction=efc, seed=seed, metric=metric)
        levels = np.frombuffer(raw, "<i4", n, off).astype(np.int32)
        off += 4 * n
        nbr0, cnt0, nbr_up, cnt_up = _alloc(levels, M)
        slot = _slots(levels)
        for level in range(max_level + 1):
            for node in np.flatnonzero(levels >= level):
                (cnt,) = struct.unpack_from("<i", raw, off)
                off += 4
                adj = np.frombuffer(raw, "<i4", cnt, off)
                off += 4 * cnt
                if level == 0:
                    nbr0[node, :cnt] = adj
                    cnt0[node] = cnt
                else:
                    nbr_up[slot[node], level - 1, :cnt] = adj
                    cnt_up[slot[node], level - 1] = cnt
        if off != len(raw):
            raise ValueError("trailing bytes after index snapshot")
        return cls(dataset, params, levels, ep, nbr0, cnt0, nbr_up, cnt_up)

    @classmethod
    def load(cls, path, dataset: Dataset) -> HnswIndex:
        return cls.from_bytes(Path(path).read_bytes(), dataset)

    def fingerprint(self) -> str:
        return hashlib.sha1(self.to_bytes()).hexdigest()


def _slots(levels: np.ndarray) -> np.ndarray:
    slot = np.full(levels.shape[0], -1, np.int32)
    upper = np.flatnonzero(levels > 0)
    slot[upper] = np.arange(upper.shape[0], dtype=np.int32)
    return slot


def _alloc(levels: np.ndarray, M: int):
    n = levels.shape[0]
    n_up = int((levels > 0).sum())
    depth = max(int(levels.max()), 1)
    nbr0 = np.zeros((n, 2 * M), np.int32)
    cnt0 = np.zeros(n, np.int32)
    nbr_up = np.zeros((max(n_up, 1), depth, M), np.int32)
    cnt_up = np.zeros((max(n_up, 1), depth), np.int32)
    return nbr0, cnt0, nbr_up, cnt_up


def _check_query(q, d: int) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != d:
        raise ValueError(f"query dimension {q.shape} does not match dataset d={d}")
    if not np.isfinite(q).all():
        raise ValueError("query must contain only finite components")
    return q


def _scored(ids, dists) -> list[ScoredId]:
    return [ScoredId(int(i), float(x)) for i, x in zip(ids, dists)]


def build(dataset: Dataset, params: HnswParams | None = None) -> HnswIndex:
    """Insert every point in dataset order; deterministic given ``params.seed``."""
    if not isinstance(dataset, Dataset):
        dataset = Dataset(np.asarray(dataset))
    params = params or HnswParams()
    levels = assign_levels(dataset.n, params.M, params.seed)
    slot = _slots(levels)
    nbr0, cnt0, nbr_up, cnt_up = _alloc(levels, params.M)
    ep, _ = _build_graph(dataset.data, params.metric, params.M, params.ef_construction,
                         levels, slot, nbr0, cnt0, nbr_up, cnt_up)
    return HnswIndex(dataset, params, levels, ep, nbr0, cnt0, nbr_up, cnt_up)


def knn_search(index: HnswIndex, q, t: int, ef_search: int) -> list[ScoredId]:
    return index.knn_search(q, t, ef_search)


def count_distance_evals(index: HnswIndex, q, t: int, ef_search: int):
    return index.count_distance_evals(q, t, ef_search)
