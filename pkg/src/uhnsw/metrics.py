"""L_p distance kernels.

Three cost tiers are kept as separate code paths:

* ``FAST``      p in {1, 2}: add/sub/mul only.
* ``SQRT_FAST`` p in {0.5, 1.5}: one square root per component.
* ``GENERAL``   every other p: one ``pow`` call per component.

All kernels take float32 rows, accumulate in float32 over four independent
lanes, and return the *p-th power sum* ``sum |x_i - y_i|^p``. The root is taken
by :func:`root_of`. Ranking code works on the power sum directly since the
root is monotone.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

P_MIN = 0.0
P_MAX = 2.0


class Tier(enum.Enum):
    FAST = "fast"
    SQRT_FAST = "sqrt_fast"
    GENERAL = "general"


@dataclass(frozen=True)
class MetricParam:
    """A validated metric parameter ``p`` in ``(0, 2]``."""

    p: float

    def __post_init__(self) -> None:
        p = float(self.p)
        if not math.isfinite(p) or not (P_MIN < p <= P_MAX):
            raise ValueError(f"metric parameter p must lie in (0, 2], got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def tier(self) -> Tier:
        return tier_of(self.p)

    def __float__(self) -> float:
        return self.p


def tier_of(p: float) -> Tier:
    # exact comparisons on purpose: p is configuration, never computed
    if p == 1.0 or p == 2.0:
        return Tier.FAST
    if p == 0.5 or p == 1.5:
        return Tier.SQRT_FAST
    return Tier.GENERAL


def as_p(p) -> float:
    """Accept a float or a :class:`MetricParam`; return a validated float."""
    if isinstance(p, MetricParam):
        return p.p
    return MetricParam(p).p


# ---------------------------------------------------------------------------
# kernels
#
# Each kernel compares row ``i`` of ``X`` with row ``j`` of ``Y`` (float32,
# C-contiguous) and returns the float32 power sum. Rows are addressed by index
# rather than passed as slices, and the kernels are compiled without the
# refcounting runtime: passing an array view across a jitted call costs two
# atomic refcount updates, which dominated the kernel itself for small d.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, fastmath=True, _nrt=False)
def _sum_l1(X, i, Y, j):
    d = X.shape[1]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    k = 0
    while k + 4 <= d:
        s0 += abs(X[i, k] - Y[j, k])
        s1 += abs(X[i, k + 1] - Y[j, k + 1])
        s2 += abs(X[i, k + 2] - Y[j, k + 2])
        s3 += abs(X[i, k + 3] - Y[j, k + 3])
        k += 4
    while k < d:
        s0 += abs(X[i, k] - Y[j, k])
        k += 1
    return (s0 + s1) + (s2 + s3)


@njit(cache=True, nogil=True, fastmath=True, _nrt=False)
def _sum_l2(X, i, Y, j):
    d = X.shape[1]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    k = 0
    while k + 4 <= d:
        a = X[i, k] - Y[j, k]
        b = X[i, k + 1] - Y[j, k + 1]
        c = X[i, k + 2] - Y[j, k + 2]
        e = X[i, k + 3] - Y[j, k + 3]
        s0 += a * a
        s1 += b * b
        s2 += c * c
        s3 += e * e
        k += 4
    while k < d:
        a = X[i, k] - Y[j, k]
        s0 += a * a
        k += 1
    return (s0 + s1) + (s2 + s3)


@njit(cache=True, nogil=True, fastmath=True, _nrt=False)
def _sum_l05(X, i, Y, j):
    d = X.shape[1]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    k = 0
    while k + 4 <= d:
        s0 += np.sqrt(abs(X[i, k] - Y[j, k]))
        s1 += np.sqrt(abs(X[i, k + 1] - Y[j, k + 1]))
        s2 += np.sqrt(abs(X[i, k + 2] - Y[j, k + 2]))
        s3 += np.sqrt(abs(X[i, k + 3] - Y[j, k + 3]))
        k += 4
    while k < d:
        s0 += np.sqrt(abs(X[i, k] - Y[j, k]))
        k += 1
    return (s0 + s1) + (s2 + s3)


@njit(cache=True, nogil=True, fastmath=True, _nrt=False)
def _sum_l15(X, i, Y, j):
    d = X.shape[1]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    k = 0
    while k + 4 <= d:
        a = abs(X[i, k] - Y[j, k])
        b = abs(X[i, k + 1] - Y[j, k + 1])
        c = abs(X[i, k + 2] - Y[j, k + 2])
        e = abs(X[i, k + 3] - Y[j, k + 3])
        s0 += a * np.sqrt(a)
        s1 += b * np.sqrt(b)
        s2 += c * np.sqrt(c)
        s3 += e * np.sqrt(e)
        k += 4
    while k < d:
        a = abs(X[i, k] - Y[j, k])
        s0 += a * np.sqrt(a)
        k += 1
    return (s0 + s1) + (s2 + s3)


# no fastmath here: the slow tier must stay a plain per-component pow call
@njit(cache=True, nogil=True, _nrt=False)
def _sum_pow(X, i, Y, j, p):
    d = X.shape[1]
    s0 = np.float32(0.0)
    s1 = np.float32(0.0)
    s2 = np.float32(0.0)
    s3 = np.float32(0.0)
    k = 0
    while k + 4 <= d:
        s0 += np.float32(math.pow(abs(X[i, k] - Y[j, k]), p))
        s1 += np.float32(math.pow(abs(X[i, k + 1] - Y[j, k + 1]), p))
        s2 += np.float32(math.pow(abs(X[i, k + 2] - Y[j, k + 2]), p))
        s3 += np.float32(math.pow(abs(X[i, k + 3] - Y[j, k + 3]), p))
        k += 4
    while k < d:
        s0 += np.float32(math.pow(abs(X[i, k] - Y[j, k]), p))
        k += 1
    return (s0 + s1) + (s2 + s3)


@njit(cache=True, nogil=True, _nrt=False)
def pth_power(X, i, Y, j, p):
    """Tier-dispatched ``sum |X[i] - Y[j]|^p`` over float32 rows."""
    if p == 1.0:
        return _sum_l1(X, i, Y, j)
    if p == 2.0:
        return _sum_l2(X, i, Y, j)
    if p == 0.5:
        return _sum_l05(X, i, Y, j)
    if p == 1.5:
        return _sum_l15(X, i, Y, j)
    return _sum_pow(X, i, Y, j, p)


@njit(cache=True, nogil=True)
def root_of(s, p):
    """Turn a power sum back into a distance."""
    s = float(s)
    if p == 1.0:
        return s
    if p == 2.0:
        return math.sqrt(s)
    if p == 0.5:
        return s * s
    return math.pow(s, 1.0 / p)


@njit(cache=True, nogil=True)
def _reference_pth_power(x, y, p):
    # scalar double-precision loop; the correctness oracle for the kernels
    s = 0.0
    for i in range(x.shape[0]):
        s += math.pow(abs(np.float64(x[i]) - np.float64(y[i])), p)
    return s


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float32)
    y = np.ascontiguousarray(y, dtype=np.float32)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("vectors must be one-dimensional")
    if x.shape[0] == 0:
        raise ValueError("vectors must have at least one component")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} != {y.shape[0]}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("vectors must contain only finite components")
    return x, y


def lp_distance_pth_power(x, y, p, *, force_general: bool = False) -> float:
    """Return ``sum |x_i - y_i|^p``; same ordering as :func:`lp_distance`."""
    pv = as_p(p)
    x, y = _check_pair(x, y)
    X, Y = x.reshape(1, -1), y.reshape(1, -1)
    if force_general:
        return float(_sum_pow(X, 0, Y, 0, pv))
    return float(pth_power(X, 0, Y, 0, pv))


def lp_distance(x, y, p, *, force_general: bool = False) -> float:
    """L_p distance ``(sum |x_i - y_i|^p)^(1/p)`` between two vectors.

    ``force_general`` bypasses the fast paths and uses the per-component
    ``pow`` kernel for any p; it exists so the tiers can be cross-checked.
    """
    pv = as_p(p)
    s = lp_distance_pth_power(x, y, pv, force_general=force_general)
    return float(root_of(s, pv))


def reference_lp_distance(x, y, p) -> float:
    """Double-precision scalar loop, independent of the tiered kernels."""
    pv = as_p(p)
    x, y = _check_pair(x, y)
    return math.pow(_reference_pth_power(x, y, pv), 1.0 / pv)


@njit(cache=True, nogil=True)
def _timing_loop(pool, p, reps):
    # i and j advance by different strides so every pair recurs; no division
    m = pool.shape[0]
    sink = 0.0
    i = 0
    j = 1
    for _ in range(reps):
        sink += root_of(pth_power(pool, i, pool, j, p), p)
        i += 1
        if i == m:
            i = 0
        j += 3
        if j >= m:
            j -= m
    return sink


def time_distance_kernel(d: int, p, reps: int = 100_000, seed: int = 0) -> float:
    """Mean wall-clock nanoseconds per distance evaluation for dimension ``d``.

    Inputs rotate through a small pool of random vectors so the compiler
    cannot hoist the work out of the loop. One short warm-up run is excluded.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    pv = as_p(p)
    rng = np.random.default_rng(seed)
    pool = rng.standard_normal((17, d)).astype(np.float32)
    _timing_loop(pool, pv, min(reps, 64))
    t0 = time.perf_counter_ns()
    sink = _timing_loop(pool, pv, reps)
    elapsed = time.perf_counter_ns() - t0
    if not math.isfinite(sink):
        raise RuntimeError("non-finite timing sink")
    return max(elapsed, 1) / reps
