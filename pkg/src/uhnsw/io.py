"""Dataset container and readers/writers for the fvecs/bvecs/ivecs formats.

Every record is ``[d: int32 LE][d components]``; fvecs stores float32,
bvecs uint8 and ivecs int32, all little-endian.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

_HEADER = np.dtype("<i4")


class FormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable ``n x d`` float32 matrix with a name."""

    data: np.ndarray
    name: str = "dataset"

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"dataset must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"dataset must have n >= 1 and d >= 1, got shape {arr.shape}")
        bad = ~np.isfinite(arr).all(axis=1)
        if bad.any():
            raise ValueError(f"record {int(np.argmax(bad))} has a non-finite component")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    @cached_property
    def digest(self) -> str:
        """Content hash (shape + bytes), used to key cached ground truth."""
        h = hashlib.sha1()
        h.update(f"{self.n}x{self.d}".encode())
        h.update(self.data.tobytes())
        return h.hexdigest()


def _read_records(path, comp_dtype: np.dtype) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        raise FormatError(f"{path}: no records")
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated record 0 at byte offset 0")
    d = int(np.frombuffer(raw, dtype=_HEADER, count=1)[0])
    if d <= 0:
        raise FormatError(f"{path}: record 0 declares dimension {d}")
    rec_bytes = 4 + d * comp_dtype.itemsize
    n, tail = divmod(len(raw), rec_bytes)
    rec_dtype = np.dtype([("d", _HEADER), ("v", comp_dtype, (d,))])
    recs = np.frombuffer(raw, dtype=rec_dtype, count=n)
    dims = recs["d"]
    mismatch = np.flatnonzero(dims != d)
    if mismatch.size:
        i = int(mismatch[0])
        raise FormatError(
            f"{path}: record {i} has dimension {int(dims[i])}, expected {d} "
            f"(byte offset {i * rec_bytes})"
        )
    if tail >= 4:
        d_tail = int(np.frombuffer(raw, dtype=_HEADER, count=1, offset=n * rec_bytes)[0])
        if d_tail != d:
            raise FormatError(
                f"{path}: record {n} has dimension {d_tail}, expected {d} "
                f"(byte offset {n * rec_bytes})"
            )
    if tail:
        raise FormatError(f"{path}: truncated record {n} at byte offset {n * rec_bytes}")
    return recs["v"]


def load_fvecs(path, name: str | None = None) -> Dataset:
    vals = _read_records(path, np.dtype("<f4")).astype(np.float32)
    return Dataset(vals, name=name or Path(path).stem)


def load_bvecs(path, name: str | None = None) -> Dataset:
    vals = _read_records(path, np.dtype("u1")).astype(np.float32)
    return Dataset(vals, name=name or Path(path).stem)


def load_ivecs(path) -> np.ndarray:
    """Integer records (ground-truth files); returns an ``n x d`` int32 array."""
    return _read_records(path, np.dtype("<i4")).astype(np.int32)


def load_vectors(path, name: str | None = None) -> Dataset:
    """Dispatch on file suffix: ``.fvecs`` or ``.bvecs``."""
    suffix = Path(path).suffix.lower()
    if suffix == ".fvecs":
        return load_fvecs(path, name)
    if suffix == ".bvecs":
        return load_bvecs(path, name)
    raise FormatError(f"{path}: unsupported suffix {suffix!r} (want .fvecs or .bvecs)")


def _encode(rows: np.ndarray, comp_dtype: str) -> bytes:
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise ValueError("rows must be a non-empty 2-D array")
    n, d = rows.shape
    rec_dtype = np.dtype([("d", _HEADER), ("v", comp_dtype, (d,))])
    out = np.empty(n, dtype=rec_dtype)
    out["d"] = d
    out["v"] = rows
    return out.tobytes()


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_fvecs(path, data) -> None:
    rows = data.data if isinstance(data, Dataset) else np.asarray(data, dtype=np.float32)
    atomic_write_bytes(path, _encode(rows, "<f4"))


def write_bvecs(path, data) -> None:
    rows = data.data if isinstance(data, Dataset) else np.asarray(data)
    if rows.min() < 0 or rows.max() > 255 or not np.array_equal(rows, np.round(rows)):
        raise ValueError("bvecs components must be integers in [0, 255]")
    atomic_write_bytes(path, _encode(rows.astype(np.uint8), "u1"))


def write_ivecs(path, rows) -> None:
    atomic_write_bytes(path, _encode(np.asarray(rows, dtype=np.int32), "<i4"))


def subsample(dataset: Dataset, m: int, seed: int) -> Dataset:
    """``m`` rows drawn uniformly without replacement, reproducible under ``seed``."""
    if not 1 <= m <= dataset.n:
        raise ValueError(f"cannot sample {m} rows from a dataset of {dataset.n}")
    idx = np.random.default_rng(seed).choice(dataset.n, size=m, replace=False)
    return Dataset(dataset.data[idx], name=f"{dataset.name}-sub{m}-s{seed}")


def gen_synthetic(n: int, d: int, distribution: str = "gaussian", seed: int = 0) -> Dataset:
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    if distribution == "gaussian":
        data = rng.standard_normal((n, d), dtype=np.float32)
    elif distribution == "uniform01":
        data = rng.random((n, d), dtype=np.float32)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return Dataset(data, name=f"{distribution}-{n}x{d}-s{seed}")


def parse_source(source: str) -> Dataset:
    """Resolve a dataset argument.

    Either a path to an ``.fvecs``/``.bvecs`` file, or
    ``synth:<distribution>:<n>:<d>:<seed>``. A file path may carry a
    ``@<m>:<seed>`` suffix to take a uniform subsample.
    """
    if source.startswith("synth:"):
        parts = source.split(":")
        if len(parts) != 5:
            raise ValueError(f"bad synthetic source {source!r}; want synth:<dist>:<n>:<d>:<seed>")
        _, dist, n, d, seed = parts
        return gen_synthetic(int(n), int(d), dist, int(seed))
    path, _, sub = source.partition("@")
    ds = load_vectors(path)
    if sub:
        m, _, seed = sub.partition(":")
        ds = subsample(ds, int(m), int(seed or 0))
    return ds
