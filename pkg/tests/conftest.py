import os
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from uhnsw.hnsw import HnswParams, build
from uhnsw.io import gen_synthetic, load_fvecs, subsample
from uhnsw.oracle import GroundTruthCache

DESK_N = 10_000
DESK_QUERIES = 100
DESK_SEED = 42


def desk_corpus():
    """SIFT 10^4 subsample when available, else the gaussian fallback."""
    sift = os.environ.get("UHNSW_SIFT_DIR")
    if sift and (Path(sift) / "sift_base.fvecs").exists():
        base = load_fvecs(Path(sift) / "sift_base.fvecs")
        queries = load_fvecs(Path(sift) / "sift_query.fvecs")
        data = subsample(base, DESK_N, DESK_SEED)
        q = subsample(queries, DESK_QUERIES, DESK_SEED + 1)
        return data, q.data
    data = gen_synthetic(DESK_N, 128, "gaussian", DESK_SEED)
    q = gen_synthetic(DESK_QUERIES, 128, "gaussian", DESK_SEED + 1)
    return data, q.data


def build_desk_indexes(data, metrics=(0.5, 1.0, 2.0)):
    return {p: build(data, HnswParams(M=32, ef_construction=500, seed=7, metric=p))
            for p in metrics}


@pytest.fixture(scope="session")
def desk():
    data, queries = desk_corpus()
    return SimpleNamespace(data=data, queries=queries)


@pytest.fixture(scope="session")
def desk_indexes(desk):
    return build_desk_indexes(desk.data)


@pytest.fixture(scope="session")
def gt_cache(tmp_path_factory):
    return GroundTruthCache(tmp_path_factory.mktemp("gt"))


@pytest.fixture(scope="session")
def small():
    """n=2000, d=16 uniform corpus with graphs for each base metric."""
    data = gen_synthetic(2000, 16, "uniform01", 7)
    queries = gen_synthetic(100, 16, "uniform01", 8).data
    graphs = {p: build(data, HnswParams(M=16, ef_construction=200, seed=3, metric=p))
              for p in (0.5, 1.0, 2.0)}
    return SimpleNamespace(data=data, queries=queries, graphs=graphs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
