import os

import pytest

from uhnsw.bench import SCHEMA, read_csv
from uhnsw.cli import main

DATA = "synth:uniform01:2000:16:7"
QUERIES = "synth:uniform01:100:16:8"
SRC = ["--data", DATA, "--queries", QUERIES]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def env(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    for p, name in ((1, "g1"), (2, "g2"), (0.5, "g05")):
        assert run("build", "--data", DATA, "--metric", p, "--M", 16, "--ef-construction", 100,
                   "--seed", 3, "--out", root / f"{name}.idx") == 0
    assert run("gt", *SRC, "--p", "all", "--K", 10, "--out", root / "gt") == 0
    assert run("gt", *SRC, "--p", "0.2,0.3,0.51,0.7,0.9", "--K", 10, "--out", root / "gt") == 0
    pair = ["--index-lo", root / "g1.idx", "--index-hi", root / "g2.idx", "--gt", root / "gt",
            "--K", 10, "--t", 100, "--ef-search", 200, "--serial"]
    return root, pair


class TestBuild:
    def test_rebuild_identical(self, env, tmp_path):
        root, _ = env
        out = tmp_path / "again.idx"
        assert run("build", "--data", DATA, "--metric", 1, "--M", 16, "--ef-construction", 100,
                   "--seed", 3, "--out", out) == 0
        assert out.read_bytes() == (root / "g1.idx").read_bytes()

    def test_invalid_m(self, tmp_path, capsys):
        assert run("build", "--data", DATA, "--metric", 1, "--M", 1,
                   "--out", tmp_path / "x.idx") != 0
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "x.idx").exists()

    def test_missing_file(self, tmp_path):
        assert run("build", "--data", tmp_path / "nope.fvecs", "--metric", 1,
                   "--out", tmp_path / "x.idx") != 0


class TestGroundTruth:
    def test_three_files_then_cache_hit(self, tmp_path, capsys):
        args = ("gt", *SRC, "--p", "0.5,1,2", "--K", 50, "--out", tmp_path)
        assert run(*args) == 0
        files = sorted(tmp_path.iterdir())
        assert len(files) == 3
        assert all(f.stat().st_size == 5 + 16 + 4 * 100 * 50 for f in files)
        assert "hits=0 misses=3" in capsys.readouterr().out
        mtimes = [f.stat().st_mtime_ns for f in files]
        assert run(*args) == 0
        assert "hits=3 misses=0" in capsys.readouterr().out
        assert [f.stat().st_mtime_ns for f in files] == mtimes

    def test_k_above_n(self, tmp_path):
        assert run("gt", "--data", "synth:uniform01:20:4:1", "--queries",
                   "synth:uniform01:3:4:2", "--K", 21, "--out", tmp_path) != 0


class TestQuery:
    def test_fixed_shortcut(self, env, tmp_path):
        _, pair = env
        out = tmp_path / "q.csv"
        assert run("query", *SRC, *pair, "--p", 1, "--p-mode", "fixed", "--out", out) == 0
        rows = read_csv(out)
        assert all(float(r["n_lp"]) == 0 for r in rows)
        assert rows[0]["schema"] == SCHEMA

    def test_uniform_rows(self, env, tmp_path):
        _, pair = env
        out, per_q = tmp_path / "q.csv", tmp_path / "per.csv"
        assert run("query", *SRC, *pair, "--out", out, "--per-query", per_q) == 0
        rows = read_csv(out)
        assert len(rows) == 17
        assert [r["p"] for r in rows[-1:]] == ["all"]
        assert {r["variant"] for r in rows} == {"uhnsw"}
        assert len(read_csv(per_q)) == 100
        for r in rows:
            assert 0 <= float(r["recall"]) <= 1
            assert float(r["n_lp"]) <= 100

    def test_tau_trade_off(self, env, tmp_path):
        _, pair = env
        stats = {}
        for tau in (0.75, 0.92):
            out = tmp_path / f"q{tau}.csv"
            assert run("query", *SRC, *pair, "--tau", tau, "--out", out) == 0
            agg = read_csv(out)[-1]
            stats[tau] = float(agg["n_lp"]), float(agg["recall"])
        assert stats[0.75][0] < stats[0.92][0]
        assert stats[0.75][1] <= stats[0.92][1]

    def test_reproducible_counts(self, env, tmp_path):
        _, pair = env
        cols = ("p", "recall", "n_base", "n_lp")
        runs = []
        for i in range(2):
            out = tmp_path / f"r{i}.csv"
            assert run("query", *SRC, *pair, "--out", out) == 0
            runs.append([{c: r[c] for c in cols} for r in read_csv(out)])
        assert runs[0] == runs[1]

    def test_extended_variant(self, env, tmp_path):
        root, _ = env
        out = tmp_path / "e.csv"
        assert run("query", *SRC, "--variant", "e", "--index-lo", root / "g05.idx",
                   "--index-hi", root / "g1.idx", "--gt", root / "gt", "--K", 10, "--t", 100,
                   "--ef-search", 200, "--p", "0.2,0.3,0.7", "--p-mode", "each",
                   "--out", out) == 0
        rows = read_csv(out)
        assert [r["p"] for r in rows] == ["0.2", "0.3", "0.7", "all"]
        assert {r["variant"] for r in rows} == {"uhnsw-e"}

    def test_baseline(self, env, tmp_path):
        root, _ = env
        out = tmp_path / "b.csv"
        assert run("query", *SRC, "--variant", "hnsw", "--index", root / "g2.idx",
                   "--gt", root / "gt", "--K", 10, "--out", out) == 0
        rows = read_csv(out)
        assert rows[0]["variant"] == "hnsw-baseline"
        assert float(rows[-1]["recall"]) > 0.9

    def test_missing_ground_truth_names_p(self, env, tmp_path, capsys):
        _, pair = env
        out = tmp_path / "q.csv"
        assert run("query", *SRC, *pair, "--p", 1.25, "--p-mode", "fixed", "--out", out) != 0
        assert "p=1.25" in capsys.readouterr().err
        assert not out.exists()
        assert not [f for f in os.listdir(tmp_path) if f.endswith(".tmp")]

    def test_out_of_range_p(self, env, tmp_path):
        _, pair = env
        assert run("query", *SRC, *pair, "--p", 0.2, "--p-mode", "fixed",
                   "--out", tmp_path / "q.csv") != 0


class TestSweep:
    def test_empty_values(self, env, tmp_path):
        _, pair = env
        assert run("sweep", *SRC, *pair, "--param", "t", "--values", "",
                   "--out", tmp_path / "s.csv") != 0

    def test_t_sweep_flat_qps(self, env, tmp_path):
        root, _ = env
        out = tmp_path / "s.csv"
        # 1000 queries so each timed pass is long enough to measure to 10%
        src = ["--data", DATA, "--queries", "synth:uniform01:1000:16:9"]
        assert run("gt", *src, "--p", "all", "--K", 10, "--out", tmp_path / "gt") == 0
        assert run("sweep", *src, "--index-lo", root / "g1.idx", "--index-hi", root / "g2.idx",
                   "--gt", tmp_path / "gt", "--K", 10, "--ef-search", 500, "--serial", "--repeat", 3,
                   "--param", "t", "--values", "100,200,300,400,500", "--out", out) == 0
        rows = read_csv(out)
        assert [int(r["t"]) for r in rows] == [100, 200, 300, 400, 500]
        qps = [float(r["qps"]) for r in rows if int(r["t"]) >= 200]
        assert max(qps) <= 1.1 * min(qps)

    def test_tau_sweep_recall_non_decreasing(self, env, tmp_path):
        _, pair = env
        out = tmp_path / "s.csv"
        assert run("sweep", *SRC, *pair, "--param", "tau",
                   "--values", "0.75,0.8,0.85,0.9,0.95", "--out", out) == 0
        rec = [float(r["recall"]) for r in read_csv(out)]
        assert rec == sorted(rec)

    def test_idealized(self, env, tmp_path):
        root, _ = env
        out = tmp_path / "i.csv"
        assert run("sweep", *SRC, "--gt", root / "gt", "--K", 10, "--idealized",
                   "--param", "t", "--values", "10,50", "--p", "0.7,1", "--base", "1",
                   "--out", out) == 0
        rows = read_csv(out)
        assert len(rows) == 4
        assert {r["variant"] for r in rows} == {"idealized-L1"}
        assert all(float(r["recall"]) == 1.0 for r in rows if r["p"] == "1")


class TestAblation:
    def test_table(self, env, tmp_path):
        _, pair = env
        out = tmp_path / "a.csv"
        assert run("ablation", *SRC, *pair, "--out", out) == 0
        rows = read_csv(out)
        assert [float(r["p"]) for r in rows] == [0.51, 0.9]
        for r in rows:
            assert float(r["recall_rerank"]) >= float(r["recall_initial"])
            assert float(r["verification_ms"]) < float(r["verification_full_ms"])
            assert float(r["n_lp"]) <= float(r["n_lp_full"]) == 100


class TestDistBench:
    def test_single_cell(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("dist-bench", "--d", 8, "--p", 0.7, "--reps", 1000, "--out", out) == 0
        (row,) = read_csv(out)
        assert row["tier"] == "general" and float(row["mean_ns"]) > 0

    def test_fast_tier_roughly_linear_in_d(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("dist-bench", "--d", "128,256,960", "--p", 1, "--reps", 50_000,
                   "--out", out) == 0
        ns = {int(r["d"]): float(r["mean_ns"]) for r in read_csv(out)}
        for d in (256, 960):
            ratio = (ns[d] / ns[128]) / (d / 128)
            assert 1 / 3 <= ratio <= 3
