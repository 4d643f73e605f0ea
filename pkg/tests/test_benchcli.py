import csv
import io
import statistics

import numpy as np
import pytest

from curkit.benchcli import HEADERS, ExperimentConfig, UsageError, main, run_experiment
from curkit.testmat import write_matrix_market


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse(text):
    return list(csv.DictReader(io.StringIO(text)))


def strip_timing(text):
    rows = list(csv.reader(io.StringIO(text)))
    drop = {i for i, h in enumerate(rows[0]) if h == "wall_time_s"}
    return [[v for i, v in enumerate(r) if i not in drop] for r in rows]


class TestThreshold:
    def test_low_rank_recovery(self, capsys):
        code, out, err = run_cli(
            capsys, "threshold", "--matrix", "gen:lowrank:1000,1000,100", "--eps", "1e-6", "--b", "50", "--reps", "5"
        )
        assert code == 0
        assert out.splitlines()[0] == ",".join(HEADERS["threshold"])
        rows = [r for r in parse(out) if r["method"] == "IterativeCUR"]
        assert len(rows) == 5
        for r in rows:
            assert float(r["rel_error_true"]) <= 1e-6 and int(r["final_rank"]) == 100
        assert "median_err" in err

    def test_trivial_threshold(self, capsys):
        code, out, _ = run_cli(capsys, "threshold", "--matrix", "gen:lehmer:30", "--eps", "1", "--b", "5", "--reps", "2")
        assert code == 0
        rows = parse(out)
        assert len(rows) == 4
        for r in rows:
            assert int(r["final_rank"]) == 0 and float(r["rel_error_true"]) == 1.0
        assert {r["rel_error_sketched"] for r in rows if r["method"] == "sLUPP"} == {""}

    def test_rerun_identical(self, capsys, tmp_path):
        args = ["threshold", "--matrix", "gen:lowrankpd:120,100,10", "--eps", "1e-4", "--b", "10", "--reps", "3"]
        outs = []
        for i in range(2):
            path = tmp_path / f"{i}.csv"
            assert main(args + ["--out", str(path), "--deterministic"]) == 0
            outs.append(strip_timing(path.read_text()))
        assert outs[0] == outs[1]
        capsys.readouterr()


class TestFixedRank:
    def test_exact_rank_eight(self, capsys):
        code, out, _ = run_cli(capsys, "fixed-rank", "--matrix", "gen:lowrank:60,50,8", "--ranks", "5,10", "--b", "4", "--reps", "2")
        assert code == 0
        assert out.splitlines()[0] == ",".join(HEADERS["fixed-rank"])
        rows = parse(out)
        for r in rows:
            if r["rank"] == "10" and r["method"] in ("IterativeCUR", "sLUPP"):
                assert float(r["rel_error"]) <= 1e-10
            if r["rank"] == "5" and r["method"] == "SVD":
                assert float(r["rel_error"]) > 0

    def test_rows_sorted(self, capsys):
        code, out, _ = run_cli(capsys, "fixed-rank", "--matrix", "gen:lehmer:40", "--ranks", "4,8", "--b", "4", "--reps", "3", "--jobs", "3")
        assert code == 0
        keys = [(r["method"], int(r["rank"]), int(r["rep"])) for r in parse(out)]
        assert keys == sorted(keys) and len(keys) == 18

    def test_svd_envelope_lehmer(self):
        cfg = ExperimentConfig("fixed-rank", "gen:lehmer:400", b=20, ranks=[40, 80, 160], reps=3)
        rows = run_experiment(cfg)
        svd = {r["rank"]: r["rel_error"] for r in rows if r["method"] == "SVD"}
        for r in rows:
            if r["method"] != "SVD":
                assert svd[r["rank"]] < r["rel_error"]

    def test_empty_ranks_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "fixed-rank", "--matrix", "gen:lehmer:10")
        assert code == 2 and "ranks" in err

    def test_unsorted_ranks(self):
        with pytest.raises(UsageError):
            ExperimentConfig("fixed-rank", "gen:lehmer:10", ranks=[5, 2])

    def test_rank_too_large(self, capsys):
        code, _, err = run_cli(capsys, "fixed-rank", "--matrix", "gen:lehmer:10", "--ranks", "11", "--b", "2")
        assert code == 2 and "exceeds" in err


class TestSelection:
    def test_identity(self, capsys):
        code, out, _ = run_cli(capsys, "selection", "--matrix", "gen:lowrank:12,12,12", "--ranks", "12", "--b", "4", "--reps", "1")
        assert code == 0
        rows = parse(out)
        assert {r["method"] for r in rows} == {"LUPP", "QRCP"}
        for r in rows:
            assert float(r["rel_error"]) <= 1e-12
            assert float(r["svd_error"]) == 0.0

    def test_identity_matrix_file(self, capsys, tmp_path):
        path = tmp_path / "eye.mtx"
        write_matrix_market(path, np.eye(6))
        code, out, _ = run_cli(capsys, "selection", "--matrix", f"mm:{path}", "--ranks", "6", "--b", "3", "--reps", "1")
        assert code == 0
        assert all(float(r["rel_error"]) == 0.0 for r in parse(out))


class TestBlockSize:
    def test_degenerate_block(self, capsys):
        code, out, _ = run_cli(capsys, "block-size", "--matrix", "gen:lehmer:50", "--blocks", "10", "--ranks", "10", "--reps", "1")
        assert code == 0
        assert out.splitlines()[0] == ",".join(HEADERS["block-size"])
        assert len(parse(out)) == 1

    def test_spread(self):
        cfg = ExperimentConfig("block-size", "gen:lowrankpd:800,800,40", blocks=[5, 25, 100], ranks=[200], reps=3)
        rows = run_experiment(cfg)
        meds = [statistics.median(r["rel_error"] for r in rows if r["block_size"] == b) for b in (5, 25, 100)]
        assert max(meds) <= 10 * min(meds)

    def test_missing_blocks(self, capsys):
        code, _, _ = run_cli(capsys, "block-size", "--matrix", "gen:lehmer:10", "--ranks", "2")
        assert code == 2


class TestErrors:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "threshold", "--matrix", f"mm:{tmp_path / 'nope.mtx'}", "--b", "2")
        assert code == 1 and "error" in err

    def test_bad_source(self, capsys):
        code, _, _ = run_cli(capsys, "threshold", "--matrix", "foo:bar")
        assert code == 2

    def test_bad_generator(self, capsys):
        code, _, err = run_cli(capsys, "threshold", "--matrix", "gen:lowrank:10", "--b", "2")
        assert code == 1 and err

    def test_argparse_failure(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["threshold"])
        assert info.value.code != 0
        capsys.readouterr()
