import json

import numpy as np
import pytest

from eevdag.cli import main
from eevdag.graph import Dag, read_dag
from eevdag.sem import DataSet, new_sem, nonfaithful_example, read_model, sample, write_csv, write_model


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulate:
    def test_nonfaithful(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        code, _, _ = run(["simulate", "--nonfaithful", "--n", 500, "--seed", 1, "--out", out], capsys)
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 501 and lines[0] == "X1,X2,X3"
        assert read_model(tmp_path / "d.model.json").dag == nonfaithful_example().dag

    def test_random_sparse(self, tmp_path, capsys):
        argv = ["simulate", "--p", 5, "--p-edge", "sparse", "--n", 100, "--seed", 7,
                "--out", tmp_path / "a.csv", "--model-out", tmp_path / "a.json"]
        assert run(argv, capsys)[0] == 0
        assert read_model(tmp_path / "a.json").p == 5

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            run(["simulate", "--p", 4, "--a", 0.5, "--n", 50, "--seed", 3, "--out", tmp_path / f"{name}.csv"], capsys)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.model.json").read_bytes() == (tmp_path / "b.model.json").read_bytes()

    def test_seed_required(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--nonfaithful", "--n", 5, "--out", tmp_path / "d.csv"], capsys)
        assert code == 1 and "seed" in err

    def test_seed_auto(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--nonfaithful", "--n", 5, "--seed", "auto", "--out", tmp_path / "d.csv"],
                           capsys)
        assert code == 0 and "seed" in err

    def test_unwritable(self, tmp_path, capsys):
        code, _, _ = run(["simulate", "--nonfaithful", "--n", 5, "--seed", 1, "--out", tmp_path / "no" / "d.csv"],
                         capsys)
        assert code == 1


class TestFit:
    def test_roundtrip_with_shd(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        run(["simulate", "--nonfaithful", "--n", 500, "--seed", 1, "--out", data], capsys)
        code, _, _ = run(["fit", data, "--seed", 1, "--out", tmp_path / "fit.json",
                          "--graph-out", tmp_path / "g.txt", "--dot", tmp_path / "g.dot"], capsys)
        assert code == 0
        res = json.loads((tmp_path / "fit.json").read_text())
        edges = {(e["parent"], e["child"]) for e in res["best"]["edges"]}
        assert edges == {(0, 1), (0, 2), (1, 2)}
        truth = tmp_path / "truth.txt"
        truth.write_text("0 1\n0 2\n1 2\n")
        code, out, _ = run(["shd", tmp_path / "g.txt", truth], capsys)
        assert code == 0 and out.strip() == "0"
        assert (tmp_path / "g.dot").read_text().startswith("digraph")

    def test_deterministic(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        run(["simulate", "--p", 5, "--n", 200, "--seed", 2, "--out", data], capsys)
        a = run(["fit", data, "--seed", 4, "--verbose"], capsys)[1]
        b = run(["fit", data, "--seed", 4, "--verbose"], capsys)[1]
        assert a == b and "trace" in a

    def test_single_column(self, tmp_path, capsys, rng):
        X = rng.normal(size=(30, 1))
        write_csv(DataSet(X), tmp_path / "d.csv")
        code, out, _ = run(["fit", tmp_path / "d.csv", "--seed", 0], capsys)
        best = json.loads(out)["best"]
        assert code == 0 and best["edges"] == []
        assert best["sigma2_hat"] == pytest.approx(X.var())

    def test_lambda_zero_dense(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        run(["simulate", "--p", 4, "--n", 30, "--seed", 0, "--out", data], capsys)
        out = run(["fit", data, "--seed", 0, "--lambda", 0], capsys)[1]
        assert len(json.loads(out)["best"]["edges"]) == 6

    def test_malformed_csv(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n3,x\n")
        code, _, err = run(["fit", tmp_path / "bad.csv", "--seed", 0], capsys)
        assert code == 1 and "row 3" in err and "column 2" in err

    def test_pernode(self, tmp_path, capsys):
        data = tmp_path / "d.csv"
        run(["simulate", "--p", 4, "--a", 0.5, "--n", 200, "--seed", 5, "--out", data], capsys)
        out = run(["fit", data, "--seed", 0, "--score", "pernode", "--k-schedule", "4,8"], capsys)[1]
        res = json.loads(out)
        assert res["best"]["kind"] == "pernode" and len(res["restarts"]) == 2


class TestOracle:
    def test_population(self, tmp_path, capsys):
        write_model(nonfaithful_example(), tmp_path / "m.json")
        code, out, _ = run(["oracle", "--model", tmp_path / "m.json", "--population"], capsys)
        assert code == 0
        edges = {(e["parent"], e["child"]) for e in json.loads(out)["edges"]}
        assert edges == {(0, 1), (0, 2), (1, 2)}

    def test_identity_like_data(self, tmp_path, capsys, rng):
        write_csv(DataSet(rng.normal(size=(5000, 3))), tmp_path / "d.csv")
        out = run(["oracle", tmp_path / "d.csv"], capsys)[1]
        assert json.loads(out)["edges"] == []

    def test_refuses_above_cap(self, tmp_path, capsys, rng):
        write_csv(DataSet(rng.normal(size=(20, 6))), tmp_path / "d.csv")
        code, _, err = run(["oracle", tmp_path / "d.csv"], capsys)
        assert code == 1 and "cap of 5" in err


class TestScore:
    def test_empty_graph_kinds_agree(self, tmp_path, capsys):
        write_csv(DataSet(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])), tmp_path / "d.csv")
        (tmp_path / "g.txt").write_text("# p: 2\n")
        code, out, _ = run(["score", tmp_path / "d.csv", tmp_path / "g.txt"], capsys)
        res = json.loads(out)
        assert code == 0
        assert res["equal"]["nll"] == pytest.approx(res["pernode"]["nll"], rel=1e-14)
        assert res["preferred"] == "equal"

    def test_true_vs_reversed(self, tmp_path, capsys):
        m = new_sem(np.array([[0.0, 0.0], [1.0, 0.0]]))
        write_csv(sample(m, 5000, 1), tmp_path / "d.csv")
        (tmp_path / "fwd.txt").write_text("0 1\n")
        (tmp_path / "rev.txt").write_text("1 0\n")
        fwd = json.loads(run(["score", tmp_path / "d.csv", tmp_path / "fwd.txt"], capsys)[1])
        rev = json.loads(run(["score", tmp_path / "d.csv", tmp_path / "rev.txt"], capsys)[1])
        assert fwd["equal"]["score"] < rev["equal"]["score"]
        assert fwd["pernode"]["nll"] == pytest.approx(rev["pernode"]["nll"], rel=1e-10)

    def test_alpha_file(self, tmp_path, capsys):
        m = new_sem(np.zeros((2, 2)), 1.0, [1.0, 4.0])
        write_csv(sample(m, 4000, 2), tmp_path / "d.csv")
        (tmp_path / "g.txt").write_text("# p: 2\n")
        (tmp_path / "alpha.txt").write_text("1 4\n")
        out = run(["score", tmp_path / "d.csv", tmp_path / "g.txt", "--alpha", tmp_path / "alpha.txt",
                   "--kind", "equal"], capsys)[1]
        res = json.loads(out)
        assert res["equal"]["alpha"] == [1.0, 4.0]
        assert res["equal"]["sigma2_hat"] == pytest.approx(1.0, abs=0.05)
        assert "pernode" not in res

    def test_dimension_mismatch(self, tmp_path, capsys):
        write_csv(sample(nonfaithful_example(), 20, 0), tmp_path / "d.csv")
        (tmp_path / "g.txt").write_text("0 4\n")
        assert run(["score", tmp_path / "d.csv", tmp_path / "g.txt"], capsys)[0] == 1


class TestShd:
    def test_reversed(self, tmp_path, capsys):
        (tmp_path / "a.txt").write_text("0 1\n")
        (tmp_path / "b.txt").write_text("1 0\n")
        assert run(["shd", tmp_path / "a.txt", tmp_path / "b.txt"], capsys)[1].strip() == "2"
        assert run(["shd", tmp_path / "a.txt", tmp_path / "b.txt", "--as-cpdag"], capsys)[1].strip() == "0"
        assert run(["shd", tmp_path / "a.txt", tmp_path / "a.txt"], capsys)[1].strip() == "0"

    def test_cycle_is_input_error(self, tmp_path, capsys):
        (tmp_path / "a.txt").write_text("0 1\n1 0\n")
        assert run(["shd", tmp_path / "a.txt", tmp_path / "a.txt"], capsys)[0] == 1


class TestBench:
    def test_perturbation_csv(self, tmp_path, capsys):
        code, out, _ = run(["bench", "--scenario", "perturbation", "--p", 5, "--n", 100, "--reps", 2,
                            "--seed", 0, "--out-dir", tmp_path], capsys)
        assert code == 0 and "gds_eev" in out
        rows = (tmp_path / "perturbation_shd_dag.csv").read_text().splitlines()
        assert rows[0] == "a,method,quantile,value"
        assert len({r.split(",")[0] for r in rows[1:]}) == 10
        assert (tmp_path / "perturbation_shd_cpdag.csv").exists()
        assert json.loads((tmp_path / "perturbation_report.json").read_text())["spec"]["replicates"] == 2

    def test_nonfaithful_recovery_field(self, tmp_path, capsys):
        run(["bench", "--scenario", "nonfaithful", "--reps", 3, "--seed", 1, "--out-dir", tmp_path], capsys)
        rep = json.loads((tmp_path / "nonfaithful_report.json").read_text())
        assert "recovery_rate" in rep["cells"][0]

    def test_spec_errors_listed(self, tmp_path, capsys):
        (tmp_path / "s.json").write_text(json.dumps({"scenario": "sparse", "seed": 0, "replicates": 0, "p": [1]}))
        code, _, err = run(["bench", "--spec", tmp_path / "s.json", "--out-dir", tmp_path], capsys)
        assert code == 1 and "replicates" in err and "p:" in err


class TestUsage:
    def test_no_subcommand(self, capsys):
        assert run([], capsys)[0] == 1

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"], capsys)[0] == 1

    def test_help(self, capsys):
        code, out, _ = run(["fit", "--help"], capsys)
        assert code == 0 and "seed" in out
