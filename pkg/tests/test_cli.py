from __future__ import annotations

import csv
import json

import pytest

from chitree.cli import main


@pytest.fixture
def board(tmp_path):
    out = tmp_path / "board.csv"
    assert main(["generate", "chessboard", "--n", "300", "--seed", "2", "--out", str(out)]) == 0
    return out, out.with_suffix(".schema")


@pytest.fixture
def xor_files(tmp_path):
    data = tmp_path / "xor.csv"
    rows = ["a,b,y"] + [f"{a},{b},{'T' if (a == 'p') != (b == 'u') else 'F'}"
                        for _ in range(15) for a in "pq" for b in "uv"]
    data.write_text("\n".join(rows) + "\n")
    schema = tmp_path / "xor.schema"
    schema.write_text("a c\nb c\ny d\n")
    return data, schema


def read_preds(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestTrainPredict:
    def test_train_reports_leaves(self, board, tmp_path, capsys):
        data, schema = board
        model = tmp_path / "m.json"
        code = main(["train", "--data", str(data), "--schema", str(schema), "--folds", "5",
                     "--out", str(model)])
        assert code == 0 and model.exists()
        out = capsys.readouterr().out
        assert "leaves" in out and "training misclassifications" in out

    def test_same_seed_identical_files(self, board, tmp_path):
        data, schema = board
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path, threads in ((a, "1"), (b, "3")):
            assert main(["train", "--data", str(data), "--schema", str(schema), "--folds", "5",
                         "--seed", "4", "--threads", threads, "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_method(self, board, tmp_path, capsys):
        data, schema = board
        code = main(["train", "--data", str(data), "--schema", str(schema), "--method", "Z",
                     "--out", str(tmp_path / "m.json")])
        assert code == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, board):
        _, schema = board
        code = main(["train", "--data", str(tmp_path / "nope.csv"), "--schema", str(schema),
                     "--out", str(tmp_path / "m.json")])
        assert code == 2

    def test_replay_zero_error_tree(self, xor_files, tmp_path):
        data, schema = xor_files
        model, preds = tmp_path / "m.json", tmp_path / "p.csv"
        assert main(["train", "--data", str(data), "--schema", str(schema), "--folds", "3",
                     "--out", str(model)]) == 0
        assert main(["predict", "--model", str(model), "--data", str(data), "--out", str(preds),
                     "--leaf"]) == 0
        got = read_preds(preds)
        with open(data, newline="") as fh:
            truth = [r["y"] for r in csv.DictReader(fh)]
        assert [r["predicted"] for r in got] == truth
        assert all(r["leaf"].isdigit() for r in got)

    def test_all_missing_row(self, xor_files, tmp_path):
        data, schema = xor_files
        model, preds = tmp_path / "m.json", tmp_path / "p.csv"
        main(["train", "--data", str(data), "--schema", str(schema), "--folds", "3", "--out", str(model)])
        new = tmp_path / "new.csv"
        new.write_text("b,a\nNA,\nzz,p\n")
        assert main(["predict", "--model", str(model), "--data", str(new), "--out", str(preds)]) == 0
        assert all(r["predicted"] in ("F", "T") for r in read_preds(preds))

    def test_header_mismatch(self, xor_files, tmp_path):
        data, schema = xor_files
        model = tmp_path / "m.json"
        main(["train", "--data", str(data), "--schema", str(schema), "--folds", "3", "--out", str(model)])
        bad = tmp_path / "bad.csv"
        bad.write_text("a,c\np,u\n")
        assert main(["predict", "--model", str(model), "--data", str(bad)]) == 2

    def test_bad_model_file(self, tmp_path, xor_files):
        data, _ = xor_files
        junk = tmp_path / "junk.json"
        junk.write_text("{not json")
        assert main(["predict", "--model", str(junk), "--data", str(data)]) == 2

    @pytest.mark.parametrize("method", ["K", "N", "GF"])
    def test_other_methods(self, board, tmp_path, method):
        data, schema = board
        model = tmp_path / "m.json"
        args = ["train", "--data", str(data), "--schema", str(schema), "--method", method,
                "--folds", "3", "--out", str(model)]
        if method == "GF":
            args += ["--trees", "5"]
        assert main(args) == 0
        assert json.loads(model.read_text())["format_version"] == 1


class TestOtherCommands:
    def test_cv_json_and_csv(self, board, tmp_path):
        data, schema = board
        j, c = tmp_path / "cv.json", tmp_path / "cv.csv"
        base = ["cv", "--data", str(data), "--schema", str(schema), "--folds", "3"]
        assert main(base + ["--out", str(j)]) == 0
        res = json.loads(j.read_text())
        assert 0 <= res["error"] <= 1 and len(res["per_fold"]) == 3
        assert main(base + ["--out", str(c), "--format", "csv"]) == 0
        assert c.read_text().splitlines()[0] == "fold,error"

    def test_cv_rejects_one_fold(self, board):
        data, schema = board
        assert main(["cv", "--data", str(data), "--schema", str(schema), "--folds", "1"]) == 1

    def test_simulate_bias(self, tmp_path):
        out = tmp_path / "bias.json"
        assert main(["simulate", "bias-independence", "--trials", "200", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert len(rep["probabilities"]) == 6
        assert sum(rep["probabilities"]) == pytest.approx(1.0, abs=1e-9)

    def test_simulate_zero_trials(self):
        assert main(["simulate", "bias-dependence", "--trials", "0"]) == 1

    def test_simulate_chessboard(self, tmp_path):
        out = tmp_path / "cb.csv"
        assert main(["simulate", "chessboard", "--seed", "1", "--format", "csv", "--out", str(out)]) == 0
        rows = read_preds(out)
        assert len(rows) == 1 and int(rows[0]["leaves"]) >= 1 and "training_errors" in rows[0]

    def test_export_formats(self, xor_files, tmp_path):
        data, schema = xor_files
        model = tmp_path / "m.json"
        main(["train", "--data", str(data), "--schema", str(schema), "--folds", "3", "--out", str(model)])
        txt, dot = tmp_path / "t.txt", tmp_path / "t.dot"
        assert main(["export", "--model", str(model), "--out", str(txt)]) == 0
        assert main(["export", "--model", str(model), "--format", "dot", "--out", str(dot)]) == 0
        assert txt.read_text().startswith("Node 1: a in {")
        assert dot.read_text().startswith("digraph tree {")

    def test_unknown_flag(self):
        assert main(["simulate", "chessboard", "--bogus"]) == 1

    def test_generate_roundtrip_schema(self, board):
        data, schema = board
        assert schema.read_text().splitlines()[-1] == "class d"
        assert data.read_text().splitlines()[0].startswith("X1,X2")
