import hashlib
import json

import pytest

from ecgc.cli import main

TINY = ["--fast", "--max-epochs", "2", "--lstm-hidden", "4", "--embed", "8", "--mlp-hidden", "8",
        "--out-hidden", "8", "--rounds", "5"]


def tree_digest(d):
    h = hashlib.sha256()
    for p in sorted(d.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["generate", "--per-class", "8", "--seed", "7", "--out", str(d),
                 "--duration", "10", "12"]) == 0
    return d


def test_generate_counts_and_rerun_identical(corpus, tmp_path, capsys):
    assert main(["generate", "--per-class", "8", "--seed", "7", "--out", str(tmp_path / "b"),
                 "--duration", "10", "12"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["records"] == 32 and manifest["seed"] == 7
    assert tree_digest(corpus) == tree_digest(tmp_path / "b")


def test_generate_invalid(tmp_path, capsys):
    assert main(["generate", "--per-class", "0", "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "per-class" in capsys.readouterr().err


def test_interpret_normal_and_missing(tmp_path, capsys):
    main(["generate", "--per-class", "1", "--seed", "3", "--out", str(tmp_path), "--duration",
          "20", "20"])
    capsys.readouterr()
    labels = dict(l.split(",") for l in (tmp_path / "labels.csv").read_text().split())
    rid = next(k for k, v in labels.items() if v == "N")
    truth = json.loads((tmp_path / f"{rid}.truth.json").read_text())
    assert main(["interpret", str(tmp_path / rid), "--show-discarded"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "discarded" in out and out["id"] == rid
    if not truth["inverted"] and truth["subtype"] == "":
        assert [s["kind"] for s in out["segments"]] == ["NORMAL"]
    assert main(["interpret", str(tmp_path / "nope")]) == 2
    assert "nope" in capsys.readouterr().err


def test_featurize(corpus, tmp_path, capsys):
    assert main(["featurize", "--data", str(corpus), "--out", str(tmp_path / "g.csv"),
                 "--beats", str(tmp_path / "b.jsonl")]) == 0
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert len(rows) == 33 and len(rows[0].split(",")) == 43
    assert len((tmp_path / "b.jsonl").read_text().splitlines()) == 32


def test_train_predict_evaluate(corpus, tmp_path, capsys):
    model = tmp_path / "model"
    assert main(["train", "--data", str(corpus), "--labels", str(corpus / "labels.csv"),
                 "--seed", "1", "--model", str(model), *TINY]) == 0
    assert (model / "manifest.json").is_file()
    ans = tmp_path / "answers.csv"
    assert main(["predict", "--model", str(model), "--data", str(corpus), "--out", str(ans)]) == 0
    lines = ans.read_text().splitlines()
    assert len(lines) == 32 and all(len(l.split(",")) == 2 for l in lines)
    capsys.readouterr()
    assert main(["evaluate", "--truth", str(corpus / "labels.csv"), "--answers",
                 str(corpus / "labels.csv"), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["score"] == 1.0
    assert main(["evaluate", "--truth", str(corpus / "labels.csv"), "--answers", str(ans)]) == 0
    assert "score" in capsys.readouterr().out
    assert main(["predict", "--model", str(tmp_path / "none"), "--data", str(corpus)]) == 2


def test_cv_table(corpus, capsys):
    assert main(["cv", "--data", str(corpus), "--labels", str(corpus / "labels.csv"), "--seed", "2",
                 "--k", "8", *TINY]) == 0
    table = capsys.readouterr().out.strip().splitlines()
    header = table[0].split()
    assert header[1:9] == [f"F{i}" for i in range(1, 9)] and header[-2:] == ["mean", "(SD)"]
    assert len(table) == 4


def test_missing_data_dir_exit_2(tmp_path, capsys):
    assert main(["featurize", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 2
