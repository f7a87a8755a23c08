import json

import pytest

from hilrag.cli import run
from hilrag.corpus import dump_corpus, load_triplets, save_triplets

from conftest import make_docs, separable_fixture


@pytest.fixture
def corpus_file(tmp_path):
    docs = make_docs(n=8)
    path = tmp_path / "corpus.jsonl"
    dump_corpus(docs, path)
    return path, docs


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        run(["frobnicate"])
    assert e.value.code == 2


def test_ingest_subcommand(tmp_path, capsys):
    docs = make_docs(n=6)
    root = tmp_path / "raw"
    root.mkdir()
    (root / "all.json").write_text(
        json.dumps([d.to_json_obj() for d in docs]), encoding="utf-8")
    code = run(["ingest", "--corpus-dir", str(root),
                "--checkpoint", str(tmp_path / "ckpt.json"),
                "--out", str(tmp_path / "corpus.jsonl")])
    assert code == 0
    out = capsys.readouterr().out
    assert "config digest:" in out
    assert "accepted=6" in out


def test_mine_subcommand(tmp_path, corpus_file, capsys):
    path, docs = corpus_file
    out = tmp_path / "triplets.jsonl"
    code = run(["mine", "--corpus", str(path), "--out", str(out),
                "--synthetic", "5", "--seed", "3"])
    assert code == 0
    triplets = load_triplets(out)
    assert any(t.provenance == "synthetic" for t in triplets)


def test_train_eval_pre_post_on_separable_fixture(tmp_path, capsys):
    triplets = separable_fixture()
    tpath = tmp_path / "sep.jsonl"
    save_triplets(triplets, tpath)
    adapter_path = tmp_path / "adapter.json"

    pre = run(["eval", "--triplets", str(tpath), "--dimension", "64",
               "--label", "pre", "--out", str(tmp_path / "pre.jsonl")])
    assert pre == 0
    pre_report = json.loads((tmp_path / "pre.jsonl").read_text().splitlines()[0])

    code = run(["train", "--triplets", str(tpath), "--adapter",
                str(adapter_path), "--dimension", "64", "--loss", "triplet",
                "--learning-rate", "2.0", "--epochs", "20", "--seed", "7"])
    assert code == 0
    assert adapter_path.exists()
    assert adapter_path.with_suffix(".png").exists()  # training figure

    post = run(["eval", "--triplets", str(tpath), "--adapter",
                str(adapter_path), "--dimension", "64", "--label", "post",
                "--out", str(tmp_path / "post.jsonl")])
    assert post == 0
    post_report = json.loads(
        (tmp_path / "post.jsonl").read_text().splitlines()[0])
    assert post_report["accuracy"] >= 0.95
    assert post_report["accuracy"] >= pre_report["accuracy"] + 0.15


def test_no_negatives_flag(tmp_path):
    triplets = separable_fixture(n=20)
    tpath = tmp_path / "sep.jsonl"
    save_triplets(triplets, tpath)
    code = run(["train", "--triplets", str(tpath), "--adapter",
                str(tmp_path / "a.json"), "--dimension", "64",
                "--epochs", "2", "--no-negatives"])
    assert code == 0


def test_index_subcommand_and_eval_queries(tmp_path, corpus_file):
    path, docs = corpus_file
    snapshot = tmp_path / "index.json"
    assert run(["index", "--corpus", str(path), "--index", str(snapshot)]) == 0
    queries = tmp_path / "queries.jsonl"
    queries.write_text("".join(
        json.dumps({"query": d.searchable_text, "true_doc_id": d.id}) + "\n"
        for d in docs))
    code = run(["eval", "--queries", str(queries), "--index", str(snapshot),
                "--out", str(tmp_path / "r.jsonl")])
    assert code == 0
    report = json.loads((tmp_path / "r.jsonl").read_text().splitlines()[0])
    assert report["accuracy"] == 1.0


def test_report_subcommand_writes_table_jsonl_and_figure(tmp_path, capsys):
    inputs = tmp_path / "rows.jsonl"
    inputs.write_text(
        json.dumps({"label": "pre", "accuracy_pct": 50.69}) + "\n"
        + json.dumps({"label": "post", "accuracy_pct": 60.73}) + "\n")
    out = tmp_path / "cmp"
    assert run(["report", str(inputs), "--out", str(out)]) == 0
    assert out.with_suffix(".txt").exists()
    assert out.with_suffix(".jsonl").exists()
    assert out.with_suffix(".png").exists()
    assert "post" in out.with_suffix(".txt").read_text()


def test_domain_error_exits_1(tmp_path, capsys):
    code = run(["eval", "--triplets", str(tmp_path / "missing.jsonl"),
                "--out", str(tmp_path / "r.jsonl")])
    assert code == 1


def test_config_file_with_flag_override(tmp_path, corpus_file):
    path, docs = corpus_file
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "corpus": str(path), "index": str(tmp_path / "from_config.json")}))
    assert run(["--config", str(config), "index"]) == 0
    assert (tmp_path / "from_config.json").exists()
    # flag wins over config
    assert run(["--config", str(config), "index",
                "--index", str(tmp_path / "from_flag.json")]) == 0
    assert (tmp_path / "from_flag.json").exists()


def test_reproducible_outputs(tmp_path, corpus_file):
    path, docs = corpus_file
    out1, out2 = tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"
    for out in (out1, out2):
        assert run(["mine", "--corpus", str(path), "--out", str(out),
                    "--seed", "11", "--synthetic", "4"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
