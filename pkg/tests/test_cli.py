from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conftest import build_synthetic_corpus
from scurank.cli import main
from scurank.corpus import emit_corpus


@pytest.fixture()
def corpus_file(tmp_path):
    path = tmp_path / "docs.jsonl"
    emit_corpus(build_synthetic_corpus(n_docs=2, seed=3), path)
    return path


OFFLINE = ["--extractor", "offline", "--encoder", "offline"]


def _read_jsonl(path):
    return [json.loads(line) for line in open(path, encoding="utf-8") if line.strip()]


def test_rank_happy_path(corpus_file, tmp_path, capsys):
    out = tmp_path / "ranked.jsonl"
    code = main(["rank", "--in", str(corpus_file), "--out", str(out), *OFFLINE])
    assert code == 0
    records = _read_jsonl(out)
    assert len(records) == 2
    for record in records:
        assert set(record) == {"doc_id", "order", "scores"}
        assert sorted(record["scores"], key=record["scores"].get, reverse=True) == record["order"]
    manifest = json.loads((tmp_path / "ranked.jsonl.manifest.json").read_text())
    assert manifest["command"] == "rank"
    assert str(corpus_file) in manifest["inputs"]


def test_missing_required_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as err:
        main(["rank", "--out", "x.jsonl"])
    assert err.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_rank_reproducibility(corpus_file, tmp_path):
    out1, out2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
    assert main(["rank", "--in", str(corpus_file), "--out", str(out1), *OFFLINE]) == 0
    assert main(["rank", "--in", str(corpus_file), "--out", str(out2), *OFFLINE]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_extract_then_rank_matches_direct_rank(corpus_file, tmp_path):
    scus = tmp_path / "scus.jsonl"
    direct = tmp_path / "direct.jsonl"
    staged = tmp_path / "staged.jsonl"
    assert main(["extract", "--in", str(corpus_file), "--out", str(scus), *OFFLINE]) == 0
    assert main(["rank", "--in", str(corpus_file), "--out", str(direct), *OFFLINE]) == 0
    assert (
        main(
            ["rank", "--in", str(corpus_file), "--scus", str(scus), "--out", str(staged), *OFFLINE]
        )
        == 0
    )
    assert _read_jsonl(direct) == _read_jsonl(staged)


def test_stability_command_reports_perfect_agreement(corpus_file, tmp_path, capsys):
    out = tmp_path / "stab.jsonl"
    code = main(
        [
            "stability",
            "--in",
            str(corpus_file),
            "--runs",
            "5",
            "--shuffle",
            "--out",
            str(out),
            *OFFLINE,
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "alpha=1.0000" in printed
    summary = [r for r in _read_jsonl(out) if r["type"] == "summary"][0]
    assert summary["tau"] == 1.0
    assert summary["alpha"] == 1.0
    assert summary["shuffle"] is True


def test_stability_from_ranked_files(corpus_file, tmp_path):
    r1, r2 = tmp_path / "run1.jsonl", tmp_path / "run2.jsonl"
    assert main(["rank", "--in", str(corpus_file), "--out", str(r1), *OFFLINE]) == 0
    assert main(["rank", "--in", str(corpus_file), "--out", str(r2), *OFFLINE]) == 0
    out = tmp_path / "stab.jsonl"
    code = main(
        [
            "stability",
            "--in",
            str(corpus_file),
            "--from-ranked",
            str(r1),
            str(r2),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    summary = [r for r in _read_jsonl(out) if r["type"] == "summary"][0]
    assert summary["tau"] == 1.0


def test_penalty_scan_command(corpus_file, tmp_path, capsys):
    out = tmp_path / "scan.jsonl"
    code = main(["penalty-scan", "--in", str(corpus_file), "--out", str(out), *OFFLINE])
    assert code == 0
    records = _read_jsonl(out)
    assert len(records) == 12
    assert "transform" in capsys.readouterr().out


def test_stats_command(corpus_file, capsys):
    assert main(["stats", "--in", str(corpus_file)]) == 0
    assert "documents=2" in capsys.readouterr().out


def test_abstractiveness_command(corpus_file, tmp_path, capsys):
    out = tmp_path / "abs.jsonl"
    code = main(
        ["abstractiveness", "--in", str(corpus_file), "--source", "candidates", "--out", str(out)]
    )
    assert code == 0
    record = _read_jsonl(out)[0]
    assert 0.0 <= record["mean_coverage"] <= 1.0


def test_export_brio_from_ranked(corpus_file, tmp_path):
    ranked = tmp_path / "ranked.jsonl"
    assert main(["rank", "--in", str(corpus_file), "--out", str(ranked), *OFFLINE]) == 0
    out = tmp_path / "brio.jsonl"
    code = main(
        ["export-brio", "--in", str(corpus_file), "--ranked", str(ranked), "--out", str(out)]
    )
    assert code == 0
    ranked_records = {r["doc_id"]: r for r in _read_jsonl(ranked)}
    docs = _read_jsonl(corpus_file)
    for doc, record in zip(docs, _read_jsonl(out)):
        assert set(record) == {"article", "abstract", "candidates"}
        texts = {c["candidate_id"]: c["text"] for c in doc["candidates"]}
        expected = [texts[cid] for cid in ranked_records[doc["doc_id"]]["order"]]
        assert record["candidates"] == expected


def test_intrinsic_eval_command(tmp_path, capsys):
    extracted = tmp_path / "ext.jsonl"
    human = tmp_path / "hum.jsonl"
    line = {"doc_id": "d", "candidate_id": "c", "scus": ["the mayor resigned", "votes passed"]}
    extracted.write_text(json.dumps(line) + "\n")
    human.write_text(json.dumps(line) + "\n")
    code = main(["intrinsic-eval", "--extracted", str(extracted), "--human", str(human)])
    assert code == 0
    assert "R=1.0000 P=1.0000" in capsys.readouterr().out


def test_config_file_merged_flags_win(corpus_file, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"extractor": "offline", "encoder": "offline", "epsilon": 0.3}))
    out = tmp_path / "ranked.jsonl"
    code = main(
        ["rank", "--in", str(corpus_file), "--out", str(out), "--config", str(config)]
    )
    assert code == 0
    manifest = json.loads((tmp_path / "ranked.jsonl.manifest.json").read_text())
    assert manifest["config"]["epsilon"] == 0.3
    code = main(
        [
            "rank",
            "--in",
            str(corpus_file),
            "--out",
            str(out),
            "--config",
            str(config),
            "--epsilon",
            "0.1",
        ]
    )
    assert code == 0
    manifest = json.loads((tmp_path / "ranked.jsonl.manifest.json").read_text())
    assert manifest["config"]["epsilon"] == 0.1


def test_debug_cluster_dump(corpus_file, tmp_path):
    scus = tmp_path / "scus.jsonl"
    assert main(["extract", "--in", str(corpus_file), "--out", str(scus), *OFFLINE]) == 0
    out = tmp_path / "ranked.jsonl"
    debug = tmp_path / "clusters.jsonl"
    code = main(
        [
            "rank",
            "--in",
            str(corpus_file),
            "--scus",
            str(scus),
            "--out",
            str(out),
            "--debug-clusters",
            str(debug),
            *OFFLINE,
        ]
    )
    assert code == 0
    records = _read_jsonl(debug)
    assert len(records) == 2
    assert "condensed_tree" in records[0]
    assert "labels" in records[0]


def test_debug_cluster_dump_without_scus_file(corpus_file, tmp_path):
    out = tmp_path / "ranked.jsonl"
    debug = tmp_path / "clusters.jsonl"
    code = main(
        [
            "rank",
            "--in", str(corpus_file),
            "--out", str(out),
            "--debug-clusters", str(debug),
            *OFFLINE,
        ]
    )
    assert code == 0
    assert len(_read_jsonl(debug)) == 2


class _ChatStub(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        model = body["model"]
        reply = {"choices": [{"message": {"content": f"Summary by {model}."}}]}
        blob = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def log_message(self, *args):
        pass


def test_generate_command_with_stub_endpoint(corpus_file, tmp_path):
    server = HTTPServer(("127.0.0.1", 0), _ChatStub)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        out = tmp_path / "generated.jsonl"
        code = main(
            [
                "generate",
                "--in",
                str(corpus_file),
                "--out",
                str(out),
                "--models",
                "m1,m2",
                "--chat-base-url",
                f"http://127.0.0.1:{server.server_port}",
            ]
        )
        assert code == 0
        records = _read_jsonl(out)
        assert len(records) == 2
        assert [c["generator_id"] for c in records[0]["candidates"]] == ["m1", "m2"]
        assert records[0]["candidates"][0]["text"] == "Summary by m1."
    finally:
        server.shutdown()


def test_jobs_flag_keeps_input_order(corpus_file, tmp_path):
    out1, out4 = tmp_path / "j1.jsonl", tmp_path / "j4.jsonl"
    assert main(["rank", "--in", str(corpus_file), "--out", str(out1), "--jobs", "1", *OFFLINE]) == 0
    assert main(["rank", "--in", str(corpus_file), "--out", str(out4), "--jobs", "4", *OFFLINE]) == 0
    assert out1.read_bytes() == out4.read_bytes()
