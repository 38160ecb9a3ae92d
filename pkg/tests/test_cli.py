"""Command-line interface smoke and round-trip tests."""

import io
import json

import pytest

from ctxsql.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, _ = run_cli(capsys, *argv)
    assert code == 0, out
    return json.loads(out)


# ------------------------------------------------------------------- score

def test_score_from_file(tmp_path, capsys):
    path = tmp_path / "q.sql"
    path.write_text("SELECT COUNT(*) FROM T WHERE A = 1")
    body = run_json(capsys, "score", str(path))
    assert body["score"] == 3
    assert body["features"]["number_of_tables"] == 1
    assert body["features"]["has_aggregation"] is True


def test_score_from_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("SELECT 1 FROM DUAL"))
    body = run_json(capsys, "score", "--time-to-create", "4")
    assert body["score"] == 5
    assert body["time_to_create"] == 4


def test_score_with_schema_validates(tmp_path, capsys):
    schema = tmp_path / "s.yaml"
    schema.write_text(
        "tables:\n  - name: t\n    columns: [{name: a, type: NUMBER}]\n")
    sql = tmp_path / "q.sql"
    sql.write_text("SELECT * FROM GHOST")
    body = run_json(capsys, "score", str(sql), "--schema", str(schema))
    assert body["validation"]["ok"] is False
    assert "GHOST" in body["validation"]["unknown_tables"]


def test_score_rejects_non_select(tmp_path, capsys):
    path = tmp_path / "q.sql"
    path.write_text("DROP TABLE T")
    code, out, _ = run_cli(capsys, "score", str(path))
    assert code == 1
    assert "error" in json.loads(out)


# -------------------------------------------------------------------- band

def test_band_oracle(capsys):
    body = run_json(capsys, "band", "2", "4", "4", "5", "6", "7", "9", "12")
    assert body["p25"] == 4 and body["p75"] == 7
    assert body["counts"] == {"low": 1, "medium": 5, "high": 2}
    assert body["boxplot"] == {"min": 2, "p25": 4, "median": 5.5,
                               "p75": 7, "max": 12}


def test_band_from_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("3, 3, 3"))
    body = run_json(capsys, "band")
    assert body["bands"] == ["medium", "medium", "medium"]


# ------------------------------------------------------------------- stats

def test_stats_2x2(capsys):
    body = run_json(capsys, "stats", "--table", "3,1;1,3")
    assert body["fisher_2x2"]["p_value"] == pytest.approx(34 / 70, abs=1e-9)
    assert body["fisher_rxc"]["p_value"] == pytest.approx(34 / 70, abs=1e-9)


def test_stats_rxc_only_for_wide_tables(capsys):
    body = run_json(capsys, "stats", "--table", "5,47,8;47,5,8")
    assert "fisher_2x2" not in body
    assert body["fisher_rxc"]["p_value"] < 1e-9


# -------------------------------------------------------- ingest / retrieve

def test_ingest_then_retrieve_round_trip(tmp_path, capsys):
    (tmp_path / "alpha.txt").write_text("case master table holds all cases")
    (tmp_path / "beta.txt").write_text("product family rows can be deleted")
    out = tmp_path / "index.json"
    body = run_json(capsys, "ingest",
                    "--doc", str(tmp_path / "alpha.txt"),
                    "--doc", str(tmp_path / "beta.txt"),
                    "--out", str(out),
                    "--chunk-size", "40", "--overlap", "10")
    assert body["indexed_documents"] == 2
    assert out.exists()
    hits = run_json(capsys, "retrieve", "--index", str(out),
                    "--text", "case master table", "-k", "2")
    assert hits[0]["chunk_id"].startswith("alpha#")
    assert hits[0]["similarity"] >= hits[1]["similarity"]


# ------------------------------------------------------------------- query

def test_query_via_packaged_replay(capsys):
    body = run_json(capsys, "query", "--phase", "schema_plus_context",
                    "--nlq", "How many new cases do we have?",
                    "--time-to-create", "2")
    assert body["extraction"]["kind"] == "sql"
    assert body["validation"]["ok"] is True
    assert body["score"] == 6


# ------------------------------------------------------- evaluate / report

def test_evaluate_writes_report_and_report_renders(tmp_path, capsys):
    out = tmp_path / "runs" / "report.json"
    out.parent.mkdir()
    code, stdout, _ = run_cli(capsys, "evaluate", "--seed", "7",
                              "--out", str(out))
    assert code == 0
    assert str(out) in stdout
    saved = json.loads(out.read_text())
    assert saved["phases"]["schema_only"]["summary"]["n"] == 12
    assert saved["run_metadata"]["seed"] == 7

    code, text, _ = run_cli(capsys, "report", "--runs", str(out.parent))
    assert code == 0
    assert "DB Schema Only" in text

    code, csv_text, _ = run_cli(capsys, "report", "--runs", str(out.parent),
                                "--csv")
    assert code == 0
    assert csv_text.splitlines()[0] == "phase,outcome,low,medium,high,total,pct"


def test_report_relabels_from_feedback(tmp_path, capsys):
    out = tmp_path / "runs" / "report.json"
    out.parent.mkdir()
    assert run_cli(capsys, "evaluate", "--seed", "7", "--out", str(out))[0] == 0
    labels = tmp_path / "labels.jsonl"
    labels.write_text(json.dumps({
        "id": "q02", "phase": "schema_only", "outcome": "fail",
        "labeler": "late-review"}) + "\n")
    code, text, _ = run_cli(capsys, "report", "--runs", str(out.parent),
                            "--labels", str(labels))
    assert code == 0
    # q02 (low band) moves from pass to fail in the schema-only table:
    # machine baseline pass=2/fail=7 becomes pass=1/fail=8
    assert "pass                 0       1       0       1" in text
    assert "fail                 1       4       3       8" in text


def test_evaluate_single_phase(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run_cli(capsys, "evaluate", "--seed", "3", "--phase",
                         "schema_only", "--out", str(out))
    assert code == 0
    body = json.loads(out.read_text())
    assert list(body["phases"]) == ["schema_only"]
    assert body["tests"] == {}


def test_evaluate_prints_report_without_out_flag(capsys):
    body = run_json(capsys, "evaluate", "--seed", "7",
                    "--phase", "schema_only")
    assert body["phases"]["schema_only"]["summary"]["n"] == 12


def test_report_errors_on_empty_dir(tmp_path, capsys):
    code, _, err = run_cli(capsys, "report", "--runs", str(tmp_path))
    assert code == 1
    assert "no run files" in err


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
