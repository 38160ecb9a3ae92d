"""Three-phase evaluation: runs, labels, banding, summaries, reports."""

import json

import pytest

from ctxsql.evalharness import (
    BANDS,
    EvalHarnessError,
    EvalReport,
    MACHINE_LABELER,
    MissingLabelsError,
    OUTCOME_FAIL,
    OUTCOME_PARTIAL,
    OUTCOME_PASS,
    OUTCOMES,
    apply_labels,
    compute_banding,
    corpus_hash,
    dataset_fingerprint,
    evaluate,
    export_boxplot_data,
    load_dataset,
    outcome_contingency,
    pairwise_fisher,
    percent,
    relabel_report,
    render_report_csv,
    render_report_text,
    run_phase,
    suggest_outcome,
)
from ctxsql.pipeline import (
    PHASE_NARROWED_SCHEMA,
    PHASE_SCHEMA_ONLY,
    PHASE_SCHEMA_PLUS_CONTEXT,
)

REFERENCE_SCORES = {
    "q01": 4, "q02": 2, "q03": 6, "q04": 12, "q05": 8, "q06": 11,
    "q07": 3, "q08": 13, "q09": 10, "q10": 10, "q11": 15, "q12": 22,
}


# ----------------------------------------------------------------- dataset

def test_sample_dataset_reference_scores(dataset):
    assert {c.id: c.reference_score for c in dataset} == REFERENCE_SCORES


def test_load_dataset_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps([
        {"id": "a", "nlq": "one"}, {"id": "a", "nlq": "two"}]))
    with pytest.raises(EvalHarnessError, match="duplicate"):
        load_dataset(path)


def test_load_dataset_names_case_with_bad_reference(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps([
        {"id": "bad1", "nlq": "x", "reference_sql": "DELETE FROM T"}]))
    with pytest.raises(EvalHarnessError, match="bad1"):
        load_dataset(path)


def test_load_dataset_rejects_empty(tmp_path):
    path = tmp_path / "d.json"
    path.write_text("[]")
    with pytest.raises(EvalHarnessError, match="empty"):
        load_dataset(path)


def test_dataset_fingerprint_is_stable_and_content_sensitive(dataset):
    a = dataset_fingerprint(dataset)
    b = dataset_fingerprint(list(dataset))
    assert a == b and len(a) == 64
    assert dataset_fingerprint(dataset[:-1]) != a


# -------------------------------------------------------------------- runs

def test_run_phase_seeded_presentation_order(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run_a = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    run_b = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    run_c = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=2)
    assert run_a.presentation_order == run_b.presentation_order
    assert run_a.presentation_order != run_c.presentation_order
    assert sorted(run_a.presentation_order) == sorted(c.id for c in dataset)
    # records come back sorted by case id whatever the order was
    assert [r.case.id for r in run_a.records] == sorted(c.id for c in dataset)


def test_run_phase_results_do_not_depend_on_order(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run_a = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    run_c = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=99)
    for rec_a, rec_c in zip(run_a.records, run_c.records):
        assert rec_a.case.id == rec_c.case.id
        dict_a = rec_a.result.as_dict(canonical=True) if rec_a.result else None
        dict_c = rec_c.result.as_dict(canonical=True) if rec_c.result else None
        assert dict_a == dict_c


def test_corpus_hash_is_phase_specific_and_stable(environments, replay_provider):
    h1 = corpus_hash(environments[PHASE_SCHEMA_ONLY])
    h2 = corpus_hash(environments[PHASE_SCHEMA_PLUS_CONTEXT])
    assert h1 != h2
    assert corpus_hash(environments[PHASE_SCHEMA_ONLY]) == h1


# ------------------------------------------------------------------ labels

def test_machine_suggestions_follow_validation(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    for record in run.records:
        outcome = suggest_outcome(record)
        assert outcome.machine_suggested
        assert outcome.labeler == MACHINE_LABELER
        kind = record.result.extraction.kind if record.result else None
        if record.error is not None or kind in ("refusal", "unparseable"):
            assert outcome.category == OUTCOME_FAIL
        elif record.result.validation.ok:
            assert outcome.category == OUTCOME_PASS
        else:
            assert outcome.category == OUTCOME_PARTIAL


def test_human_labels_override_machine(dataset, environments, expert_labels):
    env = environments[PHASE_SCHEMA_ONLY]
    run = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    labeled = apply_labels(run, expert_labels)
    by_id = {lc.case.id: lc.outcome for lc in labeled}
    # q03 validates as partial (hallucinated table) but the expert says fail
    assert by_id["q03"].category == OUTCOME_FAIL
    assert by_id["q03"].labeler == "expert1"
    assert not by_id["q03"].machine_suggested
    # unlabeled cases keep the machine suggestion
    assert by_id["q01"].labeler == MACHINE_LABELER


def test_last_label_wins(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    labels = [
        {"id": "q02", "phase": PHASE_SCHEMA_ONLY, "outcome": "fail",
         "labeler": "first"},
        {"id": "q02", "phase": PHASE_SCHEMA_ONLY, "outcome": "partial_pass",
         "labeler": "second"},
    ]
    labeled = apply_labels(run, labels)
    by_id = {lc.case.id: lc.outcome for lc in labeled}
    assert by_id["q02"].category == OUTCOME_PARTIAL
    assert by_id["q02"].labeler == "second"


def test_labels_for_other_phases_are_ignored(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    labels = [{"id": "q02", "phase": PHASE_SCHEMA_PLUS_CONTEXT,
               "outcome": "fail", "labeler": "h"}]
    labeled = apply_labels(run, labels)
    by_id = {lc.case.id: lc.outcome for lc in labeled}
    assert by_id["q02"].labeler == MACHINE_LABELER


def test_missing_labels_error_names_cases(dataset, environments):
    env = environments[PHASE_SCHEMA_ONLY]
    run = run_phase(dataset, PHASE_SCHEMA_ONLY, env, seed=1)
    with pytest.raises(MissingLabelsError) as exc:
        apply_labels(run, labels=None, auto_label=False)
    assert set(exc.value.ids) == {c.id for c in dataset}


# ----------------------------------------------------------------- banding

def test_banding_uses_reference_scores(dataset):
    banding = compute_banding(dataset)
    assert banding.basis == "reference_sql"
    assert (banding.p25, banding.p75) == (4, 12)
    low = {i for i, b in banding.band_by_case.items() if b == "low"}
    high = {i for i, b in banding.band_by_case.items() if b == "high"}
    assert low == {"q02", "q07"}
    assert high == {"q08", "q11", "q12"}
    assert banding.counts == {"low": 2, "medium": 7, "high": 3}


def test_boxplot_oracle():
    box = export_boxplot_data([2, 4, 4, 5, 6, 7, 9, 12])
    assert (box["min"], box["p25"], box["median"], box["p75"], box["max"]) == (
        2, 4, 5.5, 7, 12)
    assert box["points"] == [2, 4, 4, 5, 6, 7, 9, 12]


# ------------------------------------------------------------- percentages

def test_percent_rounds_to_one_decimal():
    assert percent(5, 60) == 8.3
    assert percent(47, 60) == 78.3
    assert percent(8, 60) == 13.3
    assert percent(6, 60) == 10.0
    assert percent(30, 60) == 50.0
    assert percent(24, 60) == 40.0
    assert percent(41, 48) == 85.4
    assert percent(0, 60) == 0.0


def test_contingency_and_pairwise_fisher():
    counts_a = {"pass": 5, "fail": 47, "partial_pass": 8}
    counts_b = {"pass": 47, "fail": 5, "partial_pass": 8}
    table = outcome_contingency({"a": counts_a, "b": counts_b})
    assert table.cells == ((5, 47, 8), (47, 5, 8))
    tests = pairwise_fisher(counts_a, counts_b)
    assert tests["pass_vs_rest"].p_value < 1e-9
    assert tests["fail_vs_rest"].p_value < 1e-9
    assert tests["full_outcome"].p_value < 1e-9
    same = pairwise_fisher(counts_a, dict(counts_a))
    assert same["pass_vs_rest"].p_value == pytest.approx(1.0, abs=1e-9)


# ------------------------------------------------------------------ report

EXPECTED_TOTALS = {
    PHASE_SCHEMA_ONLY: {"pass": 2, "fail": 9, "partial_pass": 1},
    PHASE_SCHEMA_PLUS_CONTEXT: {"pass": 10, "fail": 1, "partial_pass": 1},
    PHASE_NARROWED_SCHEMA: {"pass": 8, "fail": 2, "partial_pass": 2},
}


def test_report_outcome_totals(sample_report):
    doc = json.loads(sample_report.to_json())
    for phase, expected in EXPECTED_TOTALS.items():
        assert doc["phases"][phase]["summary"]["outcome_totals"] == expected


def test_report_percentages_sum_to_one_hundred(sample_report):
    doc = json.loads(sample_report.to_json())
    for phase in doc["phases"].values():
        total = sum(phase["summary"]["percentages"].values())
        assert total == pytest.approx(100.0, abs=0.1)


def test_report_counts_are_banded_consistently(sample_report):
    doc = json.loads(sample_report.to_json())
    bands = doc["banding"]["bands"]
    for phase in doc["phases"].values():
        for case_id, entry in phase["cases"].items():
            assert entry["band"] == bands[case_id]
            assert entry["outcome"]["category"] in OUTCOMES
            assert entry["band"] in BANDS
        summary = phase["summary"]
        assert sum(summary["outcome_totals"].values()) == summary["n"]
        assert sum(summary["band_totals"].values()) == summary["n"]


def test_report_phase_order_is_canonical(sample_report):
    assert sample_report.run_metadata["phases"] == [
        PHASE_SCHEMA_ONLY, PHASE_SCHEMA_PLUS_CONTEXT, PHASE_NARROWED_SCHEMA]


def test_report_same_seed_byte_identical(dataset, environments, expert_labels):
    a = evaluate(dataset, environments, seed=7, labels=expert_labels)
    b = evaluate(dataset, environments, seed=7, labels=expert_labels)
    assert a.to_json(canonical=True) == b.to_json(canonical=True)


def test_report_seed_changes_order_not_results(dataset, environments,
                                               sample_report, expert_labels):
    other = evaluate(dataset, environments, seed=8, labels=expert_labels)
    doc_a = json.loads(sample_report.to_json(canonical=True))
    doc_b = json.loads(other.to_json(canonical=True))
    for phase in doc_a["phases"]:
        assert (doc_a["phases"][phase]["presentation_order"]
                != doc_b["phases"][phase]["presentation_order"])
        assert doc_a["phases"][phase]["cases"] == doc_b["phases"][phase]["cases"]
    assert doc_a["tests"] == doc_b["tests"]


def test_evaluate_without_auto_label_requires_full_labels(dataset, environments):
    with pytest.raises(MissingLabelsError):
        evaluate(dataset, environments, seed=7, labels=None, auto_label=False)


def test_excluding_high_rate(sample_report):
    doc = json.loads(sample_report.to_json())
    for phase in doc["phases"].values():
        section = phase["summary"]["excluding_high"]
        high = phase["summary"]["band_totals"]["high"]
        assert section["total"] == phase["summary"]["n"] - high
        assert section["rate"] == percent(section["pass"], section["total"])


def test_fisher_tests_cover_canonical_pairs(sample_report):
    doc = json.loads(sample_report.to_json())
    assert sorted(doc["tests"]) == sorted([
        f"{PHASE_SCHEMA_ONLY}|{PHASE_SCHEMA_PLUS_CONTEXT}",
        f"{PHASE_SCHEMA_ONLY}|{PHASE_NARROWED_SCHEMA}",
        f"{PHASE_SCHEMA_PLUS_CONTEXT}|{PHASE_NARROWED_SCHEMA}"])
    for entry in doc["tests"].values():
        for key in ("pass_vs_rest", "fail_vs_rest", "full_outcome"):
            assert 0.0 < entry[key]["p_value"] <= 1.0


def test_report_round_trips_through_json(sample_report):
    text = sample_report.to_json(canonical=True)
    again = EvalReport.from_json(text)
    assert again.to_json(canonical=True) == text


def test_relabel_report_recomputes_counts_and_tests(sample_report):
    labels = [{"id": "q02", "phase": PHASE_SCHEMA_ONLY, "outcome": "fail",
               "labeler": "second-reviewer"}]
    updated = relabel_report(sample_report, labels)
    before = json.loads(sample_report.to_json())
    after = json.loads(updated.to_json())
    assert after["phases"][PHASE_SCHEMA_ONLY]["summary"]["outcome_totals"] == {
        "pass": 1, "fail": 10, "partial_pass": 1}
    # untouched phases keep their numbers; tests are recomputed
    assert (after["phases"][PHASE_SCHEMA_PLUS_CONTEXT]["summary"]
            == before["phases"][PHASE_SCHEMA_PLUS_CONTEXT]["summary"])
    key = f"{PHASE_SCHEMA_ONLY}|{PHASE_SCHEMA_PLUS_CONTEXT}"
    assert after["tests"][key] != before["tests"][key]


def test_volatile_keys_only_in_noncanonical(sample_report):
    canonical = json.loads(sample_report.to_json(canonical=True))
    full = json.loads(sample_report.to_json(canonical=False))
    assert "generated_at" not in canonical["run_metadata"]
    assert "generated_at" in full["run_metadata"]


# --------------------------------------------------------------- rendering

def test_render_text_layout(sample_report):
    text = render_report_text(sample_report)
    assert text == render_report_text(sample_report)
    assert "DB Schema Only" in text
    assert "DB Schema and Business Context" in text
    assert "Narrowed Schema" in text
    assert "Low" in text and "Medium" in text and "High" in text
    assert "excluding high" in text.lower()
    assert "Fisher" in text


def test_render_csv_shape(sample_report):
    lines = render_report_csv(sample_report).strip().splitlines()
    assert lines[0] == "phase,outcome,low,medium,high,total,pct"
    assert len(lines) == 1 + 3 * 3  # three phases, three outcomes each
