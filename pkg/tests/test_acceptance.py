"""Release acceptance suite.

Each test pins one core behavior to an independently derived oracle:
hand-counted SQL features, closed-form hypergeometric probabilities,
hand-recomputed chunk boundaries and percentages, and brute-force
re-derivations written inline.  Every test also enforces the latency
budget the behavior must meet on developer hardware.
"""

import json
import math
import random
import string
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from ctxsql.catalog import load_catalog_file
from ctxsql.contextstore import LocalTrigramEmbedder, build_index, split_text
from ctxsql.evalharness import (
    BandingInfo,
    CaseRecord,
    LabeledCase,
    NlqCase,
    Outcome,
    evaluate,
    pairwise_fisher,
    percent,
    render_report_text,
    summarize,
)
from ctxsql.resources import SAMPLE_SCHEMA, data_path
from ctxsql.sqlanalysis import (
    categorize_scores,
    complexity_score,
    extract_features,
    validate_against_schema,
)
from ctxsql.stats import fisher_exact_2x2, fisher_exact_rxc

from feature_corpus import CORPUS


@contextmanager
def budget(seconds):
    start = time.monotonic()
    yield
    elapsed = time.monotonic() - start
    assert elapsed < seconds, f"took {elapsed:.2f}s, budget {seconds}s"


# ------------------------------------------------------- feature extraction

def test_feature_extraction_fidelity():
    """Extraction matches the hand-counted corpus on every field and the
    score equals the hand-computed sum, within one second overall."""
    assert len(CORPUS) >= 25
    with budget(1.0):
        for case in CORPUS:
            f = extract_features(case.sql)
            got = (f.number_of_tables, f.number_of_joins,
                   f.number_of_where_clauses, f.has_group_by, f.has_order,
                   f.has_aggregation)
            assert got == (case.tables, case.joins, case.wheres,
                           case.group_by, case.order, case.agg), case.sql
            assert complexity_score(f, 0) == case.score0, case.sql

    # The canonical worked example: two tables joined once with a single
    # WHERE atom plus all three structural flags scores 7 at time zero.
    worked = [c for c in CORPUS
              if (c.tables, c.joins, c.wheres) == (2, 1, 1)
              and c.group_by and c.order and c.agg]
    assert worked, "corpus must contain the 2/1/1 all-flags example"
    for case in worked:
        assert case.score0 == 7
        assert complexity_score(extract_features(case.sql), 0) == 7


# ------------------------------------------------------- percentile banding

def _nearest_rank(sorted_scores, q):
    rank = math.ceil(q * len(sorted_scores))
    return sorted_scores[max(rank, 1) - 1]


def test_percentile_banding_properties():
    """Strictly below p25 is low, strictly above p75 is high, everything
    else medium; constant lists are all medium; counts always sum to N."""
    rng = random.Random(424202)
    with budget(5.0):
        for _ in range(1000):
            n = rng.randint(1, 80)
            scores = [rng.randint(0, 40) for _ in range(n)]
            banding = categorize_scores(scores)
            assert len(banding.bands) == n

            ordered = sorted(scores)
            p25 = _nearest_rank(ordered, 0.25)
            p75 = _nearest_rank(ordered, 0.75)
            assert banding.p25 == p25
            assert banding.p75 == p75
            for score, band in zip(scores, banding.bands):
                if score < p25:
                    assert band == "low"
                elif score > p75:
                    assert band == "high"
                else:
                    assert band == "medium"

            counts = banding.counts()
            assert sum(counts.values()) == n

        for value in (0, 7, 40):
            constant = categorize_scores([value] * rng.randint(1, 30))
            assert set(constant.bands) == {"medium"}


# ----------------------------------------------------------- fisher's exact

def _hypergeom_2x2_p(a, b, c, d):
    """Closed-form two-sided p for fixed margins, in exact rationals."""
    r1, r2 = a + b, c + d
    c1 = a + c
    n = r1 + r2
    total = math.comb(n, c1)
    p_obs = Fraction(math.comb(r1, a) * math.comb(r2, c), total)
    p = Fraction(0)
    for k in range(max(0, c1 - r2), min(r1, c1) + 1):
        p_k = Fraction(math.comb(r1, k) * math.comb(r2, c1 - k), total)
        if p_k <= p_obs * Fraction(10**7 + 1, 10**7):
            p += p_k
    return p


def test_fisher_exact_oracles():
    with budget(10.0):
        res = fisher_exact_2x2([[3, 1], [1, 3]])
        assert abs(res.p_value - 34 / 70) <= 1e-9
        assert abs(res.p_value - float(_hypergeom_2x2_p(3, 1, 1, 3))) <= 1e-12

        assert fisher_exact_2x2([[5, 5], [5, 5]]).p_value == 1.0

        extreme = fisher_exact_2x2([[0, 10], [10, 0]])
        assert abs(extreme.p_value - 2 / math.comb(20, 10)) <= 1e-12

        rng = random.Random(31337)
        for _ in range(100):
            table = [[rng.randint(0, 20) for _ in range(2)] for _ in range(2)]
            p_2x2 = fisher_exact_2x2(table).p_value
            p_rxc = fisher_exact_rxc(table).p_value
            assert abs(p_2x2 - p_rxc) <= 1e-9, table


# ------------------------------------------------------------------ chunker

def test_chunker_coverage_and_stride():
    rng = random.Random(90210)
    with budget(5.0):
        for _ in range(500):
            length = rng.randint(1, 5000)
            size = rng.randint(1, 400)
            overlap = rng.randint(0, size - 1)
            text = "".join(rng.choice(string.ascii_lowercase)
                           for _ in range(length))
            chunks = split_text("doc", text, size, overlap)

            stride = size - overlap
            covered = set()
            for i, chunk in enumerate(chunks):
                assert chunk.seq == i
                assert chunk.start_char == i * stride
                assert chunk.text == text[chunk.start_char:chunk.end_char]
                covered.update(range(chunk.start_char, chunk.end_char))
            assert covered == set(range(length))
            assert chunks[-1].end_char == length

        reference = split_text("doc", "x" * 2200, 1000, 200)
        assert [(c.start_char, c.end_char) for c in reference] == [
            (0, 1000), (800, 1800), (1600, 2200)]


# ---------------------------------------------------------------- retrieval

def test_retrieval_self_similarity_and_scaling():
    embedder = LocalTrigramEmbedder()
    rng = random.Random(5150)
    docs = [
        ("notes", " ".join(rng.choice(["case", "product", "family", "serious",
                                       "workflow", "attachment", "reporter"])
                           for _ in range(700))),
        ("terms", " ".join(rng.choice(["deleted", "state", "accepted", "open",
                                       "closed", "follow", "initial"])
                           for _ in range(500))),
    ]
    index = build_index(docs, embedder, chunk_size=300, overlap=60)
    assert len(index.chunks) > 5

    with budget(5.0):
        for chunk in index.chunks:
            vec = embedder.embed([chunk.text])[0]
            top_chunk, top_sim = index.retrieve_top_k(vec, 1)[0]
            assert abs(top_sim - 1.0) <= 1e-9
            assert top_chunk.text == chunk.text

        for _ in range(100):
            query = "".join(rng.choice(string.ascii_lowercase + " ")
                            for _ in range(rng.randint(3, 120)))
            vec = embedder.embed([query])[0]
            scale = rng.uniform(1e-3, 100.0)
            base = index.retrieve_top_k(vec, 5)
            scaled = index.retrieve_top_k(vec * scale, 5)
            assert [c.chunk_id for c, _ in base] == \
                [c.chunk_id for c, _ in scaled]
            for (_, lhs), (_, rhs) in zip(base, scaled):
                assert abs(lhs - rhs) <= 1e-9


# ------------------------------------------------------- replay determinism

def test_replay_reproducibility(dataset, environments):
    """Same seed twice gives byte-identical reports; different seeds change
    only the presentation order, never any per-case result."""
    with budget(30.0):
        first = evaluate(dataset, environments, seed=7)
        second = evaluate(dataset, environments, seed=7)
        assert first.to_json() == second.to_json()

        other = evaluate(dataset, environments, seed=8)
        assert [other.phases[p]["presentation_order"] for p in other.phases] \
            != [first.phases[p]["presentation_order"] for p in first.phases]
        for phase, summary in first.phases.items():
            assert other.phases[phase]["cases"] == summary["cases"]
            assert other.phases[phase]["summary"] == summary["summary"]
        assert other.tests == first.tests
        assert other.banding == first.banding


# --------------------------------------------------------- report arithmetic

def _synthetic(outcome_counts, band_by_case=None):
    """Build LabeledCases with given (pass, fail, partial_pass) counts."""
    labeled = []
    bands = {}
    i = 0
    for category, count in zip(("pass", "fail", "partial_pass"),
                               outcome_counts):
        for _ in range(count):
            cid = f"c{i:02d}"
            case = NlqCase(id=cid, text=f"question {i}")
            record = CaseRecord(case, None, error="not executed")
            labeled.append(LabeledCase(case, record,
                                       Outcome(category, labeler="hand")))
            bands[cid] = (band_by_case or {}).get(cid, "medium")
            i += 1
    banding = BandingInfo(basis="reference_sql", p25=0.0, p75=0.0,
                          band_by_case=bands, score_by_case={},
                          counts={b: sum(1 for v in bands.values() if v == b)
                                  for b in ("low", "medium", "high")})
    return labeled, banding


def test_report_percentage_arithmetic():
    """summarize reproduces hand-computed one-decimal percentages."""
    for counts, expected in [
        ((5, 47, 8), {"pass": 8.3, "fail": 78.3, "partial_pass": 13.3}),
        ((47, 5, 8), {"pass": 78.3, "fail": 8.3, "partial_pass": 13.3}),
        ((6, 30, 24), {"pass": 10.0, "fail": 50.0, "partial_pass": 40.0}),
    ]:
        labeled, banding = _synthetic(counts)
        summary = summarize(labeled, banding)
        assert summary["n"] == 60
        assert summary["percentages"] == expected
        assert sum(summary["outcome_totals"].values()) == 60

    # Pass rate over the 48 low+medium cases when 41 of them pass: 85.4%.
    high_ids = {f"c{i:02d}" for i in range(41, 47)} | \
               {f"c{i:02d}" for i in range(54, 60)}
    labeled, banding = _synthetic(
        (47, 7, 6), band_by_case={cid: "high" for cid in high_ids})
    summary = summarize(labeled, banding)
    assert summary["band_totals"]["high"] == 12
    assert summary["excluding_high"] == {"pass": 41, "total": 48,
                                         "rate": 85.4}

    assert percent(5, 60) == 8.3
    assert percent(47, 60) == 78.3
    assert percent(8, 60) == 13.3
    assert percent(41, 48) == 85.4


# ----------------------------------------------- significance test coverage

def test_significance_machinery_for_real_runs(sample_report):
    """Live-provider pass rates cannot be reproduced offline, so every run
    must instead carry the full set of canonical significance tests; any
    real provider run flows through the same code path."""
    pairs = {"schema_only|schema_plus_context",
             "schema_only|narrowed_schema",
             "schema_plus_context|narrowed_schema"}
    assert set(sample_report.tests) == pairs
    for entry in sample_report.tests.values():
        assert set(entry) == {"pass_vs_rest", "fail_vs_rest", "full_outcome"}
        for result in entry.values():
            assert 0.0 < result["p_value"] <= 1.0
            assert result["method"] in ("enumeration", "monte-carlo")

    constructed = pairwise_fisher(
        {"pass": 5, "fail": 47, "partial_pass": 8},
        {"pass": 47, "fail": 5, "partial_pass": 8})
    assert set(constructed) == {"pass_vs_rest", "fail_vs_rest",
                                "full_outcome"}
    for result in constructed.values():
        assert 0.0 < result.p_value <= 1.0

    text = render_report_text(sample_report)
    assert "Fisher" in text
    for pair in pairs:
        assert pair.replace("|", " vs ") in text


# --------------------------------------------------------------- validation

HALLUCINATED = [
    ("SELECT * FROM NEW_CASES",
     {"NEW_CASES"}, set()),
    ("SELECT C.STATUS FROM CASE_MASTER C",
     set(), {("CASE_MASTER", "STATUS")}),
    ("SELECT CASE_MASTER.FOO, CASE_MASTER.BAR FROM CASE_MASTER",
     set(), {("CASE_MASTER", "FOO"), ("CASE_MASTER", "BAR")}),
    ("SELECT M.CASE_ID FROM CASE_MASTER M"
     " JOIN GHOSTS G ON G.CASE_ID = M.CASE_ID",
     {"GHOSTS"}, set()),
    ("SELECT COUNT(*) FROM (SELECT CASE_ID FROM PHANTOM_EVENTS) S",
     {"PHANTOM_EVENTS"}, set()),
    ("SELECT P.PRICE FROM PRODUCT P",
     set(), {("PRODUCT", "PRICE")}),
    ("SELECT CO.REGION FROM COUNTRY CO",
     set(), {("COUNTRY", "REGION")}),
    ("SELECT * FROM CASES",
     {"CASES"}, set()),
    ("SELECT A.CASE_ID FROM CASE_ATTACHMENT A"
     " WHERE A.CASE_ID IN (SELECT CASE_ID FROM FOLLOWUPS)",
     {"FOLLOWUPS"}, set()),
    ("SELECT W.STATE_NAME, W.APPROVER FROM CASE_WORKFLOW W",
     set(), {("CASE_WORKFLOW", "APPROVER")}),
]

VALID = [
    "SELECT COUNT(*) FROM CASE_MASTER",
    "SELECT CASE_NUMBER FROM CASE_MASTER WHERE DELETED IS NULL",
    "SELECT G.GROUP_NAME, F.NAME FROM PRODUCT_GROUP G"
    " JOIN PRODUCT_FAMILY F ON F.PRODUCT_GROUP_ID = G.PRODUCT_GROUP_ID",
    "SELECT COUNT(*) FROM CASE_ATTACHMENT"
    " WHERE CLASSIFICATION LIKE '%FU Attempt%'",
    "SELECT M.CASE_NUMBER, E.EVENT_TERM FROM CASE_MASTER M"
    " JOIN CASE_EVENT E ON E.CASE_ID = M.CASE_ID",
    "SELECT CASE_NUMBER FROM CASE_MASTER"
    " WHERE upper(STATE_NAME) = upper('deleted')",
    "SELECT CO.COUNTRY_NAME, COUNT(*) FROM CASE_MASTER M"
    " JOIN COUNTRY CO ON M.COUNTRY_ID = CO.COUNTRY_ID"
    " GROUP BY CO.COUNTRY_NAME",
    "SELECT RT.TYPE_NAME FROM REPORT_TYPE RT",
    "WITH ACTIVE AS (SELECT FAMILY_ID FROM PRODUCT_FAMILY"
    " WHERE DELETED IS NULL) SELECT COUNT(*) FROM ACTIVE",
    "SELECT R.REPORTER_TYPE FROM REPORTER R WHERE R.COUNTRY_ID IS NOT NULL",
]


def test_validation_hallucination_suite():
    catalog = load_catalog_file(data_path(SAMPLE_SCHEMA))
    with budget(1.0):
        for sql, bad_tables, bad_columns in HALLUCINATED:
            report = validate_against_schema(sql, catalog)
            assert not report.ok, sql
            assert set(report.unknown_tables) == bad_tables, sql
            got_columns = {(table.split("->")[-1], column)
                           for table, column in report.unknown_columns}
            assert got_columns == bad_columns, sql

        for sql in VALID:
            report = validate_against_schema(sql, catalog)
            assert report.ok, (sql, report.unknown_tables,
                               report.unknown_columns)
            assert report.unknown_tables == ()
            assert report.unknown_columns == ()
