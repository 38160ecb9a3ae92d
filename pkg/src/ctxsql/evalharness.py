"""Three-phase evaluation: run a dataset through each phase environment,
attach expert labels (or machine-suggested fallbacks), band cases by
complexity score, cross-tabulate outcomes, and compute exact tests.

Reports serialize canonically (volatile metadata dropped, keys sorted) so
that same-seed replay runs compare byte-equal.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .gateway import GatewayError
from .pipeline import (PhaseEnvironment, PipelineProviderError, QueryRequest,
                       QueryResult, answer_nlq)
from .sqlanalysis import (categorize_scores, complexity_score,
                          extract_features, five_number_summary)
from .stats import FisherResult, fisher_exact_2x2, fisher_exact_rxc

OUTCOME_PASS = "pass"
OUTCOME_FAIL = "fail"
OUTCOME_PARTIAL = "partial_pass"
OUTCOMES = (OUTCOME_PASS, OUTCOME_FAIL, OUTCOME_PARTIAL)

BANDS = ("low", "medium", "high")

MACHINE_LABELER = "auto"

# report-level volatile keys, dropped from canonical serialization
VOLATILE_REPORT_KEYS = ("generated_at",)


class EvalHarnessError(Exception):
    pass


class MissingLabelsError(EvalHarnessError):
    def __init__(self, ids: Sequence[str]):
        super().__init__(f"no label for case ids: {', '.join(sorted(ids))}")
        self.ids = tuple(sorted(ids))


@dataclass(frozen=True)
class NlqCase:
    id: str
    text: str
    time_to_create: int = 0
    reference_sql: Optional[str] = None
    reference_score: Optional[int] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("case id must be non-empty")
        if not self.text.strip():
            raise ValueError("case text must be non-empty")
        if self.time_to_create < 0:
            raise ValueError("time_to_create must be nonnegative")


@dataclass(frozen=True)
class Outcome:
    category: str
    labeler: str
    rationale: Optional[str] = None
    machine_suggested: bool = False

    def __post_init__(self):
        if self.category not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.category!r}")

    def as_dict(self) -> dict:
        out = {"category": self.category, "labeler": self.labeler,
               "machine_suggested": self.machine_suggested}
        if self.rationale:
            out["rationale"] = self.rationale
        return out


@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    cells: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.row_labels) < 2 or len(self.col_labels) < 2:
            raise ValueError("contingency table must be at least 2x2")
        if len(self.cells) != len(self.row_labels) or any(
                len(r) != len(self.col_labels) for r in self.cells):
            raise ValueError("cell shape does not match labels")
        if any(x < 0 for row in self.cells for x in row):
            raise ValueError("cells must be nonnegative")

    def as_dict(self) -> dict:
        return {"rows": list(self.row_labels), "cols": list(self.col_labels),
                "cells": [list(r) for r in self.cells]}


@dataclass(frozen=True)
class CaseRecord:
    case: NlqCase
    result: Optional[QueryResult]
    error: Optional[str] = None

    def __post_init__(self):
        if (self.result is None) == (self.error is None):
            raise ValueError("exactly one of result/error must be set")


@dataclass(frozen=True)
class PhaseRun:
    phase: str
    seed: int
    presentation_order: tuple[str, ...]
    records: tuple[CaseRecord, ...]  # sorted by case id
    corpus_hash: str
    provider_id: str


@dataclass(frozen=True)
class LabeledCase:
    case: NlqCase
    record: CaseRecord
    outcome: Outcome


# ---------------------------------------------------------------------------
# dataset and labels files

def _load_records(path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise EvalHarnessError(f"{path}: expected a list of records")
        return data
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def load_dataset(path) -> list[NlqCase]:
    """Dataset records: {id, nlq, time_to_create?, reference_sql?}. When a
    reference SQL answer is present its complexity score is precomputed."""
    cases: list[NlqCase] = []
    seen: set[str] = set()
    for rec in _load_records(path):
        case_id = str(rec["id"])
        if case_id in seen:
            raise EvalHarnessError(f"duplicate case id {case_id!r}")
        seen.add(case_id)
        ttc = int(rec.get("time_to_create", 0))
        ref_sql = rec.get("reference_sql")
        ref_score = None
        if ref_sql:
            try:
                ref_score = complexity_score(extract_features(ref_sql), ttc)
            except Exception as exc:
                raise EvalHarnessError(
                    f"case {case_id}: reference_sql not analyzable: {exc}"
                ) from exc
        cases.append(NlqCase(id=case_id, text=str(rec["nlq"]),
                             time_to_create=ttc, reference_sql=ref_sql,
                             reference_score=ref_score))
    if not cases:
        raise EvalHarnessError(f"dataset {path} is empty")
    return cases


def load_labels(path) -> list[dict]:
    """Label records: {id, phase, outcome, rationale?, labeler}. Order is
    preserved; downstream resolution is last-write-wins."""
    labels = []
    for rec in _load_records(path):
        if rec.get("outcome") not in OUTCOMES:
            raise EvalHarnessError(
                f"label for {rec.get('id')!r} has invalid outcome "
                f"{rec.get('outcome')!r}")
        labels.append(rec)
    return labels


def dataset_fingerprint(cases: Sequence[NlqCase]) -> str:
    payload = json.dumps(
        [{"id": c.id, "nlq": c.text, "time_to_create": c.time_to_create,
          "reference_sql": c.reference_sql} for c in cases],
        sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def corpus_hash(env: PhaseEnvironment) -> str:
    h = hashlib.sha256()
    for chunk in sorted(env.index.chunks, key=lambda c: (c.doc_id, c.seq)):
        h.update(chunk.chunk_id.encode("utf-8"))
        h.update(b"\x00")
        h.update(chunk.text.encode("utf-8"))
        h.update(b"\x01")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# running a phase

def run_phase(dataset: Sequence[NlqCase], phase: str, env: PhaseEnvironment,
              seed: int) -> PhaseRun:
    """Present every case once, in a seeded random permutation. Provider
    failures are captured per case so one bad record cannot sink the run."""
    if not dataset:
        raise EvalHarnessError("dataset is empty")
    if env.phase != phase:
        raise EvalHarnessError(
            f"environment phase {env.phase!r} does not match {phase!r}")

    order = list(range(len(dataset)))
    random.Random(seed).shuffle(order)

    by_id: dict[str, CaseRecord] = {}
    presentation = []
    for idx in order:
        case = dataset[idx]
        presentation.append(case.id)
        request = QueryRequest(nlq=case.text, phase=phase,
                               time_to_create=case.time_to_create)
        try:
            result = answer_nlq(request, env, nlq_id=case.id)
            by_id[case.id] = CaseRecord(case=case, result=result)
        except (PipelineProviderError, GatewayError) as exc:
            by_id[case.id] = CaseRecord(case=case, result=None,
                                        error=str(exc))

    records = tuple(by_id[cid] for cid in sorted(by_id))
    return PhaseRun(phase=phase, seed=seed,
                    presentation_order=tuple(presentation), records=records,
                    corpus_hash=corpus_hash(env),
                    provider_id=env.provider.provider_id)


# ---------------------------------------------------------------------------
# labeling

def suggest_outcome(record: CaseRecord) -> Outcome:
    """Machine-suggested label: refusals, unparseable responses, and provider
    errors count as fail; analyzable SQL passes when it validates cleanly and
    is a partial pass otherwise. Never overrides a human label."""
    if record.error is not None:
        return Outcome(OUTCOME_FAIL, MACHINE_LABELER,
                       rationale=f"provider error: {record.error}",
                       machine_suggested=True)
    result = record.result
    assert result is not None
    kind = result.extraction.kind
    if kind in ("refusal", "unparseable"):
        return Outcome(OUTCOME_FAIL, MACHINE_LABELER,
                       rationale=f"response kind: {kind}",
                       machine_suggested=True)
    if result.validation is not None and result.validation.ok:
        return Outcome(OUTCOME_PASS, MACHINE_LABELER,
                       rationale="SQL validates against the schema",
                       machine_suggested=True)
    return Outcome(OUTCOME_PARTIAL, MACHINE_LABELER,
                   rationale="SQL produced but failed schema validation",
                   machine_suggested=True)


def apply_labels(run: PhaseRun, labels: Optional[Iterable[dict]] = None,
                 auto_label: bool = True) -> list[LabeledCase]:
    """Attach exactly one Outcome per case. Human labels (matched on id and
    phase, last record wins) take precedence; remaining cases get
    machine-suggested labels when auto_label is on, otherwise the uncovered
    ids are reported as an error."""
    by_id: dict[str, dict] = {}
    for rec in labels or ():
        if str(rec.get("phase")) == run.phase:
            by_id[str(rec["id"])] = rec

    labeled: list[LabeledCase] = []
    missing: list[str] = []
    for record in run.records:
        rec = by_id.get(record.case.id)
        if rec is not None:
            outcome = Outcome(category=rec["outcome"],
                              labeler=str(rec.get("labeler", "unknown")),
                              rationale=rec.get("rationale"))
        elif auto_label:
            outcome = suggest_outcome(record)
        else:
            missing.append(record.case.id)
            continue
        labeled.append(LabeledCase(case=record.case, record=record,
                                   outcome=outcome))
    if missing:
        raise MissingLabelsError(missing)
    return labeled


# ---------------------------------------------------------------------------
# banding

@dataclass(frozen=True)
class BandingInfo:
    basis: str
    p25: float
    p75: float
    band_by_case: dict
    score_by_case: dict
    counts: dict
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {"basis": self.basis, "p25": self.p25, "p75": self.p75,
                "bands": dict(sorted(self.band_by_case.items())),
                "scores": dict(sorted(self.score_by_case.items())),
                "counts": self.counts, "notes": list(self.notes)}


def compute_banding(dataset: Sequence[NlqCase],
                    runs: Optional[dict] = None) -> BandingInfo:
    """Band the dataset once, holding thresholds fixed across phases.

    Reference-SQL scores are the preferred basis; when any case lacks one,
    fall back to generated-SQL scores from the phase that produced the most
    analyzable queries (cases still unscored there default to medium)."""
    notes: list[str] = []
    if all(c.reference_score is not None for c in dataset):
        basis = "reference_sql"
        score_by_case = {c.id: c.reference_score for c in dataset}
    else:
        if not runs:
            raise EvalHarnessError(
                "dataset lacks reference SQL for some cases and no phase "
                "runs were provided for fallback banding")
        richest_phase, richest = max(
            runs.items(),
            key=lambda kv: sum(1 for r in kv[1].records
                               if r.result is not None
                               and r.result.score is not None))
        basis = f"generated:{richest_phase}"
        score_by_case = {}
        for record in richest.records:
            if record.result is not None and record.result.score is not None:
                score_by_case[record.case.id] = record.result.score
        left_out = [c.id for c in dataset if c.id not in score_by_case]
        if left_out:
            notes.append(
                "no score available for: " + ", ".join(sorted(left_out))
                + "; banded as medium")

    scored_ids = sorted(score_by_case)
    banding = categorize_scores([score_by_case[c] for c in scored_ids])
    band_by_case = dict(zip(scored_ids, banding.bands))
    for case in dataset:
        band_by_case.setdefault(case.id, "medium")
    counts = {band: sum(1 for b in band_by_case.values() if b == band)
              for band in BANDS}
    return BandingInfo(basis=basis, p25=banding.p25, p75=banding.p75,
                       band_by_case=band_by_case, score_by_case=score_by_case,
                       counts=counts, notes=tuple(notes))


# ---------------------------------------------------------------------------
# summarizing

def percent(count: int, total: int) -> float:
    if total == 0:
        return 0.0
    return round(100.0 * count / total, 1)


def summarize(labeled: Sequence[LabeledCase], banding: BandingInfo) -> dict:
    """Outcome x band counts with one-decimal percentages and the derived
    pass rate over low+medium complexity cases."""
    counts = {o: {b: 0 for b in BANDS} for o in OUTCOMES}
    for lc in labeled:
        band = banding.band_by_case.get(lc.case.id, "medium")
        counts[lc.outcome.category][band] += 1

    n = len(labeled)
    outcome_totals = {o: sum(counts[o].values()) for o in OUTCOMES}
    band_totals = {b: sum(counts[o][b] for o in OUTCOMES) for b in BANDS}
    percentages = {o: percent(outcome_totals[o], n) for o in OUTCOMES}

    lowmed_total = band_totals["low"] + band_totals["medium"]
    lowmed_pass = counts[OUTCOME_PASS]["low"] + counts[OUTCOME_PASS]["medium"]
    excluding_high = {
        "pass": lowmed_pass,
        "total": lowmed_total,
        "rate": percent(lowmed_pass, lowmed_total) if lowmed_total else None,
    }
    return {
        "n": n,
        "counts": counts,
        "outcome_totals": outcome_totals,
        "band_totals": band_totals,
        "percentages": percentages,
        "excluding_high": excluding_high,
    }


def outcome_contingency(counts_by_phase: dict) -> ContingencyTable:
    phases = sorted(counts_by_phase)
    cells = tuple(tuple(counts_by_phase[p][o] for o in OUTCOMES)
                  for p in phases)
    return ContingencyTable(row_labels=tuple(phases), col_labels=OUTCOMES,
                            cells=cells)


def pairwise_fisher(counts_a: dict, counts_b: dict) -> dict:
    """The three canonical constructions for a phase pair: pass vs rest and
    fail vs rest as 2x2, and the full 2x3 outcome table."""
    n_a = sum(counts_a[o] for o in OUTCOMES)
    n_b = sum(counts_b[o] for o in OUTCOMES)

    def two_by_two(outcome: str) -> FisherResult:
        return fisher_exact_2x2([
            [counts_a[outcome], n_a - counts_a[outcome]],
            [counts_b[outcome], n_b - counts_b[outcome]],
        ])

    full = fisher_exact_rxc([
        [counts_a[o] for o in OUTCOMES],
        [counts_b[o] for o in OUTCOMES],
    ])
    return {
        "pass_vs_rest": two_by_two(OUTCOME_PASS),
        "fail_vs_rest": two_by_two(OUTCOME_FAIL),
        "full_outcome": full,
    }


def export_boxplot_data(scores: Sequence[int]) -> dict:
    """Five-number summary plus the raw points, for external plotting."""
    if not scores:
        raise EvalHarnessError("no scores to summarize")
    lo, p25, median, p75, hi = five_number_summary(list(scores))
    return {"min": lo, "p25": p25, "median": median, "p75": p75, "max": hi,
            "points": sorted(scores)}


# ---------------------------------------------------------------------------
# full evaluation and the report object

@dataclass(frozen=True)
class EvalReport:
    dataset: dict
    banding: dict
    phases: dict
    tests: dict
    boxplot: dict
    run_metadata: dict

    def to_json(self, canonical: bool = True) -> str:
        payload = {
            "dataset": self.dataset,
            "banding": self.banding,
            "phases": self.phases,
            "tests": self.tests,
            "boxplot": self.boxplot,
            "run_metadata": dict(self.run_metadata),
        }
        if canonical:
            for key in VOLATILE_REPORT_KEYS:
                payload["run_metadata"].pop(key, None)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(dataset=data["dataset"], banding=data["banding"],
                   phases=data["phases"], tests=data["tests"],
                   boxplot=data["boxplot"],
                   run_metadata=data.get("run_metadata", {}))


def _phase_section(run: PhaseRun, labeled: Sequence[LabeledCase],
                   banding: BandingInfo) -> dict:
    summary = summarize(labeled, banding)
    cases = {}
    for lc in labeled:
        entry = {
            "outcome": lc.outcome.as_dict(),
            "band": banding.band_by_case.get(lc.case.id, "medium"),
        }
        if lc.record.result is not None:
            entry["result"] = lc.record.result.as_dict(canonical=True)
        else:
            entry["error"] = lc.record.error
        cases[lc.case.id] = entry

    generated_scores = [lc.record.result.score for lc in labeled
                        if lc.record.result is not None
                        and lc.record.result.score is not None]
    section = {
        "phase": run.phase,
        "seed": run.seed,
        "presentation_order": list(run.presentation_order),
        "provider_id": run.provider_id,
        "corpus_hash": run.corpus_hash,
        "cases": cases,
        "summary": summary,
        "machine_suggested": sum(1 for lc in labeled
                                 if lc.outcome.machine_suggested),
        "errored": sorted(r.case.id for r in run.records
                          if r.error is not None),
    }
    if generated_scores:
        section["generated_boxplot"] = export_boxplot_data(generated_scores)
    return section


def evaluate(dataset: Sequence[NlqCase], environments: dict, seed: int,
             labels: Optional[Iterable[dict]] = None,
             auto_label: bool = True) -> EvalReport:
    """Run every provided phase environment over the dataset and assemble
    the full report: banding, per-phase tables, pairwise exact tests."""
    labels = list(labels or ())
    runs: dict[str, PhaseRun] = {}
    for phase, env in environments.items():
        runs[phase] = run_phase(dataset, phase, env, seed)

    banding = compute_banding(dataset, runs)
    phases: dict[str, dict] = {}
    counts_by_phase: dict[str, dict] = {}
    ordered = [p for p in ("schema_only", "schema_plus_context",
                           "narrowed_schema") if p in runs]
    ordered += [p for p in sorted(runs) if p not in ordered]
    for phase in ordered:
        run = runs[phase]
        labeled = apply_labels(run, labels, auto_label=auto_label)
        section = _phase_section(run, labeled, banding)
        phases[phase] = section
        counts_by_phase[phase] = section["summary"]["outcome_totals"]

    tests: dict[str, dict] = {}
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            pair = pairwise_fisher(counts_by_phase[a], counts_by_phase[b])
            tests[f"{a}|{b}"] = {name: res.as_dict()
                                 for name, res in pair.items()}

    boxplot = {"banding_basis": export_boxplot_data(
        list(banding.score_by_case.values()))}

    report = EvalReport(
        dataset={"size": len(dataset), "ids": sorted(c.id for c in dataset),
                 "fingerprint": dataset_fingerprint(dataset)},
        banding=banding.as_dict(),
        phases=phases,
        tests=tests,
        boxplot=boxplot,
        run_metadata={
            "seed": seed,
            "phases": ordered,
            "auto_label": auto_label,
            "label_count": len(labels),
            "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        },
    )
    _check_report_invariants(report)
    return report


def _check_report_invariants(report: EvalReport) -> None:
    size = report.dataset["size"]
    for phase, section in report.phases.items():
        totals = section["summary"]["outcome_totals"]
        if sum(totals.values()) != size:
            raise EvalHarnessError(
                f"{phase}: outcome counts {totals} do not sum to {size}")
        pct_sum = sum(section["summary"]["percentages"].values())
        if abs(pct_sum - 100.0) > 0.1 + 1e-9:
            raise EvalHarnessError(
                f"{phase}: percentages sum to {pct_sum}, expected 100 +- 0.1")


def relabel_report(report: EvalReport, labels: Iterable[dict]) -> EvalReport:
    """Recompute outcomes, tables, and tests for a saved report from a new
    labels record set (human labels override stored ones; stored outcomes
    are kept where no new label applies)."""
    labels = list(labels)
    banding = report.banding
    new_phases: dict[str, dict] = {}
    counts_by_phase: dict[str, dict] = {}
    for phase, section in report.phases.items():
        by_id: dict[str, dict] = {}
        for rec in labels:
            if str(rec.get("phase")) == phase:
                by_id[str(rec["id"])] = rec
        cases = {}
        counts = {o: {b: 0 for b in BANDS} for o in OUTCOMES}
        for case_id, entry in section["cases"].items():
            entry = dict(entry)
            rec = by_id.get(case_id)
            if rec is not None:
                if rec.get("outcome") not in OUTCOMES:
                    raise EvalHarnessError(
                        f"label for {case_id!r} has invalid outcome")
                entry["outcome"] = Outcome(
                    category=rec["outcome"],
                    labeler=str(rec.get("labeler", "unknown")),
                    rationale=rec.get("rationale")).as_dict()
            cases[case_id] = entry
            counts[entry["outcome"]["category"]][entry["band"]] += 1

        n = len(cases)
        outcome_totals = {o: sum(counts[o].values()) for o in OUTCOMES}
        band_totals = {b: sum(counts[o][b] for o in OUTCOMES) for b in BANDS}
        lowmed_total = band_totals["low"] + band_totals["medium"]
        lowmed_pass = (counts[OUTCOME_PASS]["low"]
                       + counts[OUTCOME_PASS]["medium"])
        summary = {
            "n": n,
            "counts": counts,
            "outcome_totals": outcome_totals,
            "band_totals": band_totals,
            "percentages": {o: percent(outcome_totals[o], n)
                            for o in OUTCOMES},
            "excluding_high": {
                "pass": lowmed_pass,
                "total": lowmed_total,
                "rate": percent(lowmed_pass, lowmed_total)
                        if lowmed_total else None,
            },
        }
        new_section = dict(section)
        new_section["cases"] = cases
        new_section["summary"] = summary
        new_section["machine_suggested"] = sum(
            1 for e in cases.values()
            if e["outcome"].get("machine_suggested"))
        new_phases[phase] = new_section
        counts_by_phase[phase] = outcome_totals

    tests: dict[str, dict] = {}
    ordered = [p for p in ("schema_only", "schema_plus_context",
                           "narrowed_schema") if p in counts_by_phase]
    ordered += [p for p in sorted(counts_by_phase) if p not in ordered]
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            pair = pairwise_fisher(counts_by_phase[a], counts_by_phase[b])
            tests[f"{a}|{b}"] = {name: res.as_dict()
                                 for name, res in pair.items()}

    meta = dict(report.run_metadata)
    meta["relabeled_with"] = len(labels)
    return EvalReport(dataset=report.dataset, banding=banding,
                      phases=new_phases, tests=tests,
                      boxplot=report.boxplot, run_metadata=meta)


# ---------------------------------------------------------------------------
# emitters

_PHASE_TITLES = {
    "schema_only": "LLM Performance with DB Schema Only",
    "schema_plus_context": "LLM Performance with DB Schema and Business Context",
    "narrowed_schema": "LLM Performance with Narrowed Schema",
}


def render_report_text(report: EvalReport) -> str:
    lines: list[str] = []
    banding = report.banding
    lines.append(f"Dataset: {report.dataset['size']} cases "
                 f"(fingerprint {report.dataset['fingerprint'][:12]})")
    lines.append(f"Banding basis: {banding['basis']}; "
                 f"p25={banding['p25']} p75={banding['p75']}; "
                 f"counts low={banding['counts']['low']} "
                 f"medium={banding['counts']['medium']} "
                 f"high={banding['counts']['high']}")
    for note in banding.get("notes", []):
        lines.append(f"note: {note}")
    lines.append("")

    for phase in report.run_metadata.get("phases", sorted(report.phases)):
        section = report.phases[phase]
        summary = section["summary"]
        title = _PHASE_TITLES.get(phase, phase)
        lines.append(f"== {title} ({phase}, seed {section['seed']}) ==")
        header = f"{'Result':<14}" + "".join(f"{b.capitalize():>8}" for b in BANDS)
        header += f"{'Total':>8}{'Pct':>8}"
        lines.append(header)
        for outcome in OUTCOMES:
            row = f"{outcome:<14}"
            for band in BANDS:
                row += f"{summary['counts'][outcome][band]:>8}"
            row += f"{summary['outcome_totals'][outcome]:>8}"
            row += f"{summary['percentages'][outcome]:>7}%"
            lines.append(row)
        total_row = f"{'Total':<14}"
        for band in BANDS:
            total_row += f"{summary['band_totals'][band]:>8}"
        total_row += f"{summary['n']:>8}"
        lines.append(total_row)
        ex = summary["excluding_high"]
        if ex["rate"] is not None:
            lines.append(f"Pass rate excluding high complexity: "
                         f"{ex['pass']}/{ex['total']} ({ex['rate']}%)")
        lines.append(f"Machine-suggested labels: "
                     f"{section['machine_suggested']} of {summary['n']}")
        if section.get("errored"):
            lines.append("Errored cases: " + ", ".join(section["errored"]))
        lines.append("")

    if report.tests:
        lines.append("== Fisher exact tests (pairwise) ==")
        for pair, constructions in sorted(report.tests.items()):
            a, b = pair.split("|", 1)
            lines.append(f"{a} vs {b}:")
            for name in ("pass_vs_rest", "fail_vs_rest", "full_outcome"):
                res = constructions[name]
                detail = f"p={res['p_value']:.6g} ({res['method']}"
                if res.get("degenerate"):
                    detail += ", degenerate"
                if res.get("std_error") is not None:
                    detail += f", se={res['std_error']:.2g}"
                detail += ")"
                lines.append(f"  {name:<14} {detail}")
        lines.append("")

    box = report.boxplot.get("banding_basis")
    if box:
        lines.append("== Complexity score boxplot (banding basis) ==")
        lines.append(f"min={box['min']} p25={box['p25']} "
                     f"median={box['median']} p75={box['p75']} "
                     f"max={box['max']}")
        lines.append("points: " + ", ".join(str(x) for x in box["points"]))
        lines.append("")
    return "\n".join(lines)


def render_report_csv(report: EvalReport) -> str:
    """One row per (phase, outcome): counts by band, total, percentage."""
    lines = ["phase,outcome,low,medium,high,total,pct"]
    for phase in report.run_metadata.get("phases", sorted(report.phases)):
        summary = report.phases[phase]["summary"]
        for outcome in OUTCOMES:
            cells = [str(summary["counts"][outcome][b]) for b in BANDS]
            lines.append(",".join([phase, outcome] + cells
                                  + [str(summary["outcome_totals"][outcome]),
                                     str(summary["percentages"][outcome])]))
    return "\n".join(lines) + "\n"
