"""Command-line entry points.

Subcommands: score, band, ingest, retrieve, query, evaluate, report, stats,
serve. Everything emits machine-readable JSON on stdout except report, which
emits the human table layout (or CSV with --csv).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import resources
from .catalog import load_catalog_file
from .contextstore import (DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP,
                           LocalTrigramEmbedder, VectorIndex, build_index)
from .evalharness import (EvalReport, evaluate, load_dataset, load_labels,
                          relabel_report, render_report_csv,
                          render_report_text)
from .gateway import (ENV_API_BASE, RemoteChatProvider, ReplayProvider,
                      load_refusal_patterns)
from .pipeline import (PHASES, QueryRequest, answer_nlq,
                       build_environments_from_files)
from .sqlanalysis import (SqlAnalysisError, categorize_scores,
                          complexity_score, extract_features,
                          five_number_summary, validate_against_schema)
from .stats import fisher_exact_2x2, fisher_exact_rxc


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _read_sql(source: str | None) -> str:
    if source is None or source == "-":
        return sys.stdin.read()
    return Path(source).read_text(encoding="utf-8")


def cmd_score(args) -> int:
    sql = _read_sql(args.sql_file)
    try:
        features = extract_features(sql)
    except SqlAnalysisError as exc:
        _emit({"error": str(exc)})
        return 1
    record = {
        "features": features.as_dict(),
        "score": complexity_score(features, args.time_to_create),
        "time_to_create": args.time_to_create,
    }
    if args.schema:
        catalog = load_catalog_file(args.schema)
        record["validation"] = validate_against_schema(sql, catalog).as_dict()
    _emit(record)
    return 0


def _read_scores(args) -> list[int]:
    raw: list[str] = list(args.scores)
    if not raw:
        raw = sys.stdin.read().replace(",", " ").split()
    return [int(tok) for tok in raw]


def cmd_band(args) -> int:
    scores = _read_scores(args)
    if not scores:
        _emit({"error": "no scores given"})
        return 1
    banding = categorize_scores(scores)
    lo, p25, median, p75, hi = five_number_summary(scores)
    _emit({
        "bands": list(banding.bands),
        "p25": banding.p25,
        "p75": banding.p75,
        "counts": banding.counts(),
        "boxplot": {"min": lo, "p25": p25, "median": median,
                    "p75": p75, "max": hi},
    })
    return 0


def cmd_ingest(args) -> int:
    documents = []
    for doc in args.doc:
        path = Path(doc)
        documents.append((path.stem, path.read_text(encoding="utf-8")))
    index = build_index(documents, LocalTrigramEmbedder(),
                        chunk_size=args.chunk_size, overlap=args.overlap)
    index.save(args.out)
    _emit({"indexed_documents": len(documents), "chunks": len(index),
           "out": str(args.out)})
    return 0


def cmd_retrieve(args) -> int:
    index = VectorIndex.load(args.index)
    embedder = LocalTrigramEmbedder()
    if embedder.provider_id != index.provider_id:
        _emit({"error": f"index was built with provider "
                        f"{index.provider_id!r}, not {embedder.provider_id!r}"})
        return 1
    vec = embedder.embed([args.text])[0]
    hits = index.retrieve_top_k(vec, args.k)
    _emit([{"chunk_id": c.chunk_id, "similarity": round(sim, 9)}
           for c, sim in hits])
    return 0


def _make_provider(replay: str | None):
    if replay:
        return ReplayProvider.from_file(replay)
    if os.environ.get(ENV_API_BASE):
        return RemoteChatProvider()
    # offline default: the packaged sample replay corpus
    return ReplayProvider.from_file(resources.data_path(resources.SAMPLE_REPLAY))


def _build_envs(args, phases):
    provider = _make_provider(args.replay)
    patterns = load_refusal_patterns(
        args.refusal_patterns or resources.data_path(resources.REFUSAL_PATTERNS))
    return build_environments_from_files(
        provider,
        args.schema or resources.data_path(resources.SAMPLE_SCHEMA),
        context_path=args.context or resources.data_path(resources.SAMPLE_CONTEXT),
        keep_path=args.keep or resources.data_path(resources.NARROW_KEEP),
        phases=phases,
        retrieval_k=args.k,
        refusal_patterns=patterns,
    )


def cmd_query(args) -> int:
    envs = _build_envs(args, phases=(args.phase,))
    request = QueryRequest(nlq=args.nlq, phase=args.phase,
                           time_to_create=args.time_to_create)
    result = answer_nlq(request, envs[args.phase])
    _emit(result.as_dict())
    return 0


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.dataset
                           or resources.data_path(resources.SAMPLE_DATASET))
    phases = PHASES if args.phase == "all" else (args.phase,)
    envs = _build_envs(args, phases=phases)
    labels = load_labels(args.labels) if args.labels else None
    report = evaluate(dataset, envs, seed=args.seed, labels=labels,
                      auto_label=not args.no_auto_label)
    text = report.to_json(canonical=True)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.runs)
    files = sorted(run_dir.glob("*.json"))
    if not files:
        print(f"no run files found in {run_dir}", file=sys.stderr)
        return 1
    labels = load_labels(args.labels) if args.labels else None
    for path in files:
        report = EvalReport.from_json(path.read_text(encoding="utf-8"))
        if labels:
            report = relabel_report(report, labels)
        if len(files) > 1:
            print(f"# {path.name}")
        if args.csv:
            sys.stdout.write(render_report_csv(report))
        else:
            sys.stdout.write(render_report_text(report))
    return 0


def _parse_table(text: str) -> list[list[int]]:
    rows = []
    for row in text.split(";"):
        cells = [int(x) for x in row.split(",") if x.strip() != ""]
        if cells:
            rows.append(cells)
    return rows


def cmd_stats(args) -> int:
    table = _parse_table(args.table)
    out: dict = {"table": table}
    if len(table) == 2 and all(len(r) == 2 for r in table):
        out["fisher_2x2"] = fisher_exact_2x2(table).as_dict()
    out["fisher_rxc"] = fisher_exact_rxc(table, seed=args.seed).as_dict()
    _emit(out)
    return 0


def cmd_serve(args) -> int:
    from .service import default_config, load_service_config, run_service

    if args.config:
        config = load_service_config(args.config)
    else:
        config = default_config(feedback_path=args.feedback)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    run_service(config)
    return 0


def _add_env_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", help="schema YAML (default: packaged sample)")
    p.add_argument("--context", help="business context document "
                                     "(default: packaged sample)")
    p.add_argument("--keep", help="narrowed-phase keep list "
                                  "(default: packaged sample)")
    p.add_argument("--replay", help="replay corpus; default is the remote "
                                    "provider when CTXSQL_API_BASE is set, "
                                    "else the packaged sample corpus")
    p.add_argument("--refusal-patterns", help="refusal pattern file")
    p.add_argument("-k", type=int, default=4, help="retrieval depth")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ctxsql",
        description="NLQ-to-SQL workbench: scoring, retrieval, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="extract features and score a SQL query")
    p.add_argument("sql_file", nargs="?", help="SQL file ('-' for stdin)")
    p.add_argument("--time-to-create", type=int, default=0)
    p.add_argument("--schema", help="also validate against this schema YAML")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("band", help="band a list of complexity scores")
    p.add_argument("scores", nargs="*", help="scores (or stdin)")
    p.set_defaults(fn=cmd_band)

    p = sub.add_parser("ingest", help="chunk, embed and index documents")
    p.add_argument("--doc", action="append", required=True,
                   help="document file; repeatable")
    p.add_argument("--out", required=True, help="index output path")
    p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK_SIZE)
    p.add_argument("--overlap", type=int, default=DEFAULT_OVERLAP)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("retrieve", help="query a saved index")
    p.add_argument("--index", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("-k", type=int, default=4)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("query", help="run one NLQ through a phase pipeline")
    p.add_argument("--phase", required=True, choices=PHASES)
    p.add_argument("--nlq", required=True)
    p.add_argument("--time-to-create", type=int, default=0)
    _add_env_options(p)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("evaluate", help="run the evaluation over a dataset")
    p.add_argument("--dataset", help="dataset file (default: packaged sample)")
    p.add_argument("--phase", default="all", choices=PHASES + ("all",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", help="labels file to apply")
    p.add_argument("--no-auto-label", action="store_true",
                   help="require a human label for every case")
    p.add_argument("--out", help="write the report JSON here")
    _add_env_options(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="render saved evaluation reports")
    p.add_argument("--runs", required=True, help="directory of report JSONs")
    p.add_argument("--labels", help="labels file to re-apply")
    p.add_argument("--csv", action="store_true", help="emit CSV instead")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("stats", help="Fisher exact test on a table")
    p.add_argument("--table", required=True,
                   help="semicolon-separated rows, e.g. '3,1;1,3'")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", help="service config YAML")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--feedback", default="feedback.jsonl",
                   help="feedback log path when no config file is given")
    p.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
