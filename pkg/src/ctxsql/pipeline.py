"""Single-query path: NLQ -> embed -> retrieve -> prompt -> complete ->
extract -> validate -> score.

Each phase gets its own immutable environment (retrieval corpus, validation
catalog, provider); answer_nlq is stateless, so results depend only on the
request and the environment, never on call order.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .catalog import SchemaCatalog, load_catalog_file, narrow, render_schema_text
from .contextstore import (DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP,
                           EmbeddingProvider, LocalTrigramEmbedder,
                           VectorIndex, build_index)
from .gateway import (DEFAULT_PERSONA, DEFAULT_REFUSAL_PATTERNS, ChatProvider,
                      ExtractionResult, ProviderError, assemble_prompt,
                      extract_sql)
from .sqlanalysis import (SqlAnalysisError, SqlFeatures, ValidationReport,
                          complexity_score, extract_features,
                          validate_against_schema)

PHASE_SCHEMA_ONLY = "schema_only"
PHASE_SCHEMA_PLUS_CONTEXT = "schema_plus_context"
PHASE_NARROWED_SCHEMA = "narrowed_schema"
PHASES = (PHASE_SCHEMA_ONLY, PHASE_SCHEMA_PLUS_CONTEXT, PHASE_NARROWED_SCHEMA)

SCHEMA_DOC_ID = "schema"
CONTEXT_DOC_ID = "context"

DEFAULT_RETRIEVAL_K = 4


class PipelineError(Exception):
    pass


class PipelineProviderError(PipelineError):
    """Provider failure carrying the provenance gathered before the call."""

    def __init__(self, message: str, retrieved: tuple):
        super().__init__(message)
        self.retrieved = retrieved


@dataclass(frozen=True)
class QueryRequest:
    nlq: str
    phase: str
    time_to_create: int = 0

    def __post_init__(self):
        if not self.nlq.strip():
            raise ValueError("nlq must be non-empty")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.time_to_create < 0:
            raise ValueError("time_to_create must be nonnegative")


@dataclass(frozen=True)
class RetrievedRef:
    chunk_id: str
    similarity: float
    preview: str

    def as_dict(self) -> dict:
        return {"chunk_id": self.chunk_id,
                "similarity": round(self.similarity, 9),
                "preview": self.preview}


# run_metadata keys that vary between otherwise-identical runs; canonical
# serializations drop them so same-seed reports compare byte-equal
VOLATILE_METADATA_KEYS = ("timestamp", "latency")


@dataclass(frozen=True)
class QueryResult:
    extraction: ExtractionResult
    retrieved: tuple[RetrievedRef, ...]
    validation: Optional[ValidationReport]
    features: Optional[SqlFeatures]
    score: Optional[int]
    run_metadata: dict

    def __post_init__(self):
        is_sql = self.extraction.kind == "sql"
        if (self.validation is not None) != is_sql:
            raise ValueError("validation present iff extraction is sql")
        if not is_sql and (self.features is not None or self.score is not None):
            raise ValueError("features/score only on sql extractions")

    def as_dict(self, canonical: bool = False) -> dict:
        meta = dict(self.run_metadata)
        if canonical:
            for key in VOLATILE_METADATA_KEYS:
                meta.pop(key, None)
        return {
            "extraction": self.extraction.as_dict(),
            "retrieved": [r.as_dict() for r in self.retrieved],
            "validation": self.validation.as_dict() if self.validation else None,
            "features": self.features.as_dict() if self.features else None,
            "score": self.score,
            "run_metadata": meta,
        }


@dataclass
class PhaseEnvironment:
    phase: str
    catalog: SchemaCatalog
    index: VectorIndex
    embedder: EmbeddingProvider
    provider: ChatProvider
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    persona: str = DEFAULT_PERSONA
    refusal_patterns: Sequence[str] = DEFAULT_REFUSAL_PATTERNS
    corpus_doc_ids: tuple[str, ...] = field(default_factory=tuple)


def build_phase_environment(phase: str,
                            catalog: SchemaCatalog,
                            provider: ChatProvider,
                            *,
                            business_context: Optional[str] = None,
                            narrow_keep: Optional[Sequence[str]] = None,
                            embedder: Optional[EmbeddingProvider] = None,
                            retrieval_k: int = DEFAULT_RETRIEVAL_K,
                            chunk_size: int = DEFAULT_CHUNK_SIZE,
                            overlap: int = DEFAULT_OVERLAP,
                            persona: str = DEFAULT_PERSONA,
                            refusal_patterns: Sequence[str] = DEFAULT_REFUSAL_PATTERNS,
                            ) -> PhaseEnvironment:
    """Assemble the per-phase corpus and validation catalog.

    schema_only: full schema rendering. schema_plus_context: full schema plus
    the business context document. narrowed_schema: rendering of the narrowed
    catalog only, and validation runs against the narrowed catalog.
    """
    if phase not in PHASES:
        raise PipelineError(f"unknown phase {phase!r}")
    if embedder is None:
        embedder = LocalTrigramEmbedder()

    validation_catalog = catalog
    if phase == PHASE_NARROWED_SCHEMA:
        if not narrow_keep:
            raise PipelineError("narrowed_schema phase requires narrow_keep")
        validation_catalog = narrow(catalog, list(narrow_keep)).catalog

    documents = [(SCHEMA_DOC_ID, render_schema_text(validation_catalog))]
    if phase == PHASE_SCHEMA_PLUS_CONTEXT:
        if not business_context:
            raise PipelineError(
                "schema_plus_context phase requires business_context")
        documents.append((CONTEXT_DOC_ID, business_context))

    index = build_index(documents, embedder,
                        chunk_size=chunk_size, overlap=overlap)
    return PhaseEnvironment(phase=phase, catalog=validation_catalog,
                            index=index, embedder=embedder, provider=provider,
                            retrieval_k=retrieval_k, persona=persona,
                            refusal_patterns=refusal_patterns,
                            corpus_doc_ids=tuple(d for d, _ in documents))


def load_keep_list(path) -> list[str]:
    """Table names for the narrowed phase, one per line; '#' comments and
    blank lines are ignored."""
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    if not names:
        raise PipelineError(f"keep list {path} is empty")
    return names


def build_environments_from_files(provider: ChatProvider,
                                  schema_path,
                                  *,
                                  context_path=None,
                                  keep_path=None,
                                  phases: Sequence[str] = PHASES,
                                  embedder: Optional[EmbeddingProvider] = None,
                                  retrieval_k: int = DEFAULT_RETRIEVAL_K,
                                  refusal_patterns: Sequence[str] = DEFAULT_REFUSAL_PATTERNS,
                                  ) -> dict:
    """Build one environment per requested phase from artifact files. A
    single embedder instance is shared so query and corpus vectors always
    come from the same provider."""
    catalog = load_catalog_file(schema_path)
    if embedder is None:
        embedder = LocalTrigramEmbedder()
    envs = {}
    for phase in phases:
        kwargs: dict = {}
        if phase == PHASE_SCHEMA_PLUS_CONTEXT:
            if context_path is None:
                raise PipelineError(
                    "schema_plus_context phase requires a context document path")
            kwargs["business_context"] = Path(context_path).read_text(
                encoding="utf-8")
        if phase == PHASE_NARROWED_SCHEMA:
            if keep_path is None:
                raise PipelineError(
                    "narrowed_schema phase requires a keep-list path")
            kwargs["narrow_keep"] = load_keep_list(keep_path)
        envs[phase] = build_phase_environment(
            phase, catalog, provider, embedder=embedder,
            retrieval_k=retrieval_k, refusal_patterns=refusal_patterns,
            **kwargs)
    return envs


def _preview(text: str, width: int = 160) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= width else flat[: width - 1] + "…"


def answer_nlq(request: QueryRequest, env: PhaseEnvironment,
               *, nlq_id: Optional[str] = None) -> QueryResult:
    if request.phase != env.phase:
        raise PipelineError(
            f"request phase {request.phase!r} does not match environment "
            f"phase {env.phase!r}")

    query_vec = env.embedder.embed([request.nlq])[0]
    hits = env.index.retrieve_top_k(query_vec, env.retrieval_k)
    retrieved = tuple(RetrievedRef(chunk_id=c.chunk_id, similarity=sim,
                                   preview=_preview(c.text))
                      for c, sim in hits)

    bundle = assemble_prompt(request.nlq, [c for c, _ in hits], env.persona)
    try:
        response = env.provider.complete(bundle, phase=env.phase,
                                         nlq_id=nlq_id)
    except ProviderError as exc:
        raise PipelineProviderError(str(exc), retrieved=retrieved) from exc

    extraction = extract_sql(response, env.refusal_patterns)

    validation: Optional[ValidationReport] = None
    features: Optional[SqlFeatures] = None
    score: Optional[int] = None
    if extraction.kind == "sql":
        sql = extraction.sql_text or ""
        try:
            features = extract_features(sql)
            score = complexity_score(features, request.time_to_create)
            validation = validate_against_schema(sql, env.catalog)
        except SqlAnalysisError as exc:
            # extraction said sql, but the text is not analyzable; surface
            # the parse failure as a failed validation instead of crashing
            features = None
            score = None
            validation = ValidationReport(
                ok=False, unknown_tables=(), unknown_columns=(),
                notes=(f"SQL could not be analyzed: {exc}",))

    metadata = {
        "phase": env.phase,
        "provider_id": response.provider_id,
        "embedder_id": env.embedder.provider_id,
        "retrieval_k": env.retrieval_k,
        "nlq": request.nlq,
        "time_to_create": request.time_to_create,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "latency": response.latency,
    }
    if nlq_id is not None:
        metadata["nlq_id"] = nlq_id

    return QueryResult(extraction=extraction, retrieved=retrieved,
                       validation=validation, features=features, score=score,
                       run_metadata=metadata)
