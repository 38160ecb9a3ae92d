"""HTTP service over the query pipeline and the feedback log.

Startup is fail-fast: corpora are loaded, indexed, and hashed before the
app accepts traffic, so a missing artifact kills the process instead of
surfacing as runtime 500s. The feedback store is an append-only JSONL log;
consumers resolve duplicates last-write-wins per (id, phase, labeler).
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml
from fastapi import Body, FastAPI, HTTPException

from . import resources
from .evalharness import OUTCOMES, corpus_hash
from .gateway import (DEFAULT_REFUSAL_PATTERNS, GatewayError, ProviderError,
                      RemoteChatProvider, ReplayProvider,
                      load_refusal_patterns)
from .pipeline import (PHASES, PipelineProviderError, QueryRequest,
                       answer_nlq, build_environments_from_files)

PROVIDER_MODES = ("replay", "remote")


class ServiceError(Exception):
    pass


@dataclass
class ServiceConfig:
    schema_path: Path
    context_path: Path
    keep_path: Path
    feedback_path: Path
    provider_mode: str = "replay"
    replay_path: Optional[Path] = None
    refusal_patterns_path: Optional[Path] = None
    retrieval_k: int = 4
    host: str = "127.0.0.1"
    port: int = 8000

    def __post_init__(self):
        if self.provider_mode not in PROVIDER_MODES:
            raise ServiceError(f"unknown provider mode {self.provider_mode!r}")
        if self.provider_mode == "replay" and self.replay_path is None:
            raise ServiceError("replay mode requires a replay file")


def default_config(feedback_path: Path | str = "feedback.jsonl",
                   provider_mode: str = "replay") -> ServiceConfig:
    """Config over the packaged sample artifacts."""
    return ServiceConfig(
        schema_path=resources.data_path(resources.SAMPLE_SCHEMA),
        context_path=resources.data_path(resources.SAMPLE_CONTEXT),
        keep_path=resources.data_path(resources.NARROW_KEEP),
        feedback_path=Path(feedback_path),
        provider_mode=provider_mode,
        replay_path=(resources.data_path(resources.SAMPLE_REPLAY)
                     if provider_mode == "replay" else None),
        refusal_patterns_path=resources.data_path(resources.REFUSAL_PATTERNS),
    )


def load_service_config(path: Path | str) -> ServiceConfig:
    """Read a YAML config file; relative paths resolve against the file."""
    path = Path(path)
    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(doc, dict):
        raise ServiceError(f"config {path} must be a mapping")
    base = path.parent

    def resolve(key: str, default: Optional[str] = None) -> Optional[Path]:
        value = doc.get(key, default)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    mode = str(doc.get("provider_mode", "replay"))
    schema = resolve("schema_path")
    context = resolve("context_path")
    keep = resolve("keep_path")
    return ServiceConfig(
        schema_path=schema or resources.data_path(resources.SAMPLE_SCHEMA),
        context_path=context or resources.data_path(resources.SAMPLE_CONTEXT),
        keep_path=keep or resources.data_path(resources.NARROW_KEEP),
        feedback_path=resolve("feedback_path", "feedback.jsonl"),
        provider_mode=mode,
        replay_path=resolve("replay_path"),
        refusal_patterns_path=resolve("refusal_patterns_path"),
        retrieval_k=int(doc.get("retrieval_k", 4)),
        host=str(doc.get("host", "127.0.0.1")),
        port=int(doc.get("port", 8000)),
    )


class FeedbackLog:
    """Append-only JSONL store; writes serialized through one lock."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> int:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            return self.count()

    def count(self) -> int:
        if not self.path.exists():
            return 0
        with open(self.path, encoding="utf-8") as fh:
            return sum(1 for ln in fh if ln.strip())

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for ln in fh:
                if ln.strip():
                    out.append(json.loads(ln))
        return out


def _build_provider(config: ServiceConfig):
    if config.provider_mode == "replay":
        return ReplayProvider.from_file(config.replay_path)
    return RemoteChatProvider()


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    if config is None:
        config = default_config()

    for required in (config.schema_path, config.context_path,
                     config.keep_path):
        if not Path(required).exists():
            raise ServiceError(f"corpus file missing: {required}")

    refusal_patterns = DEFAULT_REFUSAL_PATTERNS
    if config.refusal_patterns_path is not None:
        refusal_patterns = load_refusal_patterns(config.refusal_patterns_path)

    provider = _build_provider(config)
    environments = build_environments_from_files(
        provider, config.schema_path,
        context_path=config.context_path,
        keep_path=config.keep_path,
        retrieval_k=config.retrieval_k,
        refusal_patterns=refusal_patterns,
    )
    hashes = {phase: corpus_hash(env) for phase, env in environments.items()}
    feedback = FeedbackLog(config.feedback_path)

    app = FastAPI(title="ctxsql service", version="0.1.0")
    app.state.config = config
    app.state.environments = environments
    app.state.feedback = feedback

    @app.post("/api/query")
    def query(payload: dict = Body(...)):
        nlq = payload.get("nlq")
        if not isinstance(nlq, str) or not nlq.strip():
            raise HTTPException(status_code=400, detail="nlq must be a non-empty string")
        phase = payload.get("phase")
        if phase not in PHASES:
            raise HTTPException(
                status_code=422,
                detail=f"unknown phase {phase!r}; expected one of {list(PHASES)}")
        request = QueryRequest(nlq=nlq, phase=phase,
                               time_to_create=int(payload.get("time_to_create", 0)))
        nlq_id = payload.get("nlq_id")
        try:
            result = answer_nlq(request, environments[phase],
                                nlq_id=str(nlq_id) if nlq_id else None)
        except (PipelineProviderError, GatewayError, ProviderError) as exc:
            raise HTTPException(status_code=502,
                                detail=f"provider failure: {exc}") from exc
        return result.as_dict()

    @app.post("/api/feedback")
    def post_feedback(payload: dict = Body(...)):
        outcome = payload.get("outcome")
        if outcome not in OUTCOMES:
            raise HTTPException(
                status_code=400,
                detail=f"outcome must be one of {list(OUTCOMES)}")
        phase = payload.get("phase")
        if phase not in PHASES:
            raise HTTPException(status_code=400,
                                detail=f"unknown phase {phase!r}")
        labeler = payload.get("labeler")
        if not isinstance(labeler, str) or not labeler.strip():
            raise HTTPException(status_code=400,
                                detail="labeler must be a non-empty string")
        record_id = payload.get("id")
        if not record_id:
            nlq = payload.get("nlq")
            if not isinstance(nlq, str) or not nlq.strip():
                raise HTTPException(status_code=400,
                                    detail="either id or nlq is required")
            digest = hashlib.sha256(" ".join(nlq.split()).lower()
                                    .encode("utf-8")).hexdigest()
            record_id = f"nlq:{digest[:16]}"
        record = {
            "id": str(record_id),
            "phase": phase,
            "outcome": outcome,
            "labeler": labeler,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        if payload.get("rationale"):
            record["rationale"] = str(payload["rationale"])
        seq = feedback.append(record)
        return {"stored_id": record["id"], "seq": seq}

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "provider": config.provider_mode,
            "phases": {
                phase: {"corpus_hash": hashes[phase],
                        "chunks": len(env.index)}
                for phase, env in environments.items()
            },
            "feedback_count": feedback.count(),
        }

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
