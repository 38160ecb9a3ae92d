"""Prompt assembly, completion providers, and response post-processing.

The prompt couples a fixed Oracle-SQL-expert persona with retrieved context
blocks and the user's question. Completions come from either an
OpenAI-compatible chat endpoint (remote mode, temperature 0) or a replay
provider that returns recorded responses keyed by (phase, nlq_id) for
offline, reproducible runs. Responses are reduced to SQL text, a refusal,
or "unparseable" by a fixed precedence: fenced code block, then refusal
phrase, then a bare SELECT/WITH statement.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import httpx

from .contextstore import Chunk

DEFAULT_PERSONA = (
    "You are an Oracle SQL expert. Given a question, generate a "
    "syntactically correct Oracle SQL query. Avoid querying non-existent "
    "columns and pay close attention to column-table associations. For "
    "keywords in the WHERE clause, ensure case-insensitive data comparison, "
    "for example, upper(STATE_NAME) = upper('deleted'). If you are unable "
    "to generate the SQL query, please state that you cannot create the "
    "query without additional information or context, do not attempt to "
    "make anything up."
)

DEFAULT_REFUSAL_PATTERNS = (
    "cannot create the query",
    "cannot generate the sql",
)

SQL_KIND = "sql"
REFUSAL_KIND = "refusal"
UNPARSEABLE_KIND = "unparseable"

DEFAULT_MAX_IN_FLIGHT = 4
ENV_API_BASE = "CTXSQL_API_BASE"
ENV_API_KEY = "CTXSQL_API_KEY"
ENV_MODEL = "CTXSQL_MODEL"


class GatewayError(Exception):
    pass


class ProviderError(GatewayError):
    """Transport, auth, or protocol failure from a completion provider."""

    def __init__(self, message: str, status: Optional[int] = None,
                 retry_after: Optional[float] = None):
        super().__init__(message)
        self.status = status
        self.retry_after = retry_after


class RateLimitError(ProviderError):
    pass


class ReplayMissError(GatewayError):
    def __init__(self, phase: str, key: str):
        super().__init__(f"no replay record for phase={phase!r} key={key!r}")
        self.phase = phase
        self.key = key


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    context_blocks: tuple[str, ...]
    user_nlq: str

    def __post_init__(self):
        if not self.system_text:
            raise ValueError("system_text must be non-empty")
        if not self.user_nlq.strip():
            raise ValueError("user_nlq must be non-empty")

    def user_text(self) -> str:
        if not self.context_blocks:
            return f"Question: {self.user_nlq}"
        joined = "\n\n".join(self.context_blocks)
        return f"Context:\n\n{joined}\n\nQuestion: {self.user_nlq}"

    def as_messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text()},
        ]


@dataclass(frozen=True)
class LlmResponse:
    raw_text: str
    provider_id: str
    latency: float = 0.0
    token_usage: Optional[dict] = None


@dataclass(frozen=True)
class ExtractionResult:
    kind: str
    sql_text: Optional[str] = None
    refusal_text: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (SQL_KIND, REFUSAL_KIND, UNPARSEABLE_KIND):
            raise ValueError(f"unknown extraction kind {self.kind!r}")
        if (self.kind == SQL_KIND) != (self.sql_text is not None):
            raise ValueError("sql_text present iff kind is sql")
        if (self.kind == REFUSAL_KIND) != (self.refusal_text is not None):
            raise ValueError("refusal_text present iff kind is refusal")

    def as_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.sql_text is not None:
            out["sql_text"] = self.sql_text
        if self.refusal_text is not None:
            out["refusal_text"] = self.refusal_text
        return out


def assemble_prompt(nlq: str, retrieved_chunks: Sequence[Chunk],
                    persona: str = DEFAULT_PERSONA) -> PromptBundle:
    """Build the prompt: persona verbatim, context blocks in retrieval-rank
    order each prefixed with its [doc_id#seq] source marker, then the NLQ."""
    blocks = tuple(f"[{c.chunk_id}]\n{c.text}" for c in retrieved_chunks)
    return PromptBundle(system_text=persona, context_blocks=blocks,
                        user_nlq=nlq)


class ChatProvider(Protocol):
    provider_id: str

    def complete(self, bundle: PromptBundle, *, phase: str,
                 nlq_id: Optional[str] = None) -> LlmResponse: ...


def complete(bundle: PromptBundle, provider: ChatProvider, *, phase: str,
             nlq_id: Optional[str] = None) -> LlmResponse:
    return provider.complete(bundle, phase=phase, nlq_id=nlq_id)


def _normalize_nlq(text: str) -> str:
    return " ".join(text.split()).lower()


class ReplayProvider:
    """Deterministic provider backed by a recorded response set.

    Records are looked up by (phase, nlq_id); ad-hoc queries without an id
    fall back to a normalized-NLQ-text match within the phase. Lookup misses
    raise rather than fabricate.
    """

    provider_id = "replay"

    def __init__(self, records: Iterable[dict]):
        self._by_id: dict[tuple[str, str], str] = {}
        self._by_text: dict[tuple[str, str], str] = {}
        count = 0
        for rec in records:
            phase = str(rec["phase"])
            response = str(rec["response"])
            nlq_id = rec.get("nlq_id")
            if nlq_id is not None:
                self._by_id[(phase, str(nlq_id))] = response
            nlq = rec.get("nlq")
            if nlq:
                self._by_text[(phase, _normalize_nlq(str(nlq)))] = response
            count += 1
        if count == 0:
            raise GatewayError("replay record set is empty")
        self.record_count = count

    @classmethod
    def from_file(cls, path) -> "ReplayProvider":
        text = Path(path).read_text(encoding="utf-8")
        stripped = text.lstrip()
        if stripped.startswith("["):
            records = json.loads(text)
        else:
            records = [json.loads(line) for line in text.splitlines()
                       if line.strip()]
        return cls(records)

    def complete(self, bundle: PromptBundle, *, phase: str,
                 nlq_id: Optional[str] = None) -> LlmResponse:
        raw: Optional[str] = None
        if nlq_id is not None:
            raw = self._by_id.get((phase, nlq_id))
        if raw is None:
            raw = self._by_text.get((phase, _normalize_nlq(bundle.user_nlq)))
        if raw is None:
            raise ReplayMissError(phase, nlq_id or _normalize_nlq(bundle.user_nlq))
        return LlmResponse(raw_text=raw, provider_id=self.provider_id,
                           latency=0.0)


class RemoteChatProvider:
    """OpenAI-compatible chat-completion client. Temperature is pinned to 0
    so repeated runs are comparable; in-flight calls are capped."""

    def __init__(self, api_base: Optional[str] = None,
                 api_key: Optional[str] = None,
                 model: Optional[str] = None,
                 timeout: float = 60.0,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT):
        self.api_base = (api_base or os.environ.get(ENV_API_BASE) or "").rstrip("/")
        if not self.api_base:
            raise GatewayError(f"remote provider requires {ENV_API_BASE}")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL) or "gpt-4"
        self.timeout = timeout
        self.provider_id = f"remote:{self.model}"
        self._gate = threading.Semaphore(max(1, max_in_flight))

    def complete(self, bundle: PromptBundle, *, phase: str,
                 nlq_id: Optional[str] = None) -> LlmResponse:
        payload = {
            "model": self.model,
            "messages": bundle.as_messages(),
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.api_base}/chat/completions"
        start = time.monotonic()
        with self._gate:
            try:
                resp = httpx.post(url, json=payload, headers=headers,
                                  timeout=self.timeout)
            except httpx.HTTPError as exc:
                raise ProviderError(f"transport failure: {exc}") from exc
        elapsed = time.monotonic() - start
        if resp.status_code == 429:
            retry_after = _parse_retry_after(resp.headers.get("Retry-After"))
            raise RateLimitError("rate limited by provider",
                                 status=429, retry_after=retry_after)
        if resp.status_code >= 400:
            raise ProviderError(
                f"provider returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code)
        try:
            body = resp.json()
            raw = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc
        if raw is None:
            raise ProviderError("completion response had null content")
        usage = body.get("usage") if isinstance(body.get("usage"), dict) else None
        return LlmResponse(raw_text=str(raw), provider_id=self.provider_id,
                           latency=elapsed, token_usage=usage)


def _parse_retry_after(value: Optional[str]) -> Optional[float]:
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        return None


def load_refusal_patterns(path) -> tuple[str, ...]:
    """One pattern per line; blank lines and '#' comments ignored."""
    patterns = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            patterns.append(line)
    if not patterns:
        raise GatewayError(f"no refusal patterns in {path}")
    return tuple(patterns)


def detect_refusal(text: str,
                   patterns: Sequence[str] = DEFAULT_REFUSAL_PATTERNS) -> bool:
    lowered = text.lower()
    return any(p.lower() in lowered for p in patterns)


_FENCE_RE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\r?\n?(.*?)```", re.DOTALL)
_BARE_SQL_RE = re.compile(r"\b(select|with)\b", re.IGNORECASE)


def _truncate_statement(text: str) -> str:
    # keep through the first statement terminator outside string literals
    in_string = False
    for i, ch in enumerate(text):
        if ch == "'":
            in_string = not in_string
        elif ch == ";" and not in_string:
            return text[: i + 1]
    return text


def extract_sql(response, refusal_patterns: Sequence[str] = DEFAULT_REFUSAL_PATTERNS
                ) -> ExtractionResult:
    """Classify a raw completion. Precedence: a fenced block labeled sql (or
    unlabeled) wins even when refusal phrasing appears around it; otherwise a
    refusal phrase; otherwise the first bare SELECT/WITH statement."""
    text = response.raw_text if isinstance(response, LlmResponse) else str(response)

    for match in _FENCE_RE.finditer(text):
        label = match.group(1).lower()
        body = match.group(2).strip()
        if label in ("", "sql") and body:
            return ExtractionResult(kind=SQL_KIND, sql_text=body)

    if detect_refusal(text, refusal_patterns):
        return ExtractionResult(kind=REFUSAL_KIND, refusal_text=text.strip())

    bare = _BARE_SQL_RE.search(text)
    if bare:
        stmt = _truncate_statement(text[bare.start():]).strip().rstrip("`")
        if stmt:
            return ExtractionResult(kind=SQL_KIND, sql_text=stmt.strip())

    return ExtractionResult(kind=UNPARSEABLE_KIND)
