"""Context corpus store: sliding-window chunking, pluggable embeddings and
brute-force cosine retrieval.

Documents are split into fixed-size character windows (default 1000 chars
with 200 overlap), embedded, and kept in an exact in-memory index; the
corpus is tens of pages, so a linear scan beats any ANN structure here.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol

import numpy as np

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_OVERLAP = 200
LOCAL_EMBEDDING_DIM = 256

INDEX_FORMAT_VERSION = 1


class ContextStoreError(Exception):
    pass


class EmbeddingProviderError(ContextStoreError):
    """Remote embedding call failed; carries retry metadata when known."""

    def __init__(self, message: str, retry_after: Optional[float] = None):
        self.retry_after = retry_after
        super().__init__(message)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    seq: int
    start_char: int
    end_char: int
    text: str

    @property
    def chunk_id(self) -> str:
        return f"{self.doc_id}#{self.seq}"


def split_text(doc_id: str, text: str,
               chunk_size: int = DEFAULT_CHUNK_SIZE,
               overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    """Split text into overlapping windows with stride chunk_size - overlap.

    Windows start at 0, stride, 2*stride, ...; the final window is clipped to
    the text length, so every character is covered and neighbors share
    exactly `overlap` characters.
    """
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    if overlap < 0 or overlap >= chunk_size:
        raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")
    if not text:
        raise ValueError("cannot split empty text")

    stride = chunk_size - overlap
    chunks = []
    pos = 0
    seq = 0
    while True:
        end = min(pos + chunk_size, len(text))
        chunks.append(Chunk(doc_id=doc_id, seq=seq, start_char=pos,
                            end_char=end, text=text[pos:end]))
        if end >= len(text):
            break
        pos += stride
        seq += 1
    return chunks


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, texts: list[str]) -> np.ndarray: ...


class LocalTrigramEmbedder:
    """Deterministic offline embedder: hashed character-trigram counts,
    L2-normalized. Texts are padded with boundary markers so even one-char
    input yields a nonzero vector."""

    provider_id = "local-trigram-v1"

    def __init__(self, dim: int = LOCAL_EMBEDDING_DIM):
        if dim <= 0:
            raise ValueError("embedding dim must be positive")
        self.dim = dim

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("no texts to embed")
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            if not text:
                raise ValueError(f"text #{row} is empty")
            padded = "\x02" + text + "\x03"
            for i in range(len(padded) - 2):
                bucket = zlib.crc32(padded[i:i + 3].encode("utf-8")) % self.dim
                out[row, bucket] += 1.0
            norm = np.linalg.norm(out[row])
            out[row] /= norm
        return out


class RemoteEmbedder:
    """Client for an embeddings HTTP endpoint (the common
    {input: [...]} -> {data: [{embedding: [...]}]} shape)."""

    def __init__(self, base_url: Optional[str] = None,
                 api_key: Optional[str] = None,
                 model: str = "text-embedding-ada-002",
                 timeout: float = 60.0):
        import httpx

        self.base_url = (base_url or os.environ.get("CTXSQL_API_BASE") or "").rstrip("/")
        self.api_key = api_key or os.environ.get("CTXSQL_API_KEY") or ""
        if not self.base_url:
            raise EmbeddingProviderError(
                "remote embedder needs a base URL (CTXSQL_API_BASE)")
        self.model = model
        self.provider_id = f"remote:{model}"
        self.dim = -1  # learned from the first response
        self._client = httpx.Client(timeout=timeout)

    def embed(self, texts: list[str]) -> np.ndarray:
        import httpx

        if not texts:
            raise ValueError("no texts to embed")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                f"{self.base_url}/embeddings",
                headers=headers,
                json={"model": self.model, "input": texts},
            )
        except httpx.HTTPError as exc:
            raise EmbeddingProviderError(f"embedding transport error: {exc}") from exc
        if resp.status_code == 429:
            retry = resp.headers.get("Retry-After")
            raise EmbeddingProviderError(
                "embedding endpoint rate-limited",
                retry_after=float(retry) if retry else None)
        if resp.status_code >= 400:
            raise EmbeddingProviderError(
                f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}")
        data = resp.json().get("data", [])
        if len(data) != len(texts):
            raise EmbeddingProviderError(
                f"expected {len(texts)} embeddings, got {len(data)}")
        vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise EmbeddingProviderError(f"inconsistent embedding dims: {sorted(dims)}")
        dim = dims.pop()
        if self.dim == -1:
            self.dim = dim
        elif dim != self.dim:
            raise EmbeddingProviderError(
                f"embedding dim changed from {self.dim} to {dim}")
        return np.vstack(vectors)


class VectorIndex:
    """Immutable-after-build exact index of (chunk, embedding) pairs."""

    def __init__(self, chunks: list[Chunk], vectors: np.ndarray, provider_id: str):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(chunks):
            raise ContextStoreError(
                f"vector matrix {vectors.shape} does not match {len(chunks)} chunks")
        ids = [c.chunk_id for c in chunks]
        if len(set(ids)) != len(ids):
            raise ContextStoreError("duplicate chunk ids in index")
        self.chunks = list(chunks)
        self.vectors = vectors
        self.provider_id = provider_id
        norms = np.linalg.norm(vectors, axis=1)
        if len(chunks) and not np.all(norms > 0):
            raise ContextStoreError("index contains zero-norm vectors")
        self._unit = vectors / norms[:, None] if len(chunks) else vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.chunks)

    def retrieve_top_k(self, query_vector: np.ndarray, k: int) -> list[tuple[Chunk, float]]:
        """Top-k chunks by cosine similarity, ties broken by (doc_id, seq)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.chunks:
            return []
        query = np.asarray(query_vector, dtype=np.float64).reshape(-1)
        if query.shape[0] != self.dim:
            raise ContextStoreError(
                f"query dim {query.shape[0]} != index dim {self.dim}")
        norm = np.linalg.norm(query)
        if norm == 0:
            raise ContextStoreError("query vector has zero norm")
        sims = self._unit @ (query / norm)
        sims = np.clip(sims, -1.0, 1.0)
        order = sorted(range(len(self.chunks)),
                       key=lambda i: (-sims[i], self.chunks[i].doc_id, self.chunks[i].seq))
        return [(self.chunks[i], float(sims[i])) for i in order[:k]]

    # -- persistence: a versioned JSON sidecar so ingest and query can be
    #    separate CLI invocations

    def save(self, path: str | Path) -> None:
        doc = {
            "version": INDEX_FORMAT_VERSION,
            "provider": self.provider_id,
            "dim": self.dim,
            "entries": [
                {
                    "doc_id": c.doc_id,
                    "seq": c.seq,
                    "start_char": c.start_char,
                    "end_char": c.end_char,
                    "text": c.text,
                    "vector": self.vectors[i].tolist(),
                }
                for i, c in enumerate(self.chunks)
            ],
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        version = doc.get("version")
        if version != INDEX_FORMAT_VERSION:
            raise ContextStoreError(f"unsupported index format version {version!r}")
        chunks = []
        vectors = []
        for entry in doc["entries"]:
            chunks.append(Chunk(
                doc_id=entry["doc_id"], seq=entry["seq"],
                start_char=entry["start_char"], end_char=entry["end_char"],
                text=entry["text"]))
            vectors.append(entry["vector"])
        matrix = np.asarray(vectors, dtype=np.float64) if vectors \
            else np.zeros((0, doc["dim"]))
        return cls(chunks, matrix, doc["provider"])


def build_index(documents: Iterable[tuple[str, str]],
                embedder: EmbeddingProvider,
                chunk_size: int = DEFAULT_CHUNK_SIZE,
                overlap: int = DEFAULT_OVERLAP) -> VectorIndex:
    """Chunk and embed (doc_id, text) pairs into a retrieval index."""
    chunks: list[Chunk] = []
    for doc_id, text in documents:
        chunks.extend(split_text(doc_id, text, chunk_size=chunk_size, overlap=overlap))
    if not chunks:
        raise ContextStoreError("no documents to index")
    vectors = embedder.embed([c.text for c in chunks])
    return VectorIndex(chunks, vectors, embedder.provider_id)
