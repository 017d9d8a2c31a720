"""Reference-document chunking, embedding index, and retrieval augmentation.

The retriever is an exact exhaustive cosine scan: the reference corpus is
desk-scale (a book chapter), so approximate nearest-neighbor structures buy
nothing and exactness keeps retrieval oracle-testable. Chunk boundaries keep
their separators, so stripping overlaps and concatenating chunks reproduces
the source text byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import BackendError, ConfigError, ParseError
from .gateway import CompletionRequest, Message

logger = logging.getLogger(__name__)

VECTOR_INDEX_SCHEMA = "vector_index/v1"

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_CHUNK_OVERLAP = 100
DEFAULT_TOP_K = 4
DEFAULT_SEPARATORS = ("\n\n", "\n", ". ", " ", "")


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    source_doc: str
    text: str
    char_range: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"chunk {self.chunk_id}: empty text")
        start, end = self.char_range
        if end - start != len(self.text):
            raise ValueError(f"chunk {self.chunk_id}: char_range does not match text length")


class Embedder(Protocol):
    embed_model_id: str

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


# ---------------------------------------------------------------------------
# Recursive character chunking
# ---------------------------------------------------------------------------


def _split_after(text: str, separator: str) -> list[str]:
    """Split keeping the separator attached to the left piece."""
    pieces = text.split(separator)
    out = [piece + separator for piece in pieces[:-1]]
    if pieces[-1]:
        out.append(pieces[-1])
    return out


def _atomic_parts(text: str, chunk_size: int, separators: Sequence[str]) -> list[str]:
    """Recursively split until every part fits in chunk_size."""
    if len(text) <= chunk_size:
        return [text]
    for level, separator in enumerate(separators):
        if separator == "":
            return [text[i : i + chunk_size] for i in range(0, len(text), chunk_size)]
        if separator in text:
            parts: list[str] = []
            for piece in _split_after(text, separator):
                if len(piece) <= chunk_size:
                    parts.append(piece)
                else:
                    parts.extend(_atomic_parts(piece, chunk_size, separators[level + 1 :]))
            if len(parts) > 1:
                return parts
    # No separator present at all and no hard-split level configured.
    return [text]


def chunk_document(
    text: str,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
    separators: Sequence[str] = DEFAULT_SEPARATORS,
    source_doc: str = "doc",
) -> list[Chunk]:
    """Recursive character splitting with bounded overlap between neighbors.

    Separators are tried in order (paragraph break, newline, sentence end,
    space, raw character) until every piece fits. Pieces are then greedily
    packed up to chunk_size, and each chunk after the first extends backward
    by up to ``overlap`` characters without exceeding chunk_size.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    if not 0 <= overlap < chunk_size:
        raise ValueError(f"need 0 <= overlap < chunk_size, got overlap={overlap}")
    if not text:
        return []

    parts = _atomic_parts(text, chunk_size, tuple(separators))
    boundaries: list[tuple[int, int]] = []
    cursor = 0
    run_start = 0
    run_len = 0
    for part in parts:
        if run_len and run_len + len(part) > chunk_size:
            boundaries.append((run_start, cursor))
            run_start = cursor
            run_len = 0
        run_len += len(part)
        cursor += len(part)
    boundaries.append((run_start, cursor))

    chunks = []
    for i, (start, end) in enumerate(boundaries):
        extended = start
        if i > 0 and overlap:
            room = chunk_size - (end - start)
            extended = max(0, start - min(overlap, room))
        chunk_text = text[extended:end]
        chunks.append(
            Chunk(
                chunk_id=f"{source_doc}:{i:04d}",
                source_doc=source_doc,
                text=chunk_text,
                char_range=(extended, end),
            )
        )
    return chunks


def reassemble(chunks: Sequence[Chunk]) -> str:
    """Strip overlaps and concatenate; inverse of chunk_document over one doc."""
    out = []
    previous_end = 0
    for chunk in chunks:
        start, end = chunk.char_range
        skip = max(0, previous_end - start)
        out.append(chunk.text[skip:])
        previous_end = end
    return "".join(out)


# ---------------------------------------------------------------------------
# Vector index
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VectorIndex:
    chunks: tuple[Chunk, ...]
    vectors: np.ndarray  # (n_chunks, dimension); treated as immutable
    embedder_id: str
    config_fingerprint: str

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.chunks):
            raise ValueError("vectors must be one row per chunk")
        ids = [c.chunk_id for c in self.chunks]
        if len(set(ids)) != len(ids):
            raise ValueError("chunk_ids must be unique")

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.chunks)


def chunking_fingerprint(
    chunk_size: int, overlap: int, separators: Sequence[str], embedder_id: str
) -> str:
    payload = json.dumps(
        {
            "chunk_size": chunk_size,
            "overlap": overlap,
            "separators": list(separators),
            "embedder_id": embedder_id,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_index(
    chunks: Sequence[Chunk], embedder: Embedder, config_fingerprint: str = ""
) -> VectorIndex:
    if not chunks:
        raise ValueError("cannot build an index from zero chunks")
    try:
        vectors = embedder.embed([c.text for c in chunks])
    except BackendError as exc:
        ids = ", ".join(c.chunk_id for c in chunks[:5])
        raise BackendError(f"embedding failed while indexing chunks [{ids} ...]: {exc}") from exc
    return VectorIndex(
        chunks=tuple(chunks),
        vectors=np.asarray(vectors, dtype=np.float64),
        embedder_id=embedder.embed_model_id,
        config_fingerprint=config_fingerprint,
    )


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    matches: tuple[ScoredChunk, ...]
    short: bool  # True when fewer than k entries existed


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def retrieve(index: VectorIndex, query: str, k: int, embedder: Embedder) -> RetrievalResult:
    """Exact top-k by cosine similarity, descending, ties broken by chunk_id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not len(index):
        raise ValueError("cannot retrieve from an empty index")
    query_vec = np.asarray(embedder.embed([query])[0], dtype=np.float64)
    norm = np.linalg.norm(query_vec)
    if norm == 0:
        raise BackendError("embedder returned a zero vector for the query")
    scores = _normalize_rows(index.vectors) @ (query_vec / norm)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.chunks[i].chunk_id))
    short = k > len(index)
    top = order[: min(k, len(index))]
    return RetrievalResult(
        matches=tuple(ScoredChunk(chunk=index.chunks[i], score=float(scores[i])) for i in top),
        short=short,
    )


# ---------------------------------------------------------------------------
# Prompt augmentation
# ---------------------------------------------------------------------------

REFERENCE_HEADER = "=== Reference excerpts ==="
REFERENCE_FOOTER = "=== End of reference excerpts ==="


def augment_prompt(
    request: CompletionRequest, retrieved: Sequence[Chunk], budget: int = 4000
) -> CompletionRequest:
    """Append retrieved chunks as a delimited reference block on the system turn.

    Truncation happens on chunk boundaries only, so an excerpt is either
    present verbatim with its citation id or absent; the budget covers the
    serialized chunk entries.
    """
    entries = []
    used = 0
    kept = 0
    for chunk in retrieved:
        entry = f"[{chunk.chunk_id}]\n{chunk.text}"
        if used + len(entry) > budget and kept > 0:
            break
        if len(entry) > budget and kept == 0:
            break
        entries.append(entry)
        used += len(entry)
        kept += 1
    if kept < len(retrieved):
        logger.info("reference block truncated: kept %d of %d chunks", kept, len(retrieved))
    block = "\n\n".join([REFERENCE_HEADER, *entries, REFERENCE_FOOTER])

    messages = list(request.messages)
    for i, message in enumerate(messages):
        if message.role == "system":
            messages[i] = Message("system", f"{message.content}\n\n{block}")
            break
    else:
        messages.insert(0, Message("system", block))
    return replace(request, messages=tuple(messages))


# ---------------------------------------------------------------------------
# Index persistence
# ---------------------------------------------------------------------------


def save_index(index: VectorIndex, path: str | Path) -> None:
    doc: dict[str, Any] = {
        "schema": VECTOR_INDEX_SCHEMA,
        "embedder_id": index.embedder_id,
        "config_fingerprint": index.config_fingerprint,
        "dimension": index.dimension,
        "entries": [
            {
                "chunk_id": c.chunk_id,
                "source_doc": c.source_doc,
                "char_range": list(c.char_range),
                "text": c.text,
                "vector": [float(v) for v in index.vectors[i]],
            }
            for i, c in enumerate(index.chunks)
        ],
    }
    Path(path).write_text(
        json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_index(path: str | Path, expected_config_fingerprint: str | None = None) -> VectorIndex:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: index file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid index JSON: {exc.msg}") from exc
    if doc.get("schema") != VECTOR_INDEX_SCHEMA:
        raise ParseError(f"{path}: schema mismatch, expected {VECTOR_INDEX_SCHEMA!r}")
    if (
        expected_config_fingerprint is not None
        and doc["config_fingerprint"] != expected_config_fingerprint
    ):
        raise ConfigError(
            f"{path}: index was built with a different chunking/embedding config; re-index"
        )
    chunks = tuple(
        Chunk(
            chunk_id=e["chunk_id"],
            source_doc=e["source_doc"],
            text=e["text"],
            char_range=tuple(e["char_range"]),
        )
        for e in doc["entries"]
    )
    vectors = np.asarray([e["vector"] for e in doc["entries"]], dtype=np.float64)
    return VectorIndex(
        chunks=chunks,
        vectors=vectors,
        embedder_id=doc["embedder_id"],
        config_fingerprint=doc["config_fingerprint"],
    )
