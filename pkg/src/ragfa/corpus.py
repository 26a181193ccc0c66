"""Document ingestion and token-window chunking."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import DuplicateId, EmptyDocument, InputError, InvalidChunkConfig, MissingField, ParseError
from .textnorm import NormalizationConfig, normalize_text, tokenize

METADATA_KEYS = ("source_file", "datetime", "doc_type")
DOC_TYPES = ("plain", "table")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def is_table(self) -> bool:
        return self.metadata.get("doc_type") == "table"


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    seq: int
    text: str
    token_span: tuple[int, int]
    metadata: dict[str, str] = field(default_factory=dict)
    is_table: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "doc_id": self.doc_id,
            "seq": self.seq,
            "text": self.text,
            "token_span": list(self.token_span),
            "metadata": dict(self.metadata),
            "is_table": self.is_table,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Chunk:
        return cls(
            id=d["id"],
            doc_id=d["doc_id"],
            seq=int(d["seq"]),
            text=d["text"],
            token_span=(int(d["token_span"][0]), int(d["token_span"][1])),
            metadata=dict(d.get("metadata") or {}),
            is_table=bool(d.get("is_table", False)),
        )


def chunk_id(doc_id: str, seq: int) -> str:
    return f"{doc_id}#{seq}"


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size_tokens: int = 128
    overlap_tokens: int = 16

    def validate(self) -> None:
        if self.chunk_size_tokens <= 0:
            raise InvalidChunkConfig(f"chunk_size_tokens must be > 0, got {self.chunk_size_tokens}")
        if self.overlap_tokens < 0:
            raise InvalidChunkConfig(f"overlap_tokens must be >= 0, got {self.overlap_tokens}")
        if self.overlap_tokens >= self.chunk_size_tokens:
            raise InvalidChunkConfig(
                f"overlap_tokens ({self.overlap_tokens}) must be smaller than "
                f"chunk_size_tokens ({self.chunk_size_tokens})"
            )


def ingest(records: Iterable[Mapping[str, Any]], norm_cfg: NormalizationConfig | None = None) -> list[Document]:
    """Normalize raw ``{id, text, ...}`` records into documents.

    Metadata keys outside ``source_file``, ``datetime`` and ``doc_type`` are
    dropped. Raises DuplicateId on a repeated id and EmptyDocument when the
    normalized text is empty.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    for rec in records:
        doc_id = str(rec["id"])
        if doc_id in seen:
            raise DuplicateId(f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
        text = normalize_text(str(rec["text"]), norm_cfg)
        if not text.strip():
            raise EmptyDocument(f"document {doc_id!r} is empty after normalization")
        meta = {k: str(rec[k]) for k in METADATA_KEYS if rec.get(k) is not None}
        if meta.get("doc_type", "plain") not in DOC_TYPES:
            raise InputError(f"document {doc_id!r}: unknown doc_type {meta['doc_type']!r}")
        docs.append(Document(doc_id, text, meta))
    return docs


def read_corpus_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Read a JSON Lines corpus file; every object needs ``id`` and ``text``."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), lineno, exc.msg) from exc
            if not isinstance(obj, dict):
                raise ParseError(str(path), lineno, "expected a JSON object")
            for key in ("id", "text"):
                if key not in obj:
                    raise MissingField(str(path), lineno, key)
            records.append(obj)
    return records


def _window_spans(n_tokens: int, cfg: ChunkingConfig) -> list[tuple[int, int]]:
    size, stride = cfg.chunk_size_tokens, cfg.chunk_size_tokens - cfg.overlap_tokens
    spans: list[tuple[int, int]] = []
    start = 0
    while start < n_tokens:
        end = min(start + size, n_tokens)
        if spans and end <= spans[-1][1]:
            break
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return spans


def _chunk_plain(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    tokens = tokenize(doc.text)
    chunks = []
    for seq, (s, e) in enumerate(_window_spans(len(tokens), cfg)):
        text = doc.text[tokens[s].start : tokens[e - 1].end]
        chunks.append(Chunk(chunk_id(doc.id, seq), doc.id, seq, text, (s, e), dict(doc.metadata)))
    return chunks


def _chunk_table(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    # Rows are lines, the first line is the header. Rows are packed greedily
    # so that header + rows fit the window; a row that alone exceeds the
    # window still gets its own chunk. Overlap does not apply to tables.
    lines = doc.text.split("\n")
    counts = [len(tokenize(line)) for line in lines]
    header, header_len = lines[0], counts[0]

    groups: list[list[int]] = []
    current: list[int] = []
    used = header_len
    for i in range(1, len(lines)):
        if current and used + counts[i] > cfg.chunk_size_tokens:
            groups.append(current)
            current, used = [], header_len
        current.append(i)
        used += counts[i]
    if current or not groups:
        groups.append(current)

    first_token = [sum(counts[:i]) for i in range(len(counts) + 1)]
    chunks = []
    for seq, rows in enumerate(groups):
        if not rows:
            start, end = 0, header_len
        else:
            start = 0 if seq == 0 else first_token[rows[0]]
            end = first_token[rows[-1] + 1]
        text = "\n".join([header] + [lines[i] for i in rows])
        chunks.append(
            Chunk(chunk_id(doc.id, seq), doc.id, seq, text, (start, end), dict(doc.metadata), is_table=True)
        )
    return chunks


def chunk_document(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    """Slice a document into windows of ``chunk_size_tokens`` tokens.

    Windows advance by ``chunk_size_tokens - overlap_tokens``. Chunk text is
    cut from the normalized document between the first and last token of the
    window, so spacing inside the span is kept. Table documents are packed
    by whole rows with the header repeated in each chunk.
    """
    cfg.validate()
    if doc.is_table:
        return _chunk_table(doc, cfg)
    return _chunk_plain(doc, cfg)


def chunk_corpus(docs: Iterable[Document], cfg: ChunkingConfig) -> list[Chunk]:
    cfg.validate()
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, cfg))
    return chunks
