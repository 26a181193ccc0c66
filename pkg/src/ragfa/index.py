"""In-process retrieval indices: Okapi BM25 and exact cosine search.

Both indices persist to a JSON document whose ``magic`` field is
``PRAG1``; loading rejects anything else.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import Chunk
from .embed import EmbeddingVector
from .errors import DimensionMismatch, DuplicateId, EmptyCorpus, EmptyIndex, FormatError, ZeroVector
from .textnorm import terms

MAGIC = "PRAG1"


class Source(str, Enum):
    BM25 = "bm25"
    DENSE = "dense"
    JOINED = "joined"
    RERANKED = "reranked"


@dataclass(frozen=True)
class ScoredChunk:
    chunk_id: str
    score: float
    source: Source
    rank: int


def ranked(pairs: Iterable[tuple[str, float]], source: Source, top_k: int | None = None) -> list[ScoredChunk]:
    """Sort ``(chunk_id, score)`` by score desc then id asc and assign ranks."""
    ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))
    if top_k is not None:
        ordered = ordered[:top_k]
    return [ScoredChunk(cid, float(s), source, i) for i, (cid, s) in enumerate(ordered, start=1)]


def _check_header(doc: Any, kind: str, path: Path) -> None:
    if not isinstance(doc, dict) or doc.get("magic") != MAGIC:
        raise FormatError(f"{path}: not a {MAGIC} index file")
    if doc.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind!r} index, found {doc.get('kind')!r}")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


class Bm25Index:
    """Okapi BM25 over an inverted index of chunk terms.

    IDF is ``ln((N - df + 0.5) / (df + 0.5) + 1)`` which stays positive even
    when a term occurs in most chunks. Query terms are a bag: a term repeated
    in the query contributes once per occurrence.
    """

    def __init__(
        self,
        postings: dict[str, list[tuple[str, int]]],
        doc_lengths: dict[str, int],
        params: Bm25Params,
    ) -> None:
        if not doc_lengths:
            raise EmptyCorpus("BM25 index needs at least one chunk")
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.params = params
        self.n_docs = len(doc_lengths)
        self.avg_doc_length = sum(doc_lengths.values()) / self.n_docs

    @classmethod
    def build(cls, chunks: Iterable[Chunk], params: Bm25Params | None = None) -> Bm25Index:
        postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
        lengths: dict[str, int] = {}
        for chunk in chunks:
            if chunk.id in lengths:
                raise DuplicateId(f"chunk {chunk.id!r} indexed twice")
            toks = terms(chunk.text)
            lengths[chunk.id] = len(toks)
            for tok, tf in Counter(toks).items():
                postings[tok].append((chunk.id, tf))
        return cls(dict(postings), lengths, params or Bm25Params())

    def idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def search(self, query: str, top_k: int = 4) -> list[ScoredChunk]:
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        k1, b = self.params.k1, self.params.b
        avgdl = self.avg_doc_length
        parts: dict[str, list[float]] = defaultdict(list)
        for tok in terms(query):
            plist = self.postings.get(tok)
            if not plist:
                continue
            idf = self.idf(tok)
            for cid, tf in plist:
                norm = k1 * (1.0 - b + b * self.doc_lengths[cid] / avgdl)
                parts[cid].append(idf * tf * (k1 + 1.0) / (tf + norm))
        # fsum is exact and order-free, so equal contributions give equal
        # scores and the id tie-break applies
        scores = ((cid, math.fsum(p)) for cid, p in parts.items())
        return ranked(((c, s) for c, s in scores if s > 0), Source.BM25, top_k)

    def to_dict(self) -> dict[str, Any]:
        return {
            "magic": MAGIC,
            "kind": "bm25",
            "params": {"k1": self.params.k1, "b": self.params.b},
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[c, tf] for c, tf in p] for t, p in self.postings.items()},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Bm25Index:
        path = Path(path)
        doc = _read_json(path)
        _check_header(doc, "bm25", path)
        postings = {t: [(c, int(tf)) for c, tf in p] for t, p in doc["postings"].items()}
        lengths = {c: int(n) for c, n in doc["doc_lengths"].items()}
        return cls(postings, lengths, Bm25Params(**doc["params"]))


class VectorIndex:
    """Exact top-k cosine search over unit-normalized vectors."""

    def __init__(self, dim: int) -> None:
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self._ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self._id_set: set[str] = set()
        self._matrix: np.ndarray | None = None
        self._id_array: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def add(self, chunk_id: str, v: EmbeddingVector) -> None:
        if v.dim != self.dim:
            raise DimensionMismatch(f"index has dim {self.dim}, vector has dim {v.dim}")
        if chunk_id in self._id_set:
            raise DuplicateId(f"chunk {chunk_id!r} already in the vector index")
        if v.is_zero:
            raise ZeroVector(f"refusing to index a zero vector for {chunk_id!r}")
        row = v.values if v.normalized else EmbeddingVector.from_raw(v.values).values
        self._append(chunk_id, row)

    def _append(self, chunk_id: str, row: np.ndarray) -> None:
        self._ids.append(chunk_id)
        self._id_set.add(chunk_id)
        self._rows.append(np.asarray(row, dtype=np.float64))
        self._matrix = None

    def add_many(self, ids: Iterable[str], vectors: Iterable[EmbeddingVector]) -> None:
        for cid, v in zip(ids, vectors, strict=True):
            self.add(cid, v)

    def _frozen(self) -> tuple[np.ndarray, np.ndarray]:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows)
            self._id_array = np.array(self._ids)
        assert self._id_array is not None
        return self._matrix, self._id_array

    def search(self, qv: EmbeddingVector, top_k: int = 8) -> list[ScoredChunk]:
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        if not self._ids:
            raise EmptyIndex("vector index is empty")
        if qv.dim != self.dim:
            raise DimensionMismatch(f"index has dim {self.dim}, query has dim {qv.dim}")
        norm = float(np.linalg.norm(qv.values))
        if norm == 0.0:
            raise ZeroVector("query embedding is the zero vector")
        matrix, id_array = self._frozen()
        # row-wise sum rather than BLAS gemv: identical rows must score
        # bit-identically for the id tie-break to be meaningful
        scores = (matrix * (qv.values / norm)).sum(axis=1)
        order = np.lexsort((id_array, -scores))[:top_k]
        return [
            ScoredChunk(self._ids[i], float(scores[i]), Source.DENSE, rank)
            for rank, i in enumerate(order.tolist(), start=1)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "magic": MAGIC,
            "kind": "vector",
            "dim": self.dim,
            "ids": list(self._ids),
            "vectors": [row.tolist() for row in self._rows],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> VectorIndex:
        path = Path(path)
        doc = _read_json(path)
        _check_header(doc, "vector", path)
        index = cls(int(doc["dim"]))
        for cid, row in zip(doc["ids"], doc["vectors"], strict=True):
            if len(row) != index.dim:
                raise FormatError(f"{path}: vector for {cid!r} has length {len(row)}, expected {index.dim}")
            if cid in index._id_set:
                raise FormatError(f"{path}: duplicate id {cid!r}")
            # stored rows are already unit length; re-normalizing would perturb the bits
            index._append(cid, np.asarray(row, dtype=np.float64))
        return index


def bm25_search(index: Bm25Index, query: str, top_k: int = 4) -> list[ScoredChunk]:
    return index.search(query, top_k)


def vector_search(index: VectorIndex, qv: EmbeddingVector, top_k: int = 8) -> list[ScoredChunk]:
    return index.search(qv, top_k)
