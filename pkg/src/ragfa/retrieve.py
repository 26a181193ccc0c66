"""Hybrid lexical + dense retrieval with result joining and reranking."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import httpx

from .embed import Embedder
from .errors import ConfigError, EmptyCandidates, EmptyIndex, RemoteServiceError, ZeroVector
from .index import Bm25Index, ScoredChunk, Source, VectorIndex, ranked
from .textnorm import terms, token_f1

log = logging.getLogger(__name__)


class Fusion(str, Enum):
    CONCAT_MAXNORM = "concat_maxnorm"
    RRF = "rrf"


class RerankBackend(str, Enum):
    IDENTITY = "identity"
    LEXICAL_OVERLAP = "lexical_overlap"
    REMOTE = "remote"


@dataclass(frozen=True)
class HybridConfig:
    bm25_top_k: int = 4
    dense_top_k: int = 8
    join_cap: int = 12
    fusion: Fusion = Fusion.CONCAT_MAXNORM
    rrf_k: int = 60

    def __post_init__(self) -> None:
        object.__setattr__(self, "fusion", Fusion(self.fusion))
        for name in ("bm25_top_k", "dense_top_k", "join_cap", "rrf_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class RerankerConfig:
    backend: RerankBackend = RerankBackend.IDENTITY
    top_n: int = 12
    endpoint: str | None = None
    timeout: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "backend", RerankBackend(self.backend))
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")


def _minmax(results: Sequence[ScoredChunk]) -> dict[str, float]:
    if not results:
        return {}
    scores = [r.score for r in results]
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return {r.chunk_id: 1.0 for r in results}
    out: dict[str, float] = {}
    for r in results:
        out[r.chunk_id] = max(out.get(r.chunk_id, 0.0), (r.score - lo) / (hi - lo))
    return out


def join(a: Sequence[ScoredChunk], b: Sequence[ScoredChunk], cfg: HybridConfig) -> list[ScoredChunk]:
    """Merge two ranked lists into one deduplicated list of at most ``join_cap``.

    ``concat_maxnorm`` min-max scales each list to [0, 1] and keeps the larger
    value for ids present in both. ``rrf`` sums ``1 / (rrf_k + rank)`` over
    the lists an id appears in.
    """
    fused: dict[str, float] = {}
    if cfg.fusion is Fusion.RRF:
        for results in (a, b):
            seen: set[str] = set()
            for r in results:
                if r.chunk_id in seen:
                    continue
                seen.add(r.chunk_id)
                fused[r.chunk_id] = fused.get(r.chunk_id, 0.0) + 1.0 / (cfg.rrf_k + r.rank)
    else:
        for results in (a, b):
            for cid, s in _minmax(results).items():
                if s > fused.get(cid, -1.0):
                    fused[cid] = s
    return ranked(fused.items(), Source.JOINED, cfg.join_cap)


class RemoteReranker:
    """Client for ``POST /rerank``."""

    def __init__(self, endpoint: str, timeout: float = 30.0, transport: httpx.BaseTransport | None = None) -> None:
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def scores(self, query: str, documents: list[str]) -> list[float]:
        payload = {"query": query, "documents": documents, "top_n": len(documents)}
        try:
            resp = self._client.post(f"{self.endpoint}/rerank", json=payload)
        except httpx.HTTPError as exc:
            raise RemoteServiceError(f"rerank request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteServiceError(f"rerank service returned HTTP {resp.status_code}")
        try:
            results = resp.json()["results"]
            pairs = [(int(r["index"]), float(r["relevance_score"])) for r in results]
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteServiceError(f"malformed rerank response: {exc!r}") from exc
        out: list[float | None] = [None] * len(documents)
        for idx, score in pairs:
            if not 0 <= idx < len(documents) or out[idx] is not None:
                raise RemoteServiceError(f"rerank response has invalid or repeated index {idx}")
            out[idx] = score
        if any(s is None for s in out):
            raise RemoteServiceError("rerank response does not score every document")
        return [s for s in out if s is not None]

    def close(self) -> None:
        self._client.close()


def rerank(
    query: str,
    candidates: Sequence[ScoredChunk],
    cfg: RerankerConfig,
    texts: Mapping[str, str],
    remote: RemoteReranker | None = None,
) -> list[ScoredChunk]:
    """Reorder the first ``cfg.top_n`` candidates.

    ``texts`` maps chunk ids to chunk text. The identity backend returns the
    truncated input untouched. Other backends sort stably by their score, so
    equal scores keep the incoming order.
    """
    if not candidates:
        raise EmptyCandidates("rerank needs at least one candidate")
    pool = list(candidates[: cfg.top_n])
    if cfg.backend is RerankBackend.IDENTITY:
        return pool
    if cfg.backend is RerankBackend.LEXICAL_OVERLAP:
        q = terms(query)
        scores = [token_f1(terms(texts[c.chunk_id]), q) for c in pool]
    else:
        if remote is None:
            raise RemoteServiceError("remote reranker selected but no client configured")
        scores = remote.scores(query, [texts[c.chunk_id] for c in pool])
    order = sorted(range(len(pool)), key=lambda i: -scores[i])
    return [
        ScoredChunk(pool[i].chunk_id, scores[i], Source.RERANKED, rank)
        for rank, i in enumerate(order, start=1)
    ]


class HybridRetriever:
    """BM25 and dense search over the same chunk set, joined and optionally reranked."""

    def __init__(
        self,
        bm25: Bm25Index,
        vectors: VectorIndex,
        embedder: Embedder,
        texts: Mapping[str, str],
        cfg: HybridConfig | None = None,
        reranker: RerankerConfig | None = None,
        remote_reranker: RemoteReranker | None = None,
    ) -> None:
        self.bm25 = bm25
        self.vectors = vectors
        self.embedder = embedder
        self.texts = texts
        self.cfg = cfg or HybridConfig()
        self.reranker = reranker
        if remote_reranker is None and reranker is not None and reranker.backend is RerankBackend.REMOTE:
            if not reranker.endpoint:
                raise ConfigError("reranker.endpoint is required for the remote backend")
            remote_reranker = RemoteReranker(reranker.endpoint, reranker.timeout)
        self._remote = remote_reranker

    def lexical(self, query: str) -> list[ScoredChunk]:
        return self.bm25.search(query, self.cfg.bm25_top_k)

    def dense(self, query: str) -> list[ScoredChunk]:
        qv = self.embedder.embed_texts([query])[0]
        try:
            return self.vectors.search(qv, self.cfg.dense_top_k)
        except (ZeroVector, EmptyIndex):
            log.debug("no dense candidates for %r", query)
            return []

    def retrieve(self, query: str) -> list[ScoredChunk]:
        joined = join(self.lexical(query), self.dense(query), self.cfg)
        if self.reranker is None or not joined:
            return joined
        return rerank(query, joined, self.reranker, self.texts, self._remote)
