"""Text embedders: a remote HTTP client and a hashed TF-IDF reference."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx
import numpy as np

from .corpus import Chunk
from .errors import DimensionMismatch, EmptyCorpus, RemoteServiceError, ZeroVector
from .textnorm import terms

DEFAULT_DIM = 256


@dataclass(eq=False)
class EmbeddingVector:
    values: np.ndarray
    normalized: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @classmethod
    def from_raw(cls, values: Iterable[float] | np.ndarray, normalize: bool = True) -> EmbeddingVector:
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise DimensionMismatch("embedding must have at least one dimension")
        if not normalize:
            return cls(arr, False)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            return cls(arr, False)
        return cls(arr / norm, True)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.dim != v.dim:
        raise DimensionMismatch(f"cosine of dim {u.dim} and dim {v.dim}")
    nu, nv = float(np.linalg.norm(u.values)), float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine is undefined for the zero vector")
    c = float(np.dot(u.values, v.values)) / (nu * nv)
    return max(-1.0, min(1.0, c))


class Embedder(Protocol):
    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


@dataclass(frozen=True)
class IdfTable:
    doc_count: int
    df: dict[str, int] = field(default_factory=dict)

    def idf(self, token: str) -> float:
        return math.log((self.doc_count + 1) / (self.df.get(token, 0) + 1)) + 1.0

    def __contains__(self, token: str) -> bool:
        return token in self.df

    def to_dict(self) -> dict[str, Any]:
        return {"doc_count": self.doc_count, "df": dict(sorted(self.df.items()))}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> IdfTable:
        return cls(int(d["doc_count"]), {str(k): int(v) for k, v in d["df"].items()})


def fit_idf(chunks: Iterable[Chunk | str]) -> IdfTable:
    """Document frequencies over chunks (or raw texts), one count per chunk."""
    df: Counter[str] = Counter()
    n = 0
    for c in chunks:
        text = c if isinstance(c, str) else c.text
        df.update(set(terms(text)))
        n += 1
    if n == 0:
        raise EmptyCorpus("cannot fit IDF on zero chunks")
    return IdfTable(n, dict(df))


def token_bucket(token: str, dim: int, seed: int = 0) -> int:
    """BLAKE2b-64 of the UTF-8 token keyed by the 8-byte little-endian seed, mod dim."""
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little", signed=False)
    ).digest()
    return int.from_bytes(digest, "little") % dim


class ReferenceEmbedder:
    """Deterministic hashed TF-IDF embedder.

    Each token adds ``tf * idf`` to bucket ``token_bucket(token)``; the sum is
    L2-normalized. With an IdfTable, tokens outside its vocabulary are
    ignored, so a text sharing nothing with the fitted corpus embeds to the
    zero vector. Without one every token has weight ``tf``.
    """

    def __init__(self, dim: int = DEFAULT_DIM, idf: IdfTable | None = None, seed: int = 0) -> None:
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.idf = idf
        self.seed = seed
        self._buckets: dict[str, int] = {}

    @classmethod
    def fitted(cls, chunks: Iterable[Chunk | str], dim: int = DEFAULT_DIM, seed: int = 0) -> ReferenceEmbedder:
        return cls(dim, fit_idf(chunks), seed)

    def _bucket(self, token: str) -> int:
        b = self._buckets.get(token)
        if b is None:
            b = token_bucket(token, self.dim, self.seed)
            self._buckets[token] = b
        return b

    def embed_one(self, text: str) -> EmbeddingVector:
        values = np.zeros(self.dim, dtype=np.float64)
        for token, tf in Counter(terms(text)).items():
            if self.idf is None:
                weight = float(tf)
            elif token in self.idf:
                weight = tf * self.idf.idf(token)
            else:
                continue
            values[self._bucket(token)] += weight
        return EmbeddingVector.from_raw(values)

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed_one(t) for t in texts]

    def to_dict(self) -> dict[str, Any]:
        return {
            "backend": "reference",
            "dim": self.dim,
            "seed": self.seed,
            "idf": self.idf.to_dict() if self.idf is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ReferenceEmbedder:
        idf = IdfTable.from_dict(d["idf"]) if d.get("idf") is not None else None
        return cls(int(d["dim"]), idf, int(d.get("seed", 0)))


class RemoteEmbedder:
    """Client for ``POST /embed`` returning raw vectors.

    Texts are sent in batches of ``batch_size`` with at most ``max_workers``
    requests in flight. Vectors are L2-normalized on arrival.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        timeout: float = 30.0,
        batch_size: int = 32,
        max_workers: int = 4,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.batch_size = batch_size
        self.max_workers = max_workers
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, batch: list[str]) -> tuple[int, list[list[float]]]:
        try:
            resp = self._client.post(f"{self.endpoint}/embed", json={"texts": batch})
        except httpx.HTTPError as exc:
            raise RemoteServiceError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteServiceError(f"embedding service returned HTTP {resp.status_code}")
        try:
            body = resp.json()
            dim, vectors = body["dim"], body["vectors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteServiceError(f"malformed embedding response: {exc!r}") from exc
        if not isinstance(dim, int) or dim <= 0 or not isinstance(vectors, list):
            raise RemoteServiceError("malformed embedding response: bad 'dim' or 'vectors'")
        if len(vectors) != len(batch):
            raise RemoteServiceError(f"sent {len(batch)} texts, received {len(vectors)} vectors")
        for v in vectors:
            if not isinstance(v, list):
                raise RemoteServiceError("malformed embedding response: vector is not a list")
            if len(v) != dim:
                raise DimensionMismatch(f"service declared dim {dim} but sent a vector of length {len(v)}")
        return dim, vectors

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        texts = list(texts)
        if not texts:
            return []
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=max(1, self.max_workers)) as pool:
            replies = list(pool.map(self._post, batches))
        dims = {dim for dim, _ in replies}
        if len(dims) > 1:
            raise DimensionMismatch(f"service returned inconsistent dims {sorted(dims)}")
        try:
            return [EmbeddingVector.from_raw(v) for _, vecs in replies for v in vecs]
        except (TypeError, ValueError) as exc:
            raise RemoteServiceError(f"non-numeric vector component: {exc}") from exc
