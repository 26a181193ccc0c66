"""Answer generation: a remote LLM client and an extractive reference answerer."""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import httpx

from .corpus import Chunk
from .errors import ConfigError, NoRetrievedContent, RemoteServiceError
from .textnorm import terms, token_f1

_SENTENCE_BREAK = re.compile(r"[.؟?!؛\n]")


class GeneratorBackend(str, Enum):
    REMOTE = "remote"
    EXTRACTIVE_REFERENCE = "extractive_reference"


@dataclass(frozen=True)
class GeneratorConfig:
    backend: GeneratorBackend = GeneratorBackend.EXTRACTIVE_REFERENCE
    endpoint: str | None = None
    timeout: float = 60.0
    max_answer_chars: int = 2000

    def __post_init__(self) -> None:
        object.__setattr__(self, "backend", GeneratorBackend(self.backend))
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.max_answer_chars < 1:
            raise ValueError(f"max_answer_chars must be >= 1, got {self.max_answer_chars}")


def split_sentences(text: str) -> list[str]:
    """Split on . ؟ ? ! ؛ and newlines; pieces are stripped, empty ones dropped."""
    return [s.strip() for s in _SENTENCE_BREAK.split(text) if s.strip()]


def extract_answer(query: str, retrieved: Sequence[Chunk]) -> str:
    """Return the retrieved sentence with the best token F1 against ``query``.

    Chunks are visited in retrieval order, so ties go to the earliest
    sentence of the highest-ranked chunk.
    """
    if not retrieved:
        raise NoRetrievedContent("extractive answerer got no chunks")
    q = terms(query)
    best, best_score = None, -1.0
    for chunk in retrieved:
        for sentence in split_sentences(chunk.text):
            score = token_f1(terms(sentence), q)
            if score > best_score:
                best, best_score = sentence, score
    if best is None:
        raise NoRetrievedContent("retrieved chunks contain no sentences")
    return best


class RemoteGenerator:
    """Client for ``POST /generate``."""

    def __init__(self, cfg: GeneratorConfig, transport: httpx.BaseTransport | None = None) -> None:
        if not cfg.endpoint:
            raise ConfigError("generator.endpoint is required for the remote backend")
        self.cfg = cfg
        self._client = httpx.Client(timeout=cfg.timeout, transport=transport)

    def complete(self, prompt: str) -> str:
        url = f"{self.cfg.endpoint.rstrip('/')}/generate"
        try:
            resp = self._client.post(url, json={"prompt": prompt})
        except httpx.HTTPError as exc:
            raise RemoteServiceError(f"generate request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteServiceError(f"generator returned HTTP {resp.status_code}")
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteServiceError(f"malformed generate response: {exc!r}") from exc
        if not isinstance(text, str):
            raise RemoteServiceError("malformed generate response: 'text' is not a string")
        return text.strip()[: self.cfg.max_answer_chars]

    def close(self) -> None:
        self._client.close()


class Generator:
    """Dispatches to the configured backend."""

    def __init__(self, cfg: GeneratorConfig | None = None, transport: httpx.BaseTransport | None = None) -> None:
        self.cfg = cfg or GeneratorConfig()
        self._remote = RemoteGenerator(self.cfg, transport) if self.cfg.backend is GeneratorBackend.REMOTE else None

    def generate(self, prompt: str, retrieved: Sequence[Chunk], query: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if self._remote is not None:
            return self._remote.complete(prompt)
        return extract_answer(query, retrieved)


def generate(
    prompt: str,
    retrieved: Sequence[Chunk],
    query: str,
    cfg: GeneratorConfig | None = None,
    transport: httpx.BaseTransport | None = None,
) -> str:
    return Generator(cfg, transport).generate(prompt, retrieved, query)
