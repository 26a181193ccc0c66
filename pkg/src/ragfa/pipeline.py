"""Pipeline settings and the assembled retrieve -> prompt -> generate chain."""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .corpus import Chunk, ChunkingConfig
from .embed import DEFAULT_DIM, Embedder, ReferenceEmbedder, RemoteEmbedder
from .errors import ConfigError, FormatError
from .generate import Generator, GeneratorConfig
from .index import MAGIC, Bm25Index, Bm25Params, ScoredChunk, VectorIndex
from .prompt import Language, PromptParts, build_prompt
from .retrieve import HybridConfig, HybridRetriever, RemoteReranker, RerankerConfig
from .textnorm import NormalizationConfig, normalize_text

CHUNKS_FILE = "chunks.jsonl"
BM25_FILE = "bm25.json"
VECTORS_FILE = "vectors.json"
EMBEDDER_FILE = "embedder.json"


class EmbedderBackend(str, Enum):
    REFERENCE = "reference"
    REMOTE = "remote"


@dataclass(frozen=True)
class EmbedderConfig:
    backend: EmbedderBackend = EmbedderBackend.REFERENCE
    dim: int = DEFAULT_DIM
    seed: int = 0
    endpoint: str | None = None
    timeout: float = 30.0
    batch_size: int = 32
    max_workers: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "backend", EmbedderBackend(self.backend))
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class PromptConfig:
    language: Language = Language.FA
    instructions: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language(self.language))


@dataclass(frozen=True)
class DataConfig:
    corpus: str | None = None
    dataset: str | None = None


@dataclass(frozen=True)
class PipelineSettings:
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    reranker: RerankerConfig = field(default_factory=RerankerConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> PipelineSettings:
        """Build settings from nested ``{section: {key: value}}``; unknown keys are errors."""
        sections = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for name, values in raw.items():
            if name not in sections:
                raise ConfigError(f"unknown config section {name!r}")
            if not isinstance(values, Mapping):
                raise ConfigError(f"config section {name!r} must be an object")
            section_cls = type(getattr(cls(), name))
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            for key in values:
                if key not in allowed:
                    raise ConfigError(f"unknown config key {name}.{key}")
            try:
                kwargs[name] = section_cls(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value in section {name!r}: {exc}") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        def plain(v: Any) -> Any:
            return v.value if isinstance(v, Enum) else v

        return {
            f.name: {k: plain(v) for k, v in dataclasses.asdict(getattr(self, f.name)).items()}
            for f in dataclasses.fields(self)
        }

    def override(self, section: str, **values: Any) -> PipelineSettings:
        merged = self.to_dict()
        merged[section].update(values)
        return PipelineSettings.from_dict(merged)


def load_settings(path: str | Path | None) -> PipelineSettings:
    if path is None:
        return PipelineSettings()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return PipelineSettings.from_dict(raw)


def save_chunks(path: str | Path, chunks: Iterable[Chunk]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"magic": MAGIC, "kind": "chunks"}) + "\n")
        for c in chunks:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")


def load_chunks(path: str | Path) -> list[Chunk]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    try:
        header = json.loads(lines[0]) if lines else None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC or header.get("kind") != "chunks":
        raise FormatError(f"{path}: not a {MAGIC} chunk store")
    return [Chunk.from_dict(json.loads(line)) for line in lines[1:]]


def make_embedder(cfg: EmbedderConfig, chunks: Iterable[Chunk]) -> Embedder:
    if cfg.backend is EmbedderBackend.REMOTE:
        if not cfg.endpoint:
            raise ConfigError("embedder.endpoint is required for the remote backend")
        return RemoteEmbedder(
            cfg.endpoint, timeout=cfg.timeout, batch_size=cfg.batch_size, max_workers=cfg.max_workers
        )
    return ReferenceEmbedder.fitted(chunks, dim=cfg.dim, seed=cfg.seed)


@dataclass
class Answer:
    text: str
    retrieved: list[ScoredChunk]
    chunks: list[Chunk]
    prompt: str


class RagPipeline:
    """Frozen indices plus the stages that turn a question into an answer."""

    def __init__(
        self,
        chunks: list[Chunk],
        bm25: Bm25Index,
        vectors: VectorIndex,
        embedder: Embedder,
        settings: PipelineSettings,
        generator: Generator | None = None,
        remote_reranker: RemoteReranker | None = None,
    ) -> None:
        self.chunks = {c.id: c for c in chunks}
        self.bm25 = bm25
        self.vectors = vectors
        self.embedder = embedder
        self.settings = settings
        self.retriever = HybridRetriever(
            bm25,
            vectors,
            embedder,
            {c.id: c.text for c in chunks},
            settings.hybrid,
            settings.reranker,
            remote_reranker,
        )
        self.generator = generator or Generator(settings.generator)

    @classmethod
    def build(
        cls,
        chunks: list[Chunk],
        settings: PipelineSettings | None = None,
        embedder: Embedder | None = None,
        **clients: Any,
    ) -> RagPipeline:
        settings = settings or PipelineSettings()
        bm25 = Bm25Index.build(chunks, settings.bm25)
        embedder = embedder or make_embedder(settings.embedder, chunks)
        vecs = embedder.embed_texts([c.text for c in chunks])
        vectors = VectorIndex(vecs[0].dim if vecs else settings.embedder.dim)
        for c, v in zip(chunks, vecs):
            # chunks sharing nothing with the fitted vocabulary stay BM25-only
            if not v.is_zero:
                vectors.add(c.id, v)
        return cls(chunks, bm25, vectors, embedder, settings, **clients)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.bm25.save(out / BM25_FILE)
        self.vectors.save(out / VECTORS_FILE)
        if isinstance(self.embedder, ReferenceEmbedder):
            meta: dict[str, Any] = self.embedder.to_dict()
        else:
            meta = {"backend": "remote", "dim": self.vectors.dim}
        meta["magic"] = MAGIC
        meta["kind"] = "embedder"
        (out / EMBEDDER_FILE).write_text(json.dumps(meta, ensure_ascii=False, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, out_dir: str | Path, settings: PipelineSettings | None = None) -> RagPipeline:
        out = Path(out_dir)
        settings = settings or PipelineSettings()
        for name in (CHUNKS_FILE, BM25_FILE, VECTORS_FILE, EMBEDDER_FILE):
            if not (out / name).exists():
                raise FormatError(f"{out / name} not found; run ingest and index first")
        chunks = load_chunks(out / CHUNKS_FILE)
        meta = json.loads((out / EMBEDDER_FILE).read_text(encoding="utf-8"))
        if meta.get("magic") != MAGIC or meta.get("kind") != "embedder":
            raise FormatError(f"{out / EMBEDDER_FILE}: not a {MAGIC} embedder file")
        embedder: Embedder
        if meta["backend"] == "reference":
            embedder = ReferenceEmbedder.from_dict(meta)
        else:
            embedder = make_embedder(settings.embedder, chunks)
        return cls(chunks, Bm25Index.load(out / BM25_FILE), VectorIndex.load(out / VECTORS_FILE), embedder, settings)

    def retrieve(self, question: str) -> list[ScoredChunk]:
        return self.retriever.retrieve(normalize_text(question, self.settings.normalization))

    def answer(self, question: str) -> Answer:
        query = normalize_text(question, self.settings.normalization)
        retrieved = self.retriever.retrieve(query)
        chunks = [self.chunks[r.chunk_id] for r in retrieved]
        parts = PromptParts(
            user_query=query,
            chunks=chunks,
            instructions=self.settings.prompt.instructions,
            language=self.settings.prompt.language,
        )
        prompt = build_prompt(parts)
        text = self.generator.generate(prompt, chunks, query)
        return Answer(text, retrieved, chunks, prompt)
