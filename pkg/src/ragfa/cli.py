"""Command-line entry point: ingest, index, query, eval-embed, eval-rag, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from .corpus import chunk_corpus, ingest, read_corpus_jsonl
from .embed import Embedder, ReferenceEmbedder
from .errors import ConfigError, InputError, RagError, RemoteServiceError
from .evaluate import (
    build_dataset_pipeline,
    eval_embedding_ranking,
    eval_end_to_end,
    load_dataset,
    unique_paragraphs,
)
from .pipeline import CHUNKS_FILE, EmbedderBackend, PipelineSettings, RagPipeline, load_chunks, load_settings, make_embedder, save_chunks
from .tune import Objective, SearchSpace, best_trial, format_summary, sweep

log = logging.getLogger("ragfa")

EXIT_OK, EXIT_INPUT, EXIT_REMOTE = 0, 2, 3

# flag dest -> (section, key)
FLAG_OVERRIDES = {
    "chunk_size": ("chunking", "chunk_size_tokens"),
    "overlap": ("chunking", "overlap_tokens"),
    "bm25_top_k": ("hybrid", "bm25_top_k"),
    "dense_top_k": ("hybrid", "dense_top_k"),
    "join_cap": ("hybrid", "join_cap"),
    "fusion": ("hybrid", "fusion"),
    "reranker": ("reranker", "backend"),
    "generator": ("generator", "backend"),
    "embedder": ("embedder", "backend"),
}


def _parse_set(item: str) -> tuple[str, str, Any]:
    try:
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
    except ValueError:
        raise ConfigError(f"--set expects section.key=value, got {item!r}") from None
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def resolve_settings(args: argparse.Namespace) -> PipelineSettings:
    """Config file first, then --set pairs, then dedicated flags."""
    settings = load_settings(args.config)
    merged = settings.to_dict()
    for item in args.set or []:
        section, key, value = _parse_set(item)
        if section not in merged:
            raise ConfigError(f"unknown config section {section!r}")
        merged[section][key] = value
    for dest, (section, key) in FLAG_OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[section][key] = value
    return PipelineSettings.from_dict(merged)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args: argparse.Namespace, settings: PipelineSettings) -> int:
    corpus = args.corpus or settings.data.corpus
    if not corpus:
        raise ConfigError("no corpus given (positional argument or data.corpus)")
    settings.chunking.validate()
    docs = ingest(read_corpus_jsonl(corpus), settings.normalization)
    chunks = chunk_corpus(docs, settings.chunking)
    out = _out_dir(args)
    save_chunks(out / CHUNKS_FILE, chunks)
    print(f"ingested {len(docs)} documents into {len(chunks)} chunks -> {out / CHUNKS_FILE}")
    return EXIT_OK


def cmd_index(args: argparse.Namespace, settings: PipelineSettings) -> int:
    out = Path(args.out)
    store = Path(args.chunks) if args.chunks else out / CHUNKS_FILE
    if not store.exists():
        raise InputError(f"chunk store {store} not found; run ingest first")
    chunks = load_chunks(store)
    pipeline = RagPipeline.build(chunks, settings)
    _out_dir(args)
    if store != out / CHUNKS_FILE:
        save_chunks(out / CHUNKS_FILE, chunks)
    pipeline.save(out)
    print(f"indexed {len(chunks)} chunks ({len(pipeline.vectors)} with dense vectors) -> {out}")
    return EXIT_OK


def _print_answer(pipeline: RagPipeline, question: str, show_prompt: bool) -> None:
    ans = pipeline.answer(question)
    print(ans.text)
    print()
    for r in ans.retrieved:
        print(f"{r.rank:>3}  {r.score:.6f}  {r.chunk_id}")
    if show_prompt:
        print()
        sys.stdout.write(ans.prompt)


def cmd_query(args: argparse.Namespace, settings: PipelineSettings) -> int:
    pipeline = RagPipeline.load(args.out, settings)
    if args.repl:
        for line in sys.stdin:
            question = line.strip()
            if question:
                _print_answer(pipeline, question, args.show_prompt)
                print()
        return EXIT_OK
    if not args.question:
        raise InputError("query needs a question (or --repl)")
    _print_answer(pipeline, args.question, args.show_prompt)
    return EXIT_OK


def _dataset(args: argparse.Namespace, settings: PipelineSettings) -> list:
    path = args.dataset or settings.data.dataset
    if not path:
        raise ConfigError("no dataset given (positional argument or data.dataset)")
    if not Path(path).exists():
        raise InputError(f"dataset {path} not found")
    return load_dataset(path, settings.normalization)


def cmd_eval_embed(args: argparse.Namespace, settings: PipelineSettings) -> int:
    dataset = _dataset(args, settings)
    docs, _ = unique_paragraphs(dataset)
    embedder: Embedder
    if settings.embedder.backend is EmbedderBackend.REFERENCE:
        embedder = ReferenceEmbedder.fitted([d.text for d in docs], settings.embedder.dim, settings.embedder.seed)
    else:
        embedder = make_embedder(settings.embedder, [])
    results = _out_dir(args) / "embed_results.jsonl"
    report = eval_embedding_ranking(dataset, embedder, k=args.k, results_path=results)
    print(report.format_table(settings.embedder.backend.value))
    print(f"results -> {results}")
    return EXIT_OK


def cmd_eval_rag(args: argparse.Namespace, settings: PipelineSettings) -> int:
    dataset = _dataset(args, settings)
    pipeline = build_dataset_pipeline(dataset, settings)
    results = _out_dir(args) / "rag_results.jsonl"
    report = eval_end_to_end(dataset, pipeline, results_path=results, workers=args.workers)
    print(report.format_table())
    print(f"results -> {results}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, settings: PipelineSettings) -> int:
    try:
        raw = json.loads(Path(args.space).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"search space file {args.space} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.space}: invalid JSON: {exc}") from exc
    space = SearchSpace.from_dict(raw)
    dataset = _dataset(args, settings)
    trials = _out_dir(args) / "trials.jsonl"
    results = sweep(space, dataset, Objective(args.objective), settings, trials, workers=args.workers)
    print(format_summary(results))
    best = best_trial(results)
    if best is not None:
        print(f"best: trial {best.trial} {args.objective}={best.value:.2f}")
    print(f"trial log -> {trials}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration file")
    common.add_argument("--out", default="rag_out", help="directory for chunk stores, indices and results")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--chunk-size", dest="chunk_size", type=int)
    common.add_argument("--overlap", type=int)
    common.add_argument("--bm25-top-k", dest="bm25_top_k", type=int)
    common.add_argument("--dense-top-k", dest="dense_top_k", type=int)
    common.add_argument("--join-cap", dest="join_cap", type=int)
    common.add_argument("--fusion", choices=["concat_maxnorm", "rrf"])
    common.add_argument("--reranker", choices=["identity", "lexical_overlap", "remote"])
    common.add_argument("--generator", choices=["extractive_reference", "remote"])
    common.add_argument("--embedder", choices=["reference", "remote"])
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ragfa", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="normalize and chunk a JSONL corpus")
    p.add_argument("corpus", nargs="?")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", parents=[common], help="build BM25 and vector indices")
    p.add_argument("--chunks", help="chunk store (defaults to OUT/chunks.jsonl)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", parents=[common], help="answer a question against the indices")
    p.add_argument("question", nargs="?")
    p.add_argument("--repl", action="store_true", help="read one question per line from stdin")
    p.add_argument("--show-prompt", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval-embed", parents=[common], help="rank-bucket evaluation of the embedder")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_eval_embed)

    p = sub.add_parser("eval-rag", parents=[common], help="end-to-end answer grading")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval_rag)

    p = sub.add_parser("sweep", parents=[common], help="grid search over hyperparameters")
    p.add_argument("space", help="JSON file with candidate lists per parameter")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--objective", choices=[o.value for o in Objective], default=Objective.RETRIEVAL_TOP1_PCT.value)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve_settings(args)
        print(json.dumps(settings.to_dict(), ensure_ascii=False, sort_keys=True), file=sys.stderr)
        return args.func(args, settings)
    except RemoteServiceError as exc:
        print(f"error: remote service failure: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (RagError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
