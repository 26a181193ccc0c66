"""Evaluation: embedding rank buckets, answer grading and dataset loading.

Answer grading rule, printed with every report:

* correct: normalized gold equals, or is a substring of, normalized prediction
* middle:  otherwise, token F1 >= 0.5
* wrong:   otherwise
"""

from __future__ import annotations

import json
import logging
import string
import unicodedata
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .corpus import Document, chunk_corpus
from .embed import Embedder
from .errors import MissingField, NoRetrievedContent, ParseError, RemoteServiceError, ZeroVector
from .index import VectorIndex
from .pipeline import PipelineSettings, RagPipeline
from .textnorm import NormalizationConfig, ZwnjPolicy, normalize_text, token_f1

log = logging.getLogger(__name__)

GRADING_RULE = (
    "correct = normalized exact match or gold contained in prediction; "
    "middle = token F1 >= 0.5; wrong = otherwise"
)
MIDDLE_F1 = 0.5
BUCKETS = ("top1", "top2", "top3", "top4_10", "missed")
BUCKET_TITLES = ("Top 1", "Top 2", "Top 3", "Top 4-10", "Missed")


@dataclass(frozen=True)
class QAExample:
    paragraph: str
    question: str
    gold_answer: str
    question_type: str | None = None
    source_file: str | None = None


def load_dataset(path: str | Path, norm_cfg: NormalizationConfig | None = None) -> list[QAExample]:
    """Read a JSON Lines QA file and normalize its text fields."""
    path = Path(path)
    out: list[QAExample] = []
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
            fields = {}
            for key in ("paragraph", "question", "gold_answer"):
                value = obj.get(key)
                if not isinstance(value, str) or not normalize_text(value, norm_cfg):
                    raise MissingField(str(path), lineno, key)
                fields[key] = normalize_text(value, norm_cfg)
            out.append(
                QAExample(
                    **fields,
                    question_type=obj.get("question_type"),
                    source_file=obj.get("source_file"),
                )
            )
    return out


def _bucket(rank: int | None, k: int) -> str:
    if rank is None or rank > k:
        return "missed"
    if rank <= 3:
        return f"top{rank}"
    return "top4_10"


@dataclass
class RankBucketReport:
    total: int
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(BUCKETS, 0))

    @classmethod
    def from_ranks(cls, ranks: Iterable[int | None], k: int = 10) -> RankBucketReport:
        counts = dict.fromkeys(BUCKETS, 0)
        total = 0
        for r in ranks:
            counts[_bucket(r, k)] += 1
            total += 1
        return cls(total, counts)

    def percentage(self, bucket: str) -> float:
        return 100.0 * self.counts[bucket] / self.total if self.total else 0.0

    @property
    def percentages(self) -> dict[str, float]:
        return {b: self.percentage(b) for b in BUCKETS}

    def to_dict(self) -> dict[str, Any]:
        return {"total": self.total, "counts": dict(self.counts), "percentages": self.percentages}

    def format_table(self, label: str = "embedder") -> str:
        head = ["Model"] + list(BUCKET_TITLES) + ["Total"]
        counts = [label] + [str(self.counts[b]) for b in BUCKETS] + [str(self.total)]
        pcts = ["%"] + [f"{self.percentage(b):.1f}" for b in BUCKETS] + ["100.0" if self.total else "0.0"]
        return _align([head, counts, pcts])


def _align(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows)


def unique_paragraphs(dataset: Sequence[QAExample]) -> tuple[list[Document], list[str]]:
    """Deduplicate paragraphs by normalized text.

    Returns one Document per distinct paragraph (ids ``p0000``, ``p0001``...,
    in order of first appearance) and, per example, the id of its paragraph.
    """
    ids: dict[str, str] = {}
    docs: list[Document] = []
    gold: list[str] = []
    for ex in dataset:
        key = normalize_text(ex.paragraph)
        if key not in ids:
            ids[key] = f"p{len(ids):04d}"
            meta = {"source_file": ex.source_file} if ex.source_file else {}
            docs.append(Document(ids[key], ex.paragraph, meta))
        gold.append(ids[key])
    return docs, gold


def embedding_ranks(dataset: Sequence[QAExample], embedder: Embedder, k: int = 10) -> list[dict[str, Any]]:
    """Per-example rank of the gold paragraph among the ``k`` nearest paragraphs."""
    docs, gold = unique_paragraphs(dataset)
    index = None
    vecs = embedder.embed_texts([d.text for d in docs]) if docs else []
    for doc, v in zip(docs, vecs):
        if index is None:
            index = VectorIndex(v.dim)
        if v.is_zero:
            log.warning("paragraph %s embeds to the zero vector and cannot be retrieved", doc.id)
            continue
        index.add(doc.id, v)
    qvecs = embedder.embed_texts([ex.question for ex in dataset]) if dataset else []
    records = []
    for ex, gid, qv in zip(dataset, gold, qvecs):
        retrieved: list[str] = []
        if index is not None and len(index):
            try:
                retrieved = [r.chunk_id for r in index.search(qv, k)]
            except ZeroVector:
                retrieved = []
        rank = retrieved.index(gid) + 1 if gid in retrieved else None
        records.append({"question": ex.question, "gold_id": gid, "retrieved_ids": retrieved, "rank_of_gold": rank})
    return records


def eval_embedding_ranking(
    dataset: Sequence[QAExample],
    embedder: Embedder,
    k: int = 10,
    results_path: str | Path | None = None,
) -> RankBucketReport:
    records = embedding_ranks(dataset, embedder, k)
    if results_path is not None:
        _write_jsonl(results_path, records)
    return RankBucketReport.from_ranks((r["rank_of_gold"] for r in records), k)


class GradeLabel(str, Enum):
    WRONG = "wrong"
    MIDDLE = "middle"
    CORRECT = "correct"


_GRADE_NORM = NormalizationConfig(zwnj_policy=ZwnjPolicy.TO_SPACE)
_ASCII_LOWER = str.maketrans(string.ascii_uppercase, string.ascii_lowercase)


def normalize_answer(text: str) -> str:
    text = normalize_text(text, _GRADE_NORM).translate(_ASCII_LOWER)
    text = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text)
    return " ".join(text.split())


def grade_answer(predicted: str, gold: str) -> GradeLabel:
    pred, ref = normalize_answer(predicted), normalize_answer(gold)
    if ref and (pred == ref or ref in pred):
        return GradeLabel.CORRECT
    if token_f1(pred.split(), ref.split()) >= MIDDLE_F1:
        return GradeLabel.MIDDLE
    return GradeLabel.WRONG


@dataclass
class GradeReport:
    total: int
    counts: dict[GradeLabel, int] = field(default_factory=lambda: dict.fromkeys(GradeLabel, 0))
    rule: str = GRADING_RULE

    @classmethod
    def from_labels(cls, labels: Iterable[GradeLabel]) -> GradeReport:
        c = Counter(labels)
        counts = {lab: c.get(lab, 0) for lab in GradeLabel}
        return cls(sum(counts.values()), counts)

    def percentage(self, label: GradeLabel) -> float:
        return 100.0 * self.counts[label] / self.total if self.total else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "counts": {lab.value: n for lab, n in self.counts.items()},
            "percentages": {lab.value: self.percentage(lab) for lab in GradeLabel},
            "rule": self.rule,
        }

    def format_table(self, label: str = "pipeline") -> str:
        order = (GradeLabel.WRONG, GradeLabel.MIDDLE, GradeLabel.CORRECT)
        rows = [
            ["Pipeline", "Wrong", "Middle", "Correct", "Total"],
            [label] + [str(self.counts[g]) for g in order] + [str(self.total)],
            ["%"] + [f"{self.percentage(g):.1f}" for g in order] + ["100.0" if self.total else "0.0"],
        ]
        return _align(rows) + f"\nGrading rule: {self.rule}"


def build_dataset_pipeline(
    dataset: Sequence[QAExample], settings: PipelineSettings | None = None, **kwargs: Any
) -> RagPipeline:
    """Index the dataset's unique paragraphs (one document each) into a RagPipeline."""
    settings = settings or PipelineSettings()
    docs, _ = unique_paragraphs(dataset)
    chunks = chunk_corpus(docs, settings.chunking)
    return RagPipeline.build(chunks, settings, **kwargs)


def _gold_rank(retrieved_doc_ids: Sequence[str], gold_id: str) -> int | None:
    for rank, did in enumerate(retrieved_doc_ids, start=1):
        if did == gold_id:
            return rank
    return None


def _run_example(pipeline: RagPipeline, ex: QAExample, gold_id: str) -> dict[str, Any]:
    retrieved_ids: list[str] = []
    doc_ids: list[str] = []
    try:
        ans = pipeline.answer(ex.question)
        predicted = ans.text
        retrieved_ids = [r.chunk_id for r in ans.retrieved]
        doc_ids = [c.doc_id for c in ans.chunks]
        label = grade_answer(predicted, ex.gold_answer)
    except NoRetrievedContent:
        predicted, label = "", GradeLabel.WRONG
    except RemoteServiceError as exc:
        log.warning("remote failure on %r: %s", ex.question, exc)
        predicted, label = "", GradeLabel.WRONG
    return {
        "question": ex.question,
        "gold_answer": ex.gold_answer,
        "predicted": predicted,
        "label": label.value,
        "retrieved_ids": retrieved_ids,
        "rank_of_gold": _gold_rank(doc_ids, gold_id),
    }


def end_to_end_records(dataset: Sequence[QAExample], pipeline: RagPipeline, workers: int = 1) -> list[dict[str, Any]]:
    _, gold = unique_paragraphs(dataset)
    if workers <= 1:
        return [_run_example(pipeline, ex, g) for ex, g in zip(dataset, gold)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pair: _run_example(pipeline, *pair), zip(dataset, gold)))


def eval_end_to_end(
    dataset: Sequence[QAExample],
    pipeline: RagPipeline,
    results_path: str | Path | None = None,
    workers: int = 1,
) -> GradeReport:
    """Retrieve, prompt, generate and grade every example.

    ``pipeline`` must be indexed over ``unique_paragraphs(dataset)`` (see
    ``build_dataset_pipeline``) so gold paragraph ids line up.
    """
    records = end_to_end_records(dataset, pipeline, workers)
    if results_path is not None:
        _write_jsonl(results_path, records)
    return GradeReport.from_labels(GradeLabel(r["label"]) for r in records)


def eval_retrieval(dataset: Sequence[QAExample], pipeline: RagPipeline, k: int = 10) -> RankBucketReport:
    """Rank buckets of the gold paragraph within the pipeline's final retrieved list."""
    _, gold = unique_paragraphs(dataset)
    ranks = []
    for ex, gid in zip(dataset, gold):
        retrieved = pipeline.retrieve(ex.question)
        ranks.append(_gold_rank([pipeline.chunks[r.chunk_id].doc_id for r in retrieved], gid))
    return RankBucketReport.from_ranks(ranks, k)


def _write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
