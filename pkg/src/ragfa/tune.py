"""Grid sweep over chunking, retrieval and reranking hyperparameters."""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import threading
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import ConfigError, InvalidChunkConfig, RagError
from .evaluate import GradeLabel, QAExample, build_dataset_pipeline, eval_end_to_end, eval_retrieval
from .pipeline import PipelineSettings

log = logging.getLogger(__name__)


class Objective(str, Enum):
    RETRIEVAL_TOP1_PCT = "retrieval_top1_pct"
    E2E_CORRECT_PCT = "e2e_correct_pct"


# (space field, settings section, settings key) in enumeration order
PARAMETERS: tuple[tuple[str, str, str], ...] = (
    ("chunk_size_tokens", "chunking", "chunk_size_tokens"),
    ("overlap_tokens", "chunking", "overlap_tokens"),
    ("bm25_top_k", "hybrid", "bm25_top_k"),
    ("dense_top_k", "hybrid", "dense_top_k"),
    ("join_cap", "hybrid", "join_cap"),
    ("fusion", "hybrid", "fusion"),
    ("reranker", "reranker", "backend"),
    ("embedding_dim", "embedder", "dim"),
)


@dataclass(frozen=True)
class SearchSpace:
    """Candidate values per parameter; empty lists fall back to the base settings."""

    chunk_size_tokens: Sequence[int] = ()
    overlap_tokens: Sequence[int] = ()
    bm25_top_k: Sequence[int] = ()
    dense_top_k: Sequence[int] = ()
    join_cap: Sequence[int] = ()
    fusion: Sequence[str] = ()
    reranker: Sequence[str] = ()
    embedding_dim: Sequence[int] = ()

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> SearchSpace:
        allowed = {f.name for f in dataclasses.fields(cls)}
        for key, values in raw.items():
            if key not in allowed:
                raise ConfigError(f"unknown search-space parameter {key!r}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"search-space parameter {key!r} needs a non-empty list")
        return cls(**{k: tuple(v) for k, v in raw.items()})

    def grid(self, base: PipelineSettings) -> list[dict[str, Any]]:
        base_dict = base.to_dict()
        axes = []
        for name, section, key in PARAMETERS:
            values = list(getattr(self, name)) or [base_dict[section][key]]
            axes.append(values)
        names = [p[0] for p in PARAMETERS]
        return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


def apply_point(base: PipelineSettings, point: Mapping[str, Any]) -> PipelineSettings:
    merged = base.to_dict()
    for name, section, key in PARAMETERS:
        merged[section][key] = point[name]
    return PipelineSettings.from_dict(merged)


@dataclass
class TrialResult:
    trial: int
    config: dict[str, Any]
    objective: Objective
    value: float | None
    status: str = "ok"
    error: str | None = None
    duration_s: float = field(default=0.0, compare=False)

    def log_record(self) -> dict[str, Any]:
        # wall-clock time is kept out of the log so reruns are byte-identical
        return {
            "trial": self.trial,
            "status": self.status,
            "config": self.config,
            "objective": self.objective.value,
            "value": self.value,
            "error": self.error,
        }


def evaluate_settings(settings: PipelineSettings, dataset: Sequence[QAExample], objective: Objective) -> float:
    """Score one configuration from scratch: chunk, index, evaluate."""
    pipeline = build_dataset_pipeline(dataset, settings)
    if objective is Objective.RETRIEVAL_TOP1_PCT:
        return eval_retrieval(dataset, pipeline).percentage("top1")
    return eval_end_to_end(dataset, pipeline).percentage(GradeLabel.CORRECT)


def _run_trial(
    i: int, point: dict[str, Any], base: PipelineSettings, dataset: Sequence[QAExample], objective: Objective
) -> TrialResult:
    t0 = time.perf_counter()
    try:
        settings = apply_point(base, point)
        settings.chunking.validate()
    except (InvalidChunkConfig, ConfigError) as exc:
        return TrialResult(i, point, objective, None, "skipped", str(exc), time.perf_counter() - t0)
    try:
        value = evaluate_settings(settings, dataset, objective)
    except RagError as exc:
        log.warning("trial %d failed: %s", i, exc)
        error = f"{type(exc).__name__}: {exc}"
        return TrialResult(i, point, objective, None, "failed", error, time.perf_counter() - t0)
    return TrialResult(i, point, objective, value, "ok", None, time.perf_counter() - t0)


def sweep(
    space: SearchSpace,
    dataset: Sequence[QAExample],
    objective: Objective | str = Objective.RETRIEVAL_TOP1_PCT,
    base: PipelineSettings | None = None,
    log_path: str | Path | None = None,
    workers: int = 1,
) -> list[TrialResult]:
    """Evaluate every grid point and return results best-first.

    Points are enumerated in lexicographic order of the candidate lists.
    Invalid points (overlap >= chunk size) are recorded as ``skipped``;
    evaluation errors mark a trial ``failed`` without stopping the sweep.
    Ties on the objective keep enumeration order.
    """
    if not dataset:
        raise ValueError("sweep needs a non-empty dataset")
    objective = Objective(objective)
    base = base or PipelineSettings()
    points = space.grid(base)
    results: list[TrialResult | None] = [None] * len(points)
    lock = threading.Lock()

    def run(i: int) -> None:
        res = _run_trial(i, points[i], base, dataset, objective)
        with lock:
            results[i] = res

    if workers <= 1:
        for i in range(len(points)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(points))))
    done = [r for r in results if r is not None]
    if log_path is not None:
        write_trial_log(log_path, done)
    return sorted(done, key=lambda r: (r.value is None, -(r.value or 0.0), r.trial))


def write_trial_log(path: str | Path, results: Sequence[TrialResult]) -> None:
    """One JSON line per trial, in enumeration order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in sorted(results, key=lambda r: r.trial):
            fh.write(json.dumps(r.log_record(), ensure_ascii=False, sort_keys=True) + "\n")


def best_trial(results: Sequence[TrialResult]) -> TrialResult | None:
    ok = [r for r in results if r.value is not None]
    if not ok:
        return None
    return max(ok, key=lambda r: (r.value, -r.trial))


def format_summary(results: Sequence[TrialResult]) -> str:
    names = [p[0] for p in PARAMETERS]
    rows = [["trial", *names, "status", "value", "seconds"]]
    for r in results:
        value = "-" if r.value is None else f"{r.value:.2f}"
        rows.append([str(r.trial), *(str(r.config[n]) for n in names), r.status, value, f"{r.duration_s:.2f}"])
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
