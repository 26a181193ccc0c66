"""Prompt assembly with sectioned headers, Markdown tables and metadata lines."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

from .corpus import Chunk
from .errors import MalformedTable

EMPTY_RETRIEVAL = "(no documents retrieved)"


class Language(str, Enum):
    FA = "fa"
    EN = "en"


DEFAULT_INSTRUCTIONS = {
    Language.FA: (
        "فقط با استفاده از اطلاعات بازیابی‌شده به پرسش کاربر پاسخ دهید. "
        "اگر پاسخ در این اطلاعات نیست، بگویید که نمی‌دانید. "
        "پاسخ را کوتاه و به زبان فارسی بنویسید."
    ),
    Language.EN: (
        "Answer the user query using only the retrieved information. "
        "If the answer is not in it, say that you do not know. "
        "Keep the answer short and write it in Persian."
    ),
}


@dataclass(frozen=True)
class PromptParts:
    user_query: str
    chunks: Sequence[Chunk] = field(default_factory=tuple)
    instructions: str | None = None
    language: Language = Language.FA

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language(self.language))
        if not self.user_query.strip():
            raise ValueError("user_query must be non-empty")

    @property
    def instruction_text(self) -> str:
        if self.instructions is None:
            return DEFAULT_INSTRUCTIONS[self.language]
        return self.instructions


def _split_row(line: str) -> list[str]:
    line = line.strip()
    if line.startswith("|"):
        line = line[1:]
    if line.endswith("|"):
        line = line[:-1]
    return [cell.strip() for cell in line.split("|")]


def _is_separator(cells: list[str]) -> bool:
    return all(c and set(c) <= set("-:") for c in cells)


def render_table(text: str) -> str:
    """Render pipe- or bar-separated lines as a Markdown pipe table.

    The first line is the header. An existing ``---`` separator line in the
    input is dropped and regenerated.
    """
    rows = [_split_row(line) for line in text.split("\n") if line.strip()]
    rows = [r for i, r in enumerate(rows) if i == 0 or not _is_separator(r)]
    if not rows:
        raise MalformedTable("table has no rows")
    width = len(rows[0])
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != width:
            raise MalformedTable(f"row {i} has {len(row)} cells, header has {width}")
    lines = ["| " + " | ".join(rows[0]) + " |", "| " + " | ".join(["---"] * width) + " |"]
    lines.extend("| " + " | ".join(r) + " |" for r in rows[1:])
    return "\n".join(lines)


def render_chunk(chunk: Chunk) -> str:
    return render_table(chunk.text) if chunk.is_table else chunk.text


def attach_metadata(chunk: Chunk) -> str:
    """The ``[source: ... | date: ...]`` line for a chunk, or "" without metadata."""
    fields = []
    if chunk.metadata.get("source_file"):
        fields.append(f"source: {chunk.metadata['source_file']}")
    if chunk.metadata.get("datetime"):
        fields.append(f"date: {chunk.metadata['datetime']}")
    if not fields:
        return ""
    return "[" + " | ".join(fields) + "]"


def format_retrieved(chunk: Chunk) -> str:
    prefix = attach_metadata(chunk)
    body = render_chunk(chunk)
    return f"{prefix}\n{body}" if prefix else body


def build_prompt(parts: PromptParts) -> str:
    if parts.chunks:
        retrieved = "\n\n".join(format_retrieved(c) for c in parts.chunks)
    else:
        retrieved = EMPTY_RETRIEVAL
    return (
        f"### Instructions\n{parts.instruction_text}\n\n"
        f"### User Query\n{parts.user_query}\n\n"
        f"### Retrieved Information\n{retrieved}\n\n"
        "### Your Response:\n"
    )
