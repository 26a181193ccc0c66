from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragfa.corpus import Chunk
from ragfa.errors import MalformedTable
from ragfa.prompt import (
    DEFAULT_INSTRUCTIONS,
    Language,
    PromptParts,
    attach_metadata,
    build_prompt,
    render_chunk,
    render_table,
)

GOLDEN = Path(__file__).parent / "golden"
HEADERS = ("### Instructions\n", "### User Query\n", "### Retrieved Information\n", "### Your Response:\n")


def golden(name: str) -> str:
    return (GOLDEN / name).read_bytes().decode("utf-8")


def chunk(text: str, meta: dict | None = None, table: bool = False, cid: str = "d#0") -> Chunk:
    return Chunk(cid, cid.split("#")[0], 0, text, (0, 1), meta or {}, table)


PLAIN = chunk("C", {"source_file": "doc.txt"})
TABLE = chunk("A | B\n1 | 2", {"source_file": "t.csv", "datetime": "2024-06-01"}, table=True)


class TestGolden:
    def test_plain(self):
        assert build_prompt(PromptParts("Q?", [PLAIN], "Answer in Persian.")) == golden("plain.txt")

    def test_table(self):
        assert build_prompt(PromptParts("Q?", [TABLE], "Answer in Persian.")) == golden("table.txt")

    def test_empty(self):
        assert build_prompt(PromptParts("Q?", [], "Answer in Persian.")) == golden("empty.txt")

    def test_two_chunks_keep_order(self):
        parts = PromptParts("Q?", [PLAIN, chunk("D", cid="e#0")], "Answer in Persian.")
        assert build_prompt(parts) == golden("two_chunks.txt")


class TestRenderTable:
    def test_basic(self):
        assert render_table("A | B\n1 | 2") == "| A | B |\n| --- | --- |\n| 1 | 2 |"

    def test_existing_pipe_table_is_reformatted(self):
        assert render_table("|A|B|\n|---|:-:|\n|1|2|") == "| A | B |\n| --- | --- |\n| 1 | 2 |"

    def test_ragged_rows(self):
        with pytest.raises(MalformedTable):
            render_table("A | B\n1 | 2 | 3")

    def test_plain_chunk_verbatim(self):
        assert render_chunk(chunk("hello")) == "hello"

    def test_persian_cells(self):
        assert render_table("شهر | جمعیت\nتهران | ۹") == "| شهر | جمعیت |\n| --- | --- |\n| تهران | ۹ |"


class TestMetadata:
    def test_source_and_date(self):
        c = chunk("x", {"source_file": "june_report.txt", "datetime": "2024-06-01"})
        assert attach_metadata(c) == "[source: june_report.txt | date: 2024-06-01]"

    def test_only_source(self):
        assert attach_metadata(chunk("x", {"source_file": "x"})) == "[source: x]"

    def test_none(self):
        assert attach_metadata(chunk("x")) == ""
        assert "[" not in build_prompt(PromptParts("q", [chunk("x")], "i"))


class TestPromptParts:
    def test_empty_query_rejected(self):
        with pytest.raises(ValueError):
            PromptParts("  ")

    def test_default_instructions_by_language(self):
        assert PromptParts("q").instruction_text == DEFAULT_INSTRUCTIONS[Language.FA]
        assert PromptParts("q", language="en").instruction_text == DEFAULT_INSTRUCTIONS[Language.EN]

    @settings(max_examples=200, deadline=None)
    @given(st.text(min_size=1).filter(str.strip), st.lists(st.text(min_size=1), max_size=4))
    def test_headers_once_in_order(self, query, bodies):
        chunks = [chunk(b, cid=f"d{i}#0") for i, b in enumerate(bodies)]
        out = build_prompt(PromptParts(query, chunks, "i"))
        positions = [out.find(h) for h in HEADERS]
        assert all(p >= 0 for p in positions) and positions == sorted(positions)
        assert out.endswith("### Your Response:\n")
