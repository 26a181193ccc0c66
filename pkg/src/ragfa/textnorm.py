"""Persian text normalization and rule-based tokenization.

Character unification is driven by ``data/char_map.tsv`` so the mapping is
auditable and can be extended without touching code.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import NamedTuple

ZWNJ = "\u200c"

# Arabic harakat block (fathatan .. wavy hamza below).
_DIACRITICS = {chr(cp) for cp in range(0x064B, 0x0660)}
_PERSIAN_DIGIT_ZERO = 0x06F0


class ZwnjPolicy(str, Enum):
    PRESERVE = "preserve"
    STRIP = "strip"
    TO_SPACE = "to_space"


class DigitPolicy(str, Enum):
    PRESERVE = "preserve"
    TO_ASCII = "to_ascii"
    TO_PERSIAN = "to_persian"


@dataclass(frozen=True)
class NormalizationConfig:
    map_arabic_compat: bool = True
    zwnj_policy: ZwnjPolicy = ZwnjPolicy.PRESERVE
    digit_policy: DigitPolicy = DigitPolicy.TO_ASCII
    strip_diacritics: bool = True
    collapse_whitespace: bool = True

    def __post_init__(self) -> None:
        # accept plain strings from config files
        object.__setattr__(self, "zwnj_policy", ZwnjPolicy(self.zwnj_policy))
        object.__setattr__(self, "digit_policy", DigitPolicy(self.digit_policy))


class CharMap(NamedTuple):
    letters: dict[str, str]
    digits: dict[str, str]


def _parse_code_point(field: str) -> str:
    field = field.strip()
    if field.upper().startswith("U+"):
        field = field[2:]
    return chr(int(field, 16))


def parse_char_map(text: str) -> CharMap:
    """Parse a two-column ``source<TAB>target`` code point table.

    Blank lines and ``#`` comments are ignored. Rows whose target is an
    ASCII digit land in ``digits``; every other row in ``letters``.
    """
    letters: dict[str, str] = {}
    digits: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 2:
            raise ValueError(f"char map line {lineno}: expected 2 columns, got {len(cols)}")
        src, dst = _parse_code_point(cols[0]), _parse_code_point(cols[1])
        if dst.isascii() and dst.isdigit():
            digits[src] = dst
        else:
            letters[src] = dst
    return CharMap(letters, digits)


@lru_cache(maxsize=None)
def load_char_map(path: str | None = None) -> CharMap:
    if path is None:
        text = resources.files("ragfa").joinpath("data/char_map.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_char_map(text)


@lru_cache(maxsize=None)
def _translation_tables(cfg: NormalizationConfig) -> tuple[dict[int, str | None], dict[int, str | None]]:
    cmap = load_char_map()
    first: dict[int, str | None] = {}
    if cfg.map_arabic_compat:
        first.update({ord(s): t for s, t in cmap.letters.items()})
    if cfg.strip_diacritics:
        first.update({ord(ch): None for ch in _DIACRITICS})

    second: dict[int, str | None] = {}
    if cfg.digit_policy is DigitPolicy.TO_ASCII:
        second.update({ord(s): t for s, t in cmap.digits.items()})
    elif cfg.digit_policy is DigitPolicy.TO_PERSIAN:
        for s, t in cmap.digits.items():
            second[ord(s)] = chr(_PERSIAN_DIGIT_ZERO + int(t))
        for d in range(10):
            second[ord(str(d))] = chr(_PERSIAN_DIGIT_ZERO + d)
    if cfg.zwnj_policy is ZwnjPolicy.STRIP:
        second[ord(ZWNJ)] = None
    elif cfg.zwnj_policy is ZwnjPolicy.TO_SPACE:
        second[ord(ZWNJ)] = " "
    return first, second


def _collapse(text: str) -> str:
    # Line structure survives: table rows and sentence splitting rely on it.
    lines = (" ".join(line.split()) for line in text.splitlines())
    return "\n".join(line for line in lines if line)


def normalize_text(text: str, cfg: NormalizationConfig | None = None) -> str:
    """Normalize ``text`` according to ``cfg`` (defaults when omitted).

    Letter unification and diacritic removal run first, then digit and ZWNJ
    policies, then whitespace collapsing. Each stage only emits characters
    that no earlier stage rewrites, which keeps the function idempotent.
    """
    cfg = cfg or NormalizationConfig()
    if not text:
        return ""
    first, second = _translation_tables(cfg)
    out = text.translate(first).translate(second)
    if cfg.collapse_whitespace:
        out = _collapse(out)
    return out


class Token(NamedTuple):
    text: str
    start: int
    end: int


def _is_word_char(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "LNM"


def tokenize(text: str) -> list[Token]:
    """Split normalized text into maximal letter/digit runs.

    A ZWNJ flanked by word characters joins the two halves into one token;
    anywhere else it acts as a separator. Offsets are code point indices
    into ``text``.
    """
    tokens: list[Token] = []
    n = len(text)
    i = 0
    while i < n:
        if not _is_word_char(text[i]):
            i += 1
            continue
        start = i
        while i < n:
            if _is_word_char(text[i]):
                i += 1
                continue
            if text[i] == ZWNJ:
                j = i
                while j < n and text[j] == ZWNJ:
                    j += 1
                if j < n and _is_word_char(text[j]):
                    i = j
                    continue
            break
        tokens.append(Token(text[start:i], start, i))
    return tokens


def terms(text: str) -> list[str]:
    """Lower-cased token texts, the unit of matching for BM25 and embeddings."""
    return [tok.text.lower() for tok in tokenize(text)]


def token_f1(predicted: list[str], reference: list[str]) -> float:
    """Bag-of-tokens F1; 0.0 when either side is empty."""
    if not predicted or not reference:
        return 0.0
    common = Counter(predicted) & Counter(reference)
    same = sum(common.values())
    if same == 0:
        return 0.0
    precision = same / len(predicted)
    recall = same / len(reference)
    return 2 * precision * recall / (precision + recall)
