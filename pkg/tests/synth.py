"""Deterministic synthetic Persian-script data for tests."""

from __future__ import annotations

import random

from ragfa.evaluate import QAExample

LETTERS = "ابپتثجچحخدذرزژسشصضطظعغفقکگلمنوهی"
QUESTION_WORDS = ("چه", "کدام", "چیست")


def pseudo_words(rng: random.Random, n: int, min_len: int = 3, max_len: int = 7) -> list[str]:
    """``n`` distinct pseudo-words built from Persian letters."""
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        w = "".join(rng.choice(LETTERS) for _ in range(rng.randint(min_len, max_len)))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def factoid_dataset(n: int = 50, seed: int = 0, sentences: int = 4) -> list[QAExample]:
    """One paragraph per example; the gold answer is one of its sentences.

    Each paragraph draws from its own slice of the vocabulary, and the
    question repeats most of the gold sentence's words, so lexical overlap
    points at both the right paragraph and the right sentence.
    """
    rng = random.Random(seed)
    per_para = sentences * 8
    vocab = pseudo_words(rng, n * per_para)
    out = []
    for i in range(n):
        words = vocab[i * per_para : (i + 1) * per_para]
        sents = [" ".join(words[j * 8 : j * 8 + rng.randint(5, 8)]) for j in range(sentences)]
        paragraph = ". ".join(sents) + "."
        gold = sents[rng.randrange(sentences)]
        toks = gold.split()
        drop = rng.randrange(len(toks))
        question = " ".join(t for k, t in enumerate(toks) if k != drop) + " " + rng.choice(QUESTION_WORDS) + "؟"
        out.append(QAExample(paragraph, question, gold, "factoid", f"doc{i:03d}.txt"))
    return out


def hybrid_corpus(seed: int = 3, n: int = 20) -> tuple[list, list[tuple[str, str]], list[tuple[str, str]]]:
    """Documents plus lexical-only and dense-only (query, gold doc id) pairs.

    ``g`` documents hold every common word once and their own common word
    six times. ``l`` documents hold every common word, every bait word, a
    private rare word and private fillers. A lexical query is a rare word
    drowned in common words: BM25 gives common words almost no weight but
    the TF-IDF embedder pulls toward the ``g`` documents. A dense query is
    one common word repeated plus a bait word: the embedder sees the ``g``
    document's matching profile while BM25 only rewards the bait.
    """
    from ragfa.corpus import Document

    rng = random.Random(seed)
    w = pseudo_words(rng, 3 * n + 5 * n)
    commons, baits, rares, fill = w[:n], w[n : 2 * n], w[2 * n : 3 * n], w[3 * n :]
    docs = []
    for i in range(n):
        toks = list(commons) + [commons[i]] * 5
        rng.shuffle(toks)
        docs.append(Document(f"g{i:02d}", " ".join(toks)))
    for j in range(n):
        toks = list(commons) + list(baits) + [rares[j]] + fill[j * 5 : (j + 1) * 5]
        rng.shuffle(toks)
        docs.append(Document(f"l{j:02d}", " ".join(toks)))
    lexical = [(" ".join([rares[j]] + commons * 2), f"l{j:02d}") for j in range(n)]
    dense = [(" ".join([commons[i]] * 8 + [baits[i]]), f"g{i:02d}") for i in range(n)]
    return docs, lexical, dense


def overlap_corpus(seed: int, n: int = 20) -> tuple[list, list[tuple[str, str]]]:
    """Gold documents hold every query word once plus one filler.

    Distractors repeat three or four of the query words. Repetition lifts
    them under BM25 and TF-IDF cosine, while the extra length (or the
    missing word) keeps their token-overlap F1 strictly below the gold's.
    """
    from ragfa.corpus import Document

    rng = random.Random(seed)
    words = pseudo_words(rng, n * 8)
    docs, queries = [], []
    for i in range(n):
        q = words[i * 8 : i * 8 + 4]
        filler = words[i * 8 + 4 : i * 8 + 8]
        gold = q + [filler[0]]
        rng.shuffle(gold)
        kept = rng.sample(q, rng.randint(3, 4))
        reps = [rng.randint(1, 4) for _ in kept]
        if len(kept) == 4 and sum(reps) < 6:
            # with every query word present, length alone must push F1 below the gold's
            reps[0] += 6 - sum(reps)
        distractor = [w for w, r in zip(kept, reps) for _ in range(r)] + filler[1 : 1 + rng.randint(0, 1)]
        rng.shuffle(distractor)
        docs.append(Document(f"gold{i:02d}", " ".join(gold)))
        docs.append(Document(f"dist{i:02d}", " ".join(distractor)))
        queries.append((" ".join(q), f"gold{i:02d}"))
    return docs, queries
