"""Corpus-level keyword extraction by word/abstract embedding similarity."""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ArgumentError, DataError, VocabularyError
from .corpus import Corpus, Document, tokenize
from .embeddings import EmbeddingTable, vector_for

DEFAULT_MIN_DF = 3


@dataclass
class CandidateSet:
    keywords: list[str]
    scores: list[float]
    corpus_name: str = ""
    frequencies: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)


def _tokens(doc) -> list[str]:
    if isinstance(doc, Document):
        return doc.tokens or tokenize(doc.abstract)
    if isinstance(doc, str):
        return tokenize(doc)
    return list(doc)


def _resolve(word: str, table: EmbeddingTable, cache: dict) -> np.ndarray | None:
    if word not in cache:
        try:
            cache[word] = np.asarray(vector_for(word, table), dtype=np.float64)
        except VocabularyError:
            cache[word] = None
    return cache[word]


def doc_embedding(doc, table: EmbeddingTable, _cache: dict | None = None) -> np.ndarray:
    """Mean of the token vectors of an abstract; unresolvable tokens are skipped."""
    cache = {} if _cache is None else _cache
    vecs = [v for v in (_resolve(t, table, cache) for t in _tokens(doc)) if v is not None]
    if not vecs:
        doc_id = getattr(doc, "doc_id", "<text>")
        raise DataError(f"document {doc_id} has no token with a vector")
    return np.mean(vecs, axis=0)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.sqrt(np.dot(v, v))
    return v / n if n > 0 else np.zeros_like(v)


def extract_keywords(corpus: Corpus, table: EmbeddingTable, k: int = 25,
                     min_df: int = DEFAULT_MIN_DF) -> CandidateSet:
    """Rank corpus words by their mean cosine to the abstracts containing them.

    Candidates are tokens with a vector that occur in at least ``min_df``
    documents. Ties are broken by higher corpus frequency, then alphabetically.
    """
    if not corpus.documents or not table.word_vectors:
        raise ArgumentError("extract_keywords needs a non-empty corpus and table")
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    cache: dict = {}
    doc_units, postings, freq = [], defaultdict(list), Counter()
    for doc in corpus.documents:
        toks = _tokens(doc)
        try:
            emb = doc_embedding(toks, table, cache)
        except DataError:
            continue
        d = len(doc_units)
        doc_units.append(_unit(emb))
        for w in toks:
            if _resolve(w, table, cache) is not None:
                freq[w] += 1
        for w in dict.fromkeys(toks):
            if cache[w] is not None:
                postings[w].append(d)
    if not doc_units:
        raise DataError(f"no document in corpus {corpus.name!r} has a resolvable token")
    doc_mat = np.stack(doc_units)

    scored = []
    for w, docs in postings.items():
        if len(docs) < min_df:
            continue
        cos = (doc_mat[docs] * _unit(cache[w])).sum(axis=1)
        scored.append((float(cos.sum() / len(docs)), freq[w], w))
    scored.sort(key=lambda s: (-s[0], -s[1], s[2]))
    if len(scored) < k:
        warnings.warn(f"only {len(scored)} candidate keywords (requested {k})", stacklevel=2)
    top = scored[:k]
    return CandidateSet([w for _, _, w in top], [s for s, _, _ in top], corpus.name,
                        [f for _, f, _ in top])


def write_candidates(cands: CandidateSet, path, header: Sequence[str] = ()) -> None:
    """``rank<TAB>word<TAB>score`` lines, ranks starting at 1."""
    lines = [f"# {h}" for h in header]
    lines += [f"{i}\t{w}\t{s!r}" for i, (w, s) in enumerate(zip(cands.keywords, cands.scores), 1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_candidates(path, corpus_name: str = "") -> CandidateSet:
    words, scores = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected rank, word, score")
        words.append(parts[1])
        scores.append(float(parts[2]))
    if len(set(words)) != len(words):
        raise DataError(f"{path}: duplicate candidate keywords")
    return CandidateSet(words, scores, corpus_name or Path(path).stem)
