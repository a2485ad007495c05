"""Abstract corpora: loading and tokenisation."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from ..errors import DataError

log = logging.getLogger(__name__)

STOPWORDS = frozenset(ENGLISH_STOP_WORDS)
MIN_TOKEN_LEN = 3
_NON_ALPHA = re.compile(r"[^a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-letters, drop short tokens and English stopwords."""
    return [t for t in _NON_ALPHA.split(text.lower())
            if len(t) >= MIN_TOKEN_LEN and t not in STOPWORDS]


@dataclass
class Document:
    doc_id: str
    year: int | None
    title: str
    abstract: str
    tokens: list[str] = field(default_factory=list, repr=False)


@dataclass
class Corpus:
    documents: list[Document]
    name: str = ""
    dropped: int = 0

    def __len__(self):
        return len(self.documents)

    def token_count(self) -> int:
        return sum(len(d.tokens) for d in self.documents)


def _records_from_file(path: Path):
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON array: {exc}") from exc
        yield from ((path, i, r) for i, r in enumerate(data, 1))
        return
    if path.suffix == ".json" and stripped.startswith("{"):
        try:
            yield path, 1, json.loads(text)
            return
        except json.JSONDecodeError:
            pass  # fall back to one record per line
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            yield path, lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            log.warning("%s:%d: skipping unparseable record (%s)", path, lineno, exc)


def load_corpus(path, name: str | None = None) -> Corpus:
    """Load abstracts from a JSON-lines file or a directory of record files.

    Each record carries ``doc_id``, ``year``, ``title`` and ``abstract``.
    Records whose abstract is missing or empty after tokenisation are dropped
    and counted in :attr:`Corpus.dropped`.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix in (".json", ".jsonl"))
    elif path.is_file():
        files = [path]
    else:
        raise FileNotFoundError(f"corpus not found: {path}")

    docs, seen, dropped, parsed = [], set(), 0, 0
    for f in files:
        for src, lineno, rec in _records_from_file(f):
            if not isinstance(rec, dict) or "doc_id" not in rec:
                log.warning("%s:%d: record without doc_id skipped", src, lineno)
                continue
            parsed += 1
            doc_id = str(rec["doc_id"])
            if doc_id in seen:
                raise DataError(f"{src}:{lineno}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            abstract = rec.get("abstract") or ""
            tokens = tokenize(abstract)
            if not tokens:
                dropped += 1
                continue
            year = rec.get("year")
            docs.append(Document(doc_id, int(year) if year not in (None, "") else None,
                                 rec.get("title") or "", abstract, tokens))
    if not parsed:
        raise DataError(f"no parseable records in {path}")
    if not docs:
        raise DataError(f"{path}: every record had an empty abstract")
    if dropped:
        log.warning("%s: dropped %d record(s) with empty abstracts", path, dropped)
    return Corpus(docs, name if name is not None else path.stem, dropped)


def write_corpus(corpus_or_docs, path) -> None:
    """Write documents as JSON lines (the format :func:`load_corpus` reads)."""
    docs = corpus_or_docs.documents if isinstance(corpus_or_docs, Corpus) else corpus_or_docs
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            if isinstance(d, Document):
                d = {"doc_id": d.doc_id, "year": d.year, "title": d.title, "abstract": d.abstract}
            fh.write(json.dumps(d, sort_keys=True) + "\n")
