"""Word-embedding tables: subword skip-gram training, import/export, lookup."""

from __future__ import annotations

import contextlib
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ArgumentError, DataError, VocabularyError
from .corpus import Corpus

log = logging.getLogger(__name__)


@dataclass
class EmbeddingTable:
    """Word -> vector map, optionally backed by character n-gram vectors.

    For trained tables ``word_vectors[w]`` is the composed vector (the
    whole-word input vector plus the sum of the word's n-gram vectors) and
    ``whole_word_vectors[w]`` keeps the whole-word part alone.
    """

    dim: int
    word_vectors: dict[str, np.ndarray]
    subword_vectors: dict[str, np.ndarray] | None = None
    source: str = ""
    whole_word_vectors: dict[str, np.ndarray] | None = None
    ngram_range: tuple[int, int] = (3, 6)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.word_vectors)

    def __contains__(self, word):
        return word in self.word_vectors

    def vector_for(self, word: str) -> np.ndarray:
        return vector_for(word, self)

    def has_vector(self, word: str) -> bool:
        try:
            vector_for(word, self)
        except VocabularyError:
            return False
        return True


def char_ngrams(word: str, ngram_range: tuple[int, int] = (3, 6)) -> list[str]:
    """Character n-grams of ``<word>``, excluding the bracketed word itself."""
    lo, hi = ngram_range
    w = f"<{word}>"
    grams = []
    for n in range(lo, hi + 1):
        for i in range(len(w) - n + 1):
            g = w[i:i + n]
            if g != w:
                grams.append(g)
    return grams


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = math.sqrt(float(np.dot(u, u))), math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v)) / (nu * nv)


def vector_for(word: str, table: EmbeddingTable) -> np.ndarray:
    """Stored vector, or the n-gram sum for out-of-vocabulary words.

    Raises :class:`VocabularyError` if the word cannot be resolved.
    """
    if not word:
        raise ArgumentError("word must be non-empty")
    word = word.lower()
    vec = table.word_vectors.get(word)
    if vec is not None:
        return vec
    if table.subword_vectors:
        known = [table.subword_vectors[g] for g in char_ngrams(word, table.ngram_range)
                 if g in table.subword_vectors]
        if known:
            return np.sum(known, axis=0, dtype=np.float64).astype(np.float32)
    raise VocabularyError(f"no vector for {word!r} in table {table.source or '<unnamed>'}")


# --------------------------------------------------------------------------
# Training


@contextlib.contextmanager
def _torch_threads(n: int | None):
    if n is None:
        yield
        return
    prev = torch.get_num_threads()
    torch.set_num_threads(n)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


def _skipgram_pairs(sentences: list[np.ndarray], window: int, rng: np.random.Generator) -> np.ndarray:
    """(center, context) id pairs with a per-position window drawn from [1, window]."""
    centers, contexts = [], []
    for sent in sentences:
        n = len(sent)
        if n < 2:
            continue
        spans = rng.integers(1, window + 1, size=n)
        for i in range(n):
            b = int(spans[i])
            lo, hi = max(0, i - b), min(n, i + b + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(sent[i])
                    contexts.append(sent[j])
    return np.array([centers, contexts], dtype=np.int64).reshape(2, -1)


def train_embeddings(corpus: Corpus, dim: int = 300, window: int = 5, negatives: int = 5,
                     min_count: int = 5, ngram_range: tuple[int, int] = (3, 6), epochs: int = 5,
                     seed: int = 0, learning_rate: float = 0.01, batch_size: int = 512,
                     threads: int | None = 1) -> EmbeddingTable:
    """Subword skip-gram with negative sampling.

    A word's input representation is its whole-word vector plus the sum of
    its character n-gram vectors; context words use separate output vectors.
    With ``threads=1`` the result is a deterministic function of the seed.
    """
    if dim < 1 or window < 1 or negatives < 0 or epochs < 1:
        raise ArgumentError("dim, window and epochs must be >= 1 and negatives >= 0")
    docs = [d.tokens for d in corpus.documents]
    total = sum(len(t) for t in docs)
    if total < min_count:
        raise DataError(f"corpus has {total} tokens, fewer than min_count={min_count}")
    counts = Counter(t for toks in docs for t in toks)
    vocab = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not vocab:
        raise DataError(f"vocabulary is empty after applying min_count={min_count}")
    word_id = {w: i for i, w in enumerate(vocab)}
    word_grams = [char_ngrams(w, ngram_range) for w in vocab]
    ngrams = sorted({g for grams in word_grams for g in grams})
    gram_id = {g: i for i, g in enumerate(ngrams)}
    nw, ng = len(vocab), len(ngrams)

    # row k of `rows` lists the input-table rows summed for word k; padding uses the final row
    pad = nw + ng
    width = 1 + max(len(g) for g in word_grams)
    rows = np.full((nw, width), pad, dtype=np.int64)
    for k, grams in enumerate(word_grams):
        rows[k, 0] = k
        rows[k, 1:1 + len(grams)] = [nw + gram_id[g] for g in grams]
    rows_t = torch.from_numpy(rows)

    sentences = [np.array([word_id[t] for t in toks if t in word_id], dtype=np.int64) for toks in docs]
    freq = np.array([counts[w] for w in vocab], dtype=np.float64) ** 0.75
    noise = torch.from_numpy(freq / freq.sum())

    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    with _torch_threads(threads), torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        inp = torch.nn.Embedding(pad + 1, dim, padding_idx=pad, sparse=True)
        out = torch.nn.Embedding(nw, dim, sparse=True)
        with torch.no_grad():
            inp.weight.uniform_(-1.0 / dim, 1.0 / dim, generator=gen)
            inp.weight[pad].zero_()
            out.weight.zero_()
        opt = torch.optim.SparseAdam(list(inp.parameters()) + list(out.parameters()), lr=learning_rate)
        history = []
        for epoch in range(1, epochs + 1):
            pairs = _skipgram_pairs(sentences, window, rng)
            if pairs.shape[1] == 0:
                raise DataError("no skip-gram pairs: every document has fewer than two vocabulary words")
            order = torch.from_numpy(rng.permutation(pairs.shape[1]))
            pairs_t = torch.from_numpy(pairs)[:, order]
            total_loss = 0.0
            for s in range(0, pairs_t.shape[1], batch_size):
                centers, ctx = pairs_t[0, s:s + batch_size], pairs_t[1, s:s + batch_size]
                u = inp(rows_t[centers]).sum(dim=1)
                pos = (u * out(ctx)).sum(-1)
                loss = -F.logsigmoid(pos)
                if negatives:
                    neg_ids = torch.multinomial(noise, len(ctx) * negatives, replacement=True, generator=gen)
                    neg = torch.bmm(out(neg_ids.view(len(ctx), negatives)), u.unsqueeze(-1)).squeeze(-1)
                    loss = loss - F.logsigmoid(-neg).sum(-1)
                loss = loss.mean()
                opt.zero_grad()
                loss.backward()
                opt.step()
                total_loss += loss.item() * len(ctx)
            history.append(total_loss / pairs_t.shape[1])
            log.info("embedding epoch %d/%d loss %.4f", epoch, epochs, history[-1])
        weights = inp.weight.detach().numpy().astype(np.float32)

    whole = {w: weights[k].copy() for k, w in enumerate(vocab)}
    subword = {g: weights[nw + i].copy() for i, g in enumerate(ngrams)}
    composed = {}
    for k, w in enumerate(vocab):
        composed[w] = weights[rows[k]].sum(axis=0, dtype=np.float64).astype(np.float32)
    meta = {
        "dim": dim, "window": window, "negatives": negatives, "min_count": min_count,
        "ngram_range": list(ngram_range), "epochs": epochs, "seed": seed,
        "learning_rate": learning_rate, "batch_size": batch_size,
        "deterministic": threads == 1, "history": history,
    }
    return EmbeddingTable(dim, composed, subword, f"trained:{corpus.name}", whole,
                          tuple(ngram_range), meta)


# --------------------------------------------------------------------------
# Persistence


def load_embedding_table(path, restrict_to: Iterable[str] | None = None) -> EmbeddingTable:
    """Load a table from ``.npz`` (trained, with subwords) or the text format.

    The text format has a ``<vocab_size> <dim>`` header line followed by one
    ``word v1 ... v_dim`` line per word. Imported text tables are static.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"embedding table not found: {path}")
    if path.suffix == ".npz":
        return _load_npz(path)
    keep = {w.lower() for w in restrict_to} if restrict_to is not None else None
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8", errors="replace") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: expected '<vocab_size> <dim>' header")
        try:
            vocab_size, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise DataError(f"{path}:1: bad header {header}") from exc
        n_lines = 0
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) <= 1 and not parts[0]:
                continue
            n_lines += 1
            if len(parts) - 1 != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            word = parts[0].lower()
            if word in vectors or (keep is not None and word not in keep):
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric value") from exc
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            vectors[word] = vec
    if n_lines != vocab_size:
        log.warning("%s: header announces %d words, file has %d", path, vocab_size, n_lines)
    return EmbeddingTable(dim, vectors, None, str(path))


def save_text_table(table: EmbeddingTable, path) -> None:
    """Write word vectors in the text format (subwords are not exported)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.word_vectors)} {table.dim}\n")
        for w, v in table.word_vectors.items():
            fh.write(w + " " + " ".join(f"{x:.9g}" for x in v) + "\n")


def save_table(table: EmbeddingTable, path) -> None:
    """Write the full table (including n-gram vectors) as ``.npz``."""
    words = list(table.word_vectors)
    arrays = {
        "words": np.array(words, dtype=str),
        "word_matrix": np.stack([table.word_vectors[w] for w in words]).astype(np.float32),
        "meta": np.array(json.dumps({
            "dim": table.dim, "source": table.source,
            "ngram_range": list(table.ngram_range), "metadata": table.metadata,
        }, sort_keys=True)),
    }
    if table.whole_word_vectors is not None:
        arrays["whole_matrix"] = np.stack([table.whole_word_vectors[w] for w in words]).astype(np.float32)
    if table.subword_vectors:
        grams = list(table.subword_vectors)
        arrays["ngrams"] = np.array(grams, dtype=str)
        arrays["ngram_matrix"] = np.stack([table.subword_vectors[g] for g in grams]).astype(np.float32)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _load_npz(path: Path) -> EmbeddingTable:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        words = [str(w) for w in z["words"]]
        mat = z["word_matrix"]
        if mat.shape[1] != meta["dim"]:
            raise DataError(f"{path}: matrix width {mat.shape[1]} != dim {meta['dim']}")
        word_vectors = {w: mat[i].copy() for i, w in enumerate(words)}
        whole = None
        if "whole_matrix" in z:
            whole = {w: z["whole_matrix"][i].copy() for i, w in enumerate(words)}
        subword = None
        if "ngrams" in z:
            gm = z["ngram_matrix"]
            subword = {str(g): gm[i].copy() for i, g in enumerate(z["ngrams"])}
    return EmbeddingTable(meta["dim"], word_vectors, subword, meta.get("source", str(path)), whole,
                          tuple(meta.get("ngram_range", (3, 6))), meta.get("metadata", {}))
