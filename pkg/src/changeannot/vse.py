"""Visual-semantic embedding of image pairs and keyword retrieval.

A change-detection encoder plus a small regression head maps a stacked image
pair to a vector in word-embedding space; annotations are the candidate
keywords whose vectors are closest to it by cosine similarity.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .cdnet.model import ModelSpec, build_encoder, check_input
from .cdnet.training import to_tensor
from .checkpoint import Checkpoint
from .errors import ArgumentError, DataError, TrainingError, VocabularyError
from .imagery import StackedPair
from .textcorpus.embeddings import EmbeddingTable, vector_for
from .textcorpus.keywords import CandidateSet

log = logging.getLogger(__name__)

POSITIVE_LABEL = "deforestation"
NEGATIVE_LABEL = "forest"


@dataclass
class VSETrainConfig:
    epochs: int = 40
    learning_rate: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    dropout_rate: float = 0.5
    hidden: int = 512

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ArgumentError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.batch_size < 2:
            raise ArgumentError("batch_size must be >= 2 (the head uses batch normalisation)")


class VSEModel(nn.Module):
    def __init__(self, encoder_spec: ModelSpec, out_dim: int, hidden: int = 512, dropout: float = 0.5):
        super().__init__()
        self.encoder_spec = encoder_spec
        self.out_dim = out_dim
        self.encoder = build_encoder(encoder_spec.encoder_kind, encoder_spec.in_channels)
        self.head = nn.Sequential(
            nn.AdaptiveMaxPool2d(1),
            nn.Flatten(),
            nn.Linear(self.encoder.channels[-1], hidden),
            nn.BatchNorm1d(hidden),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
            nn.Linear(hidden, out_dim),
        )

    def encode(self, x):
        check_input(x, self.encoder_spec.in_channels)
        return self.encoder(x)

    def forward(self, x):
        return self.head(self.encode(x)[-1])

    def spec_dict(self) -> dict:
        lin1, drop = self.head[2], self.head[5]
        return {"encoder": self.encoder_spec.to_dict(), "out_dim": self.out_dim,
                "hidden": lin1.out_features, "dropout": drop.p}


def build_vse(encoder_spec: ModelSpec, out_dim: int, hidden: int = 512, dropout: float = 0.5,
              seed: int | None = None) -> VSEModel:
    if seed is None:
        return VSEModel(encoder_spec, out_dim, hidden, dropout)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return VSEModel(encoder_spec, out_dim, hidden, dropout)


# --------------------------------------------------------------------------
# Labels and loss


def label_for_mask(mask: np.ndarray, min_positive_fraction: float = 0.0,
                   positive: str = POSITIVE_LABEL, negative: str = NEGATIVE_LABEL) -> str:
    """Pair-level label: positive iff the mask has a changed pixel (and enough of them)."""
    mask = np.asarray(mask)
    n_pos = int(np.count_nonzero(mask))
    if n_pos >= 1 and n_pos / mask.size >= min_positive_fraction:
        return positive
    return negative


def label_vector(label: str, table: EmbeddingTable) -> np.ndarray:
    """L2-normalised regression target for a label word."""
    v = np.asarray(vector_for(label, table), dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise VocabularyError(f"label {label!r} has a zero vector in table {table.source}")
    return v / n


def cosine_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean of ``1 - cos(pred, target)`` over the leading dims; cos with 0 is 0."""
    if pred.shape[-1] != target.shape[-1]:
        raise ArgumentError(f"dim mismatch: {pred.shape[-1]} vs {target.shape[-1]}")
    dot = (pred * target).sum(-1)
    norms = pred.norm(dim=-1) * target.norm(dim=-1)
    safe = torch.where(norms > 0, norms, torch.ones_like(norms))
    cos = torch.where(norms > 0, dot / safe, torch.zeros_like(dot))
    return (1.0 - cos).mean()


# --------------------------------------------------------------------------
# Training and inference


def train_vse(pairs_with_labels: Sequence[tuple[StackedPair, str]], table: EmbeddingTable,
              cfg: VSETrainConfig, encoder_spec: ModelSpec | None = None,
              init_encoder: dict | None = None, extra: dict | None = None) -> Checkpoint:
    """Regress image pairs onto their label vectors with a cosine loss.

    The encoder starts from random weights unless ``init_encoder`` (an encoder
    state dict, e.g. from a change-detection checkpoint) is given.
    """
    if len(pairs_with_labels) < 2:
        raise ArgumentError("train_vse needs at least two labelled pairs")
    labels = [lab for _, lab in pairs_with_labels]
    missing = sorted({lab for lab in set(labels) if not table.has_vector(lab)})
    if missing:
        raise VocabularyError(f"labels without vectors in table {table.source}: {', '.join(missing)}")
    targets = {lab: label_vector(lab, table) for lab in set(labels)}

    pairs = [p for p, _ in pairs_with_labels]
    encoder_spec = encoder_spec or ModelSpec(in_channels=pairs[0].input.shape[-1])
    model = build_vse(encoder_spec, table.dim, cfg.hidden, cfg.dropout_rate, seed=cfg.seed)
    if init_encoder is not None:
        model.encoder.load_state_dict(init_encoder)

    x_all = to_tensor(pairs)
    y_all = torch.from_numpy(np.stack([targets[lab] for lab in labels]).astype(np.float32))
    n = len(pairs)

    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    history: list[float] = []
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(n, generator=gen)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                continue  # batch norm needs two samples
            loss = cosine_loss(model(x_all[idx]), y_all[idx])
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite cosine loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        history.append(total / seen)
        log.info("vse epoch %d/%d cosine loss %.5f", epoch, cfg.epochs, history[-1])
    model.eval()
    meta = {"table_source": table.source, "labels": sorted(targets)}
    meta.update(extra or {})
    return Checkpoint(
        kind="vse",
        model_spec=model.spec_dict(),
        train_config=asdict(cfg),
        history=history,
        weights={k: v.detach().clone() for k, v in model.state_dict().items()},
        extra=meta,
    )


def load_vse(ckpt: Checkpoint) -> VSEModel:
    if ckpt.kind != "vse":
        raise DataError(f"expected a vse checkpoint, got {ckpt.kind!r}")
    s = ckpt.model_spec
    model = VSEModel(ModelSpec.from_dict(s["encoder"]), s["out_dim"], s["hidden"], s["dropout"])
    model.load_state_dict(ckpt.weights)
    return model.eval()


@torch.no_grad()
def embed_pair(model: VSEModel, pair, batch_size: int = 32) -> np.ndarray:
    """Semantic query vector(s): ``dim`` for one pair, ``N x dim`` for a batch."""
    model.eval()
    x = to_tensor(pair)
    out = torch.cat([model(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]).double().numpy()
    single = isinstance(pair, StackedPair) or (not isinstance(pair, (list, tuple)) and np.ndim(pair) == 3)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Retrieval


class AnnotationResult(NamedTuple):
    tile_id: str
    ranked: list[tuple[str, float]]
    model_name: str = ""


class RecallRow(NamedTuple):
    model: str
    candidates: str
    k: int
    recall: float


def candidate_matrix(candidates: CandidateSet | Sequence[str], table: EmbeddingTable) -> tuple[list[str], np.ndarray]:
    words = list(candidates)
    if not words:
        raise ArgumentError("candidate set is empty")
    bad = [w for w in words if not table.has_vector(w)]
    if bad:
        raise VocabularyError(f"candidates without vectors in table {table.source}: {', '.join(bad)}")
    return words, np.stack([np.asarray(vector_for(w, table), dtype=np.float64) for w in words])


def _cosines(query: np.ndarray, mat: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape[-1] != mat.shape[1]:
        raise ArgumentError(f"query dim {q.shape[-1]} != table dim {mat.shape[1]}")
    dots = (mat * q).sum(axis=1)
    den = np.sqrt((mat * mat).sum(axis=1)) * np.sqrt((q * q).sum())
    return np.divide(dots, den, out=np.zeros_like(dots), where=den > 0)


def _rank(query, words: list[str], mat: np.ndarray, n: int) -> list[tuple[str, float]]:
    cos = _cosines(query, mat)
    order = sorted(range(len(words)), key=lambda i: (-cos[i], words[i]))
    return [(words[i], float(cos[i])) for i in order[:n]]


def annotate(query, candidates: CandidateSet | Sequence[str], table: EmbeddingTable, n: int = 5,
             tile_id: str = "", model_name: str = "") -> AnnotationResult:
    """Top-``n`` candidates by cosine to the query; ties go alphabetical."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    words, mat = candidate_matrix(candidates, table)
    return AnnotationResult(tile_id, _rank(query, words, mat, n), model_name)


def recall_at_k(queries: np.ndarray, labels: Sequence[str], candidates, table: EmbeddingTable,
                ks: Sequence[int] = (1, 5, 10)) -> dict[int, float]:
    """Mean hit rate of the true label within the top-k candidates per query."""
    if len(labels) == 0:
        raise ArgumentError("empty test set")
    if len(queries) != len(labels):
        raise ArgumentError(f"{len(queries)} queries for {len(labels)} labels")
    words, mat = candidate_matrix(candidates, table)
    absent = sorted(set(labels) - set(words))
    if absent:
        warnings.warn(f"true labels not among candidates (counted as misses): {', '.join(absent)}",
                      stacklevel=2)
    kmax = max(ks)
    hits = {k: 0 for k in ks}
    for q, lab in zip(queries, labels):
        top = [w for w, _ in _rank(q, words, mat, kmax)]
        for k in ks:
            hits[k] += lab in top[:k]
    return {k: hits[k] / len(labels) for k in ks}


def evaluate_retrieval(model: VSEModel, test_pairs: Sequence[tuple[StackedPair, str]],
                       candidates, table: EmbeddingTable, ks: Sequence[int] = (1, 5, 10),
                       model_name: str = "vse", candidates_name: str | None = None) -> list[RecallRow]:
    if not test_pairs:
        raise ArgumentError("empty test set")
    queries = embed_pair(model, [p for p, _ in test_pairs])
    rec = recall_at_k(queries, [lab for _, lab in test_pairs], candidates, table, ks)
    name = candidates_name or getattr(candidates, "corpus_name", "") or f"{len(list(candidates))}-candidates"
    return [RecallRow(model_name, name, k, rec[k]) for k in ks]


# --------------------------------------------------------------------------
# Persistence


def write_annotations(results: Sequence[AnnotationResult], path, header: Sequence[str] = ()) -> None:
    lines = [f"# {h}" for h in header]
    for r in results:
        lines.append(json.dumps({
            "tile_id": r.tile_id,
            "model_name": r.model_name,
            "annotations": [{"keyword": w, "score": s} for w, s in r.ranked],
        }))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_annotations(path) -> list[AnnotationResult]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        rec = json.loads(line)
        out.append(AnnotationResult(rec["tile_id"],
                                    [(a["keyword"], a["score"]) for a in rec["annotations"]],
                                    rec.get("model_name", "")))
    return out


def write_recall_report(rows: Sequence[RecallRow], path, header: Sequence[str] = ()) -> None:
    lines = [f"# {h}" for h in header] + ["model\tcandidates\tk\trecall"]
    lines += [f"{r.model}\t{r.candidates}\t{r.k}\t{r.recall:.6f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
