"""Acceptance criteria, one function each.

Run under pytest (one PASS/FAIL line per criterion in the terminal summary)
or directly: ``python tests/test_acceptance.py``.
"""

import math
import shutil
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from changeannot.cdnet import ENCODER_KINDS, ModelSpec, TrainConfig, build_model, forward, predict_mask, train
from changeannot.cdnet import dice_loss
from changeannot.cli import main as cli_main
from changeannot.evalmetrics import Confusion, dataset_metrics, precision_recall_f1_iou
from changeannot.synthgen import synthetic_corpus, synthetic_pairs
from changeannot.textcorpus import extract_keywords, tokenize, train_embeddings
from changeannot.textcorpus.corpus import Corpus, Document
from changeannot.vse import (
    VSETrainConfig, annotate, embed_pair, label_for_mask, load_vse, recall_at_k, train_vse,
)
from oracles import ranking_oracle
from test_textcorpus import check_against_oracle, random_case
from test_vse import cosine_loss_gradient_error, random_table

RESULTS: list[str] = []

# encoder, precision, recall, f1, mIoU as published
TABLE1 = [
    ("residual-18", 0.85, 0.77, 0.81, 0.68),
    ("residual-34", 0.83, 0.82, 0.83, 0.70),
    ("residual-50", 0.73, 0.76, 0.74, 0.59),
    ("vgg-11", 0.77, 0.86, 0.81, 0.68),
    ("vgg-16", 0.70, 0.84, 0.76, 0.62),
    ("vgg-19", 0.69, 0.83, 0.75, 0.60),
]

CD_EPOCHS = 10
VSE_EPOCHS = 10


def criterion_1():
    t0 = time.perf_counter()
    worst = max(abs(f1 / (2 - f1) - miou) for _, _, _, f1, miou in TABLE1)
    rng = np.random.default_rng(0)
    exact = True
    for _ in range(1000):
        tp, fp, fn, tn = (int(x) for x in rng.integers(0, 10_000, 4))
        m = precision_recall_f1_iou(Confusion(tp, fp, fn, tn))
        exact &= m.iou == 0.0 if m.f1 == 0.0 else abs(m.iou - m.f1 / (2 - m.f1)) <= 1e-12
    dt = time.perf_counter() - t0
    return worst <= 0.015 and exact and dt < 1.0, f"max |f1/(2-f1) - mIoU| = {worst:.4f}; identity exact={exact}; {dt:.2f}s"


def criterion_2():
    t0 = time.perf_counter()
    data = synthetic_pairs(250, size=64, seed=2024)
    train_set, test_set = data[:200], data[200:]
    model = build_model(ModelSpec("residual-34", 6, attention=True), seed=0)
    train(model, train_set, TrainConfig(epochs=CD_EPOCHS, batch_size=8, seed=0))
    preds = predict_mask(model, test_set)
    m = dataset_metrics(zip(preds, [p.mask for p in test_set]))
    dt = time.perf_counter() - t0
    ok = m.f1 >= 0.90 and m.iou >= m.f1 / (2 - m.f1) - 1e-9 and dt <= 15 * 60
    return ok, f"test f1={m.f1:.4f} iou={m.iou:.4f} after {CD_EPOCHS} epochs; {dt:.0f}s"


def criterion_3():
    pairs = synthetic_pairs(16, size=64, seed=3)
    rows, shapes_ok = [], True
    for kind in ENCODER_KINDS:
        model = build_model(ModelSpec(kind, 6), seed=0)
        train(model, pairs, TrainConfig(epochs=2, batch_size=8))
        out = forward(model, pairs)
        shapes_ok &= out.shape[:3] == (16, 64, 64) and out.shape[3] == 1
        m = dataset_metrics(zip(predict_mask(model, pairs), [p.mask for p in pairs]))
        rows.append((kind, m))
    ok = shapes_ok and len(rows) == 6 and all(math.isfinite(m.f1) for _, m in rows)
    return ok, f"{len(rows)} report rows; shapes preserved={shapes_ok}"


def criterion_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(20):
        docs, vectors = random_case(rng, n_docs=int(rng.integers(5, 31)), vocab=int(rng.integers(5, 301)))
        try:
            check_against_oracle(docs, vectors, k=int(rng.integers(1, 60)))
        except AssertionError:
            failures += 1
    dt = time.perf_counter() - t0
    return failures == 0 and dt < 10, f"{20 - failures}/20 corpora match the oracle; {dt:.2f}s"


def criterion_5():
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(100):
        n_words = int(rng.integers(1, 300))
        words = [f"c{i:04d}" for i in range(n_words)]
        table = random_table(rng, words, int(rng.integers(2, 32)))
        if n_words > 2:
            table.word_vectors[words[2]] = table.word_vectors[words[1]].copy()
        q = rng.normal(size=table.dim)
        n = int(rng.integers(1, n_words + 1))
        got = annotate(q, words, table, n=n).ranked
        want = ranking_oracle(q, words, table.word_vectors, n)
        same = [w for w, _ in got] == [w for w, _ in want] and all(
            abs(a - b) <= 1e-12 * max(1.0, abs(b)) for (_, a), (_, b) in zip(got, want))
        mismatches += not same
    # monotone recall for several query models over a 25-word candidate set
    words = ["deforestation", "forest"] + [f"d{i:02d}" for i in range(23)]
    table = random_table(rng, words, 16)
    labels = list(rng.choice(words[:2], 200))
    truth = np.stack([table.word_vectors[l] for l in labels]).astype(np.float64)
    monotone = True
    for noise in (0.0, 0.5, 1.0, 2.0, 100.0):
        rec = recall_at_k(truth + noise * rng.normal(size=truth.shape), labels, words, table)
        monotone &= rec[1] <= rec[5] <= rec[10]
    return mismatches == 0 and monotone, f"{100 - mismatches}/100 rankings match; monotone={monotone}"


def _corpus_from_records(records):
    docs = [Document(r["doc_id"], r["year"], r["title"], r["abstract"], tokenize(r["abstract"]))
            for r in records]
    return Corpus(docs, "synthetic")


def criterion_6():
    t0 = time.perf_counter()
    corpus = _corpus_from_records(synthetic_corpus(200, seed=6))
    table = train_embeddings(corpus, dim=300, epochs=5, min_count=3, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        extracted = extract_keywords(corpus, table, k=40).keywords
    labels_pair = ["deforestation", "forest"]
    candidates = labels_pair + [w for w in extracted if w not in labels_pair][:23]

    data = synthetic_pairs(300, size=64, seed=66, no_change_fraction=0.5)
    labelled = [(p, label_for_mask(p.mask)) for p in data]
    train_set, test_set = labelled[:200], labelled[200:]
    ckpt = train_vse(train_set, table, VSETrainConfig(epochs=VSE_EPOCHS, batch_size=8, seed=0),
                     ModelSpec("residual-34", 6))
    queries = embed_pair(load_vse(ckpt), [p for p, _ in test_set])
    truth = [l for _, l in test_set]
    two = recall_at_k(queries, truth, labels_pair, table, (1,))[1]
    many = recall_at_k(queries, truth, candidates, table, (1, 5, 10))
    dt = time.perf_counter() - t0
    ok = (len(candidates) == 25 and two >= 0.90 and two > 0.5 and many[1] >= 0.60
          and many[1] <= many[5] <= many[10] and dt <= 600)
    return ok, (f"two-candidate R@1={two:.3f}; 25 candidates R@1={many[1]:.3f} R@5={many[5]:.3f} "
                f"R@10={many[10]:.3f}; {dt:.0f}s")


def _dice_ref(p, t, eps=1.0):
    return 1.0 - (2.0 * np.sum(p * t) + eps) / (np.sum(p) + np.sum(t) + eps)


def criterion_7():
    rng = np.random.default_rng(7)
    worst_dice = 0.0
    h = 1e-6
    for _ in range(50):
        shape = tuple(int(s) for s in rng.integers(2, 6, 2))
        p = rng.uniform(0.05, 0.95, shape)
        t = rng.integers(0, 2, shape).astype(float)
        x = torch.tensor(p, requires_grad=True)
        dice_loss(x, torch.tensor(t)).backward()
        num = np.zeros_like(p)
        for idx in np.ndindex(shape):
            e = np.zeros_like(p)
            e[idx] = h
            num[idx] = (_dice_ref(p + e, t) - _dice_ref(p - e, t)) / (2 * h)
        worst_dice = max(worst_dice, np.abs(x.grad.numpy() - num).max() / np.abs(num).max())
    worst_cos = max(cosine_loss_gradient_error(rng) for _ in range(50))
    ok = worst_dice < 1e-4 and worst_cos < 1e-4
    return ok, f"max relative error dice={worst_dice:.2e} cosine={worst_cos:.2e}"


def _chain(root: Path) -> dict[str, bytes]:
    def run(*argv):
        code = cli_main([*argv, "--output-dir", str(root), "--experiment", "det"])
        if code != 0:
            raise RuntimeError(f"{argv[0]} exited with {code}")
    run("synth", "--size", "256", "--tile-size", "64", "--corpus-docs", "80")
    run("train-embed", "--dim", "32", "--epochs", "2", "--min-count", "2")
    run("extract-keywords")
    run("train-vse", "--encoder", "residual-18", "--epochs", "1", "--set", "vse.hidden=32", "--model-name", "m")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run("eval-vse", "--model-name", "m")
    exp = root / "det"
    files = ["tiles/manifest.tsv", "candidates/corpus.tsv", "reports/recall_m.tsv"]
    return {f: (exp / f).read_bytes() for f in files}


def criterion_8():
    tmp = Path(tempfile.mkdtemp())
    try:
        first = _chain(tmp / "run")
        shutil.rmtree(tmp / "run")
        second = _chain(tmp / "run")
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    same = [f for f in first if first[f] == second[f]]
    return len(same) == len(first), f"identical across two runs: {', '.join(same) or 'none'}"


CRITERIA = {
    1: ("metric identity vs published table", criterion_1),
    2: ("change detection at desk scale", criterion_2),
    3: ("encoder sweep parity", criterion_3),
    4: ("keyword extraction oracle equivalence", criterion_4),
    5: ("retrieval oracle and monotonicity", criterion_5),
    6: ("VSE desk-scale learning", criterion_6),
    7: ("gradient checks", criterion_7),
    8: ("determinism", criterion_8),
}


def run_criterion(num: int) -> tuple[bool, str]:
    name, fn = CRITERIA[num]
    ok, detail = fn()
    line = f"{'PASS' if ok else 'FAIL'} criterion {num} ({name}): {detail}"
    RESULTS.append(line)
    print(line)
    return ok, line


@pytest.mark.slow
@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num):
    ok, line = run_criterion(num)
    assert ok, line


if __name__ == "__main__":
    outcomes = [run_criterion(n)[0] for n in sorted(CRITERIA)]
    sys.exit(0 if all(outcomes) else 1)
