import json
import warnings

import numpy as np
import pytest

from changeannot.errors import ArgumentError, DataError, VocabularyError
from changeannot.textcorpus import (
    CandidateSet, EmbeddingTable, char_ngrams, cosine, doc_embedding, extract_keywords, load_corpus,
    load_embedding_table, read_candidates, save_table, save_text_table, tokenize, train_embeddings,
    vector_for, write_candidates,
)
from conftest import make_corpus
from oracles import keyword_oracle


@pytest.mark.parametrize("text,expected", [
    ("Deforestation in the Amazon.", ["deforestation", "amazon"]),
    ("CO2 flux, 2019", ["flux"]),
    ("", []),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def _records(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


def test_load_corpus(tmp_path):
    rows = [{"doc_id": str(i), "year": 2020, "title": "t", "abstract": f"forest loss study {i}"}
            for i in range(3)]
    corpus = load_corpus(_records(tmp_path / "c.jsonl", rows))
    assert len(corpus) == 3 and corpus.dropped == 0
    assert corpus.documents[0].tokens == ["forest", "loss", "study"]

    rows.append({"doc_id": "9", "year": 2020, "title": "no abstract"})
    assert load_corpus(_records(tmp_path / "d.jsonl", rows)).dropped == 1

    rows.append(dict(rows[0]))
    with pytest.raises(DataError, match="duplicate"):
        load_corpus(_records(tmp_path / "e.jsonl", rows))

    (tmp_path / "junk.jsonl").write_text("not json\n")
    with pytest.raises(DataError):
        load_corpus(tmp_path / "junk.jsonl")


def test_load_corpus_directory(tmp_path):
    d = tmp_path / "docs"
    d.mkdir()
    for i in range(2):
        (d / f"{i}.json").write_text(json.dumps({"doc_id": f"x{i}", "year": 2001, "title": "",
                                                 "abstract": "amazon rainforest"}))
    assert [doc.doc_id for doc in load_corpus(d).documents] == ["x0", "x1"]


def test_char_ngrams_and_cosine():
    assert char_ngrams("cut", (3, 3)) == ["<cu", "cut", "ut>"]
    assert "<cut>" not in char_ngrams("cut", (3, 6))
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.normal(size=7)
        assert cosine(u, u) == pytest.approx(1.0, abs=1e-12)
        assert cosine(u, np.zeros(7)) == 0.0


def _topic_corpus(n_docs=120, seed=0):
    rng = np.random.default_rng(seed)
    axe = "timber logging chainsaw sawmill lumber tractor".split()
    water = "river stream fish boat flood delta".split()
    abstracts = []
    for i in range(n_docs):
        if i % 2 == 0:
            words = list(rng.choice(axe, 12)) + ["cut", "clear"] * 2
        else:
            words = list(rng.choice(water, 12)) + ["river"] * 2
        rng.shuffle(words)
        abstracts.append(" ".join(words))
    return make_corpus(abstracts, "topics")


@pytest.fixture(scope="module")
def trained_table():
    return train_embeddings(_topic_corpus(), dim=50, epochs=5, min_count=2, seed=0)


def test_cooccurrence_similarity(trained_table):
    t = trained_table
    assert cosine(vector_for("cut", t), vector_for("clear", t)) > cosine(vector_for("cut", t), vector_for("river", t))


def test_trained_dim_300():
    table = train_embeddings(_topic_corpus(40), dim=300, epochs=1, min_count=2, seed=0)
    assert table.dim == 300
    assert all(v.shape == (300,) and np.all(np.isfinite(v)) for v in table.word_vectors.values())


def test_training_is_deterministic():
    a = train_embeddings(_topic_corpus(30), dim=16, epochs=1, min_count=2, seed=3)
    b = train_embeddings(_topic_corpus(30), dim=16, epochs=1, min_count=2, seed=3)
    assert a.word_vectors.keys() == b.word_vectors.keys()
    for w in a.word_vectors:
        np.testing.assert_array_equal(a.word_vectors[w], b.word_vectors[w])


def test_empty_vocabulary():
    with pytest.raises(DataError):
        train_embeddings(_topic_corpus(10), dim=8, min_count=10**9)


def test_subword_self_consistency(trained_table):
    t = trained_table
    for w in ("cut", "timber", "river"):
        grams = [t.subword_vectors[g] for g in char_ngrams(w, t.ngram_range) if g in t.subword_vectors]
        expect = t.whole_word_vectors[w].astype(np.float64) + np.sum(grams, axis=0, dtype=np.float64)
        np.testing.assert_allclose(vector_for(w, t), expect, rtol=1e-5, atol=1e-6)


def test_oov_vector_is_ngram_sum(trained_table):
    t = trained_table
    word = "timbers"
    assert word not in t.word_vectors
    grams = [t.subword_vectors[g] for g in char_ngrams(word, t.ngram_range) if g in t.subword_vectors]
    assert grams
    v = vector_for(word, t)
    assert v.shape == (50,) and np.all(np.isfinite(v))
    np.testing.assert_allclose(v, np.sum(grams, axis=0, dtype=np.float64), rtol=1e-6, atol=1e-6)


def test_load_text_table(tmp_path):
    p = tmp_path / "t.vec"
    p.write_text("2 4\nforest 1 0 0 0\namazon 0 1 0 0.5\n")
    t = load_embedding_table(p)
    assert len(t) == 2 and t.dim == 4 and t.subword_vectors is None
    np.testing.assert_array_equal(vector_for("forest", t), [1, 0, 0, 0])
    with pytest.raises(VocabularyError):
        vector_for("forests", t)

    bad = tmp_path / "bad.vec"
    bad.write_text("2 300\nok " + " ".join(["0.1"] * 300) + "\nshort " + " ".join(["0.1"] * 299) + "\n")
    with pytest.raises(DataError, match=":3:"):
        load_embedding_table(bad)


def test_table_768_is_usable(tmp_path):
    rng = np.random.default_rng(0)
    words = ["forest", "deforestation", "amazon", "river"]
    table = EmbeddingTable(768, {w: rng.normal(size=768).astype(np.float32) for w in words}, source="bert")
    save_text_table(table, tmp_path / "b.vec")
    again = load_embedding_table(tmp_path / "b.vec")
    assert again.dim == 768
    corpus = make_corpus(["forest amazon river"] * 3 + ["deforestation amazon"] * 3)
    cands = extract_keywords(corpus, again, k=4)
    assert sorted(cands.keywords) == sorted(words)


def test_npz_roundtrip(trained_table, tmp_path):
    save_table(trained_table, tmp_path / "t.npz")
    again = load_embedding_table(tmp_path / "t.npz")
    for w in ("cut", "timbers"):
        np.testing.assert_array_equal(vector_for(w, again), vector_for(w, trained_table))


def _static(vectors):
    return EmbeddingTable(len(next(iter(vectors.values()))),
                          {w: np.asarray(v, np.float32) for w, v in vectors.items()})


def test_doc_embedding():
    t = _static({"forest": [1.0, 0.0], "amazon": [0.0, 3.0]})
    np.testing.assert_array_equal(doc_embedding("forest", t), [1.0, 0.0])
    np.testing.assert_allclose(doc_embedding("forest amazon", t), [0.5, 1.5])
    with pytest.raises(DataError):
        doc_embedding("the and of it", t)
    with pytest.raises(DataError):
        doc_embedding("unknown words", t)


def test_deforestation_ranks_first():
    rng = np.random.default_rng(0)
    noise = [f"noise{c}" for c in "abcdefghijklmnop"]
    vectors = {w: rng.normal(size=8) for w in ["deforestation", "amazon"] + noise}
    docs = ["deforestation deforestation amazon"] * 6
    docs += [" ".join(rng.choice(noise, 30)) for _ in range(10)]
    cands = extract_keywords(make_corpus(docs), _static(vectors), k=3)
    assert cands.keywords[0] == "deforestation"
    want = keyword_oracle([tokenize(d) for d in docs], vectors, 3)
    assert cands.keywords == [w for _, _, w in want]


def test_too_few_candidates_warns():
    t = _static({"forest": [1.0, 0.0], "amazon": [0.0, 1.0]})
    corpus = make_corpus(["forest amazon"] * 3)
    with pytest.warns(UserWarning, match="only 2"):
        cands = extract_keywords(corpus, t, k=25)
    assert len(cands) == 2
    with pytest.raises(ArgumentError):
        extract_keywords(corpus, t, k=0)


def test_min_df_filter():
    t = _static({"forest": [1.0, 0.0], "amazon": [0.0, 1.0]})
    corpus = make_corpus(["forest amazon", "forest", "forest"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert extract_keywords(corpus, t, k=5).keywords == ["forest"]


def random_case(rng, n_docs=None, vocab=None, dim=None, tie_copies=True):
    n_docs = n_docs or int(rng.integers(5, 31))
    vocab_size = vocab or int(rng.integers(5, 301))
    dim = dim or int(rng.integers(2, 17))
    words = [f"w{chr(97 + i % 26)}{chr(97 + i // 26 % 26)}x" for i in range(vocab_size)]
    vectors = {w: rng.normal(size=dim).astype(np.float32) for w in words}
    if tie_copies and vocab_size > 3:
        # identical vectors and identical document sets force exact score ties
        vectors[words[1]] = vectors[words[0]].copy()
    docs = []
    for _ in range(n_docs):
        toks = list(rng.choice(words, int(rng.integers(1, 40))))
        if tie_copies and vocab_size > 3 and words[0] in toks:
            toks.append(words[1])
        docs.append(toks)
    return docs, vectors


def check_against_oracle(docs, vectors, k, min_df=3):
    corpus = make_corpus([" ".join(d) for d in docs])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = extract_keywords(corpus, _static(vectors), k=k, min_df=min_df)
    want = keyword_oracle([doc.tokens for doc in corpus.documents], vectors, k, min_df)
    assert got.keywords == [w for _, _, w in want]
    assert got.frequencies == [f for _, f, _ in want]
    np.testing.assert_allclose(got.scores, [s for s, _, _ in want], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("seed", range(8))
def test_keywords_match_bruteforce_oracle(seed):
    rng = np.random.default_rng(seed)
    docs, vectors = random_case(rng)
    check_against_oracle(docs, vectors, k=int(rng.integers(1, 40)))


def test_tie_breaks():
    v = [1.0, 2.0]
    vectors = {"beta": v, "alpha": v, "gamma": v, "far": [2.0, -1.0]}
    docs = ["alpha beta gamma far", "alpha beta gamma far", "alpha beta gamma gamma far"]
    cands = extract_keywords(make_corpus(docs), _static(vectors), k=4)
    assert cands.keywords[:3] == ["gamma", "alpha", "beta"]
    assert cands.scores[0] == cands.scores[1] == cands.scores[2]
    assert all(a >= b for a, b in zip(cands.scores, cands.scores[1:]))


def test_candidates_roundtrip(tmp_path):
    cands = CandidateSet(["deforestation", "forest"], [0.8123456789, 0.5], "amazon")
    write_candidates(cands, tmp_path / "c.tsv", header=["config: {}"])
    again = read_candidates(tmp_path / "c.tsv")
    assert again.keywords == cands.keywords and again.scores == cands.scores
    assert (tmp_path / "c.tsv").read_text().splitlines()[1] == "1\tdeforestation\t0.8123456789"
