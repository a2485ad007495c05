"""Scientific-abstract corpora, word embeddings and candidate keywords."""

from .corpus import Corpus, Document, load_corpus, tokenize, write_corpus
from .embeddings import (
    EmbeddingTable, char_ngrams, cosine, load_embedding_table, save_table, save_text_table,
    train_embeddings, vector_for,
)
from .keywords import CandidateSet, doc_embedding, extract_keywords, read_candidates, write_candidates

__all__ = [
    "CandidateSet", "Corpus", "Document", "EmbeddingTable", "char_ngrams", "cosine", "doc_embedding",
    "extract_keywords", "load_corpus", "load_embedding_table", "read_candidates", "save_table",
    "save_text_table", "tokenize", "train_embeddings", "vector_for", "write_candidates", "write_corpus",
]
