import sys

import numpy as np
import pytest

from changeannot.imagery import Tile
from changeannot.synthgen import synthetic_pairs
from changeannot.textcorpus import Corpus, Document, tokenize


def make_corpus(abstracts, name="toy"):
    docs = [Document(str(i), 2020, "", a, tokenize(a)) for i, a in enumerate(abstracts)]
    return Corpus(docs, name)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_pairs():
    return synthetic_pairs(16, size=64, seed=5)


@pytest.fixture
def tile_factory(rng):
    def make(tile_id="s/0_0", size=16, channels=3):
        return Tile(rng.random((size, size, channels)).astype(np.float32), (0, 0), tile_id)
    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
