# -*- coding: utf-8 -*-
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from backend import SyntheticBackend, SyntheticWorld  # noqa: E402
from corpus_index import build_index  # noqa: E402


@pytest.fixture
def world():
    return SyntheticWorld(vocab_size=64, seed=7)


@pytest.fixture
def synthetic(world):
    return SyntheticBackend(world)


@pytest.fixture
def noiseless():
    """Difficulty 0, no dropout jitter, perfect MLM."""
    w = SyntheticWorld(vocab_size=64, seed=7, mlm_noise=0.0, dropout_jitter=0.0, max_difficulty=0.0)
    return SyntheticBackend(w)


@pytest.fixture
def fixture_corpus():
    """20 short sentence pairs with a few shared n-grams."""
    rows = [
        "a b c d", "a b c e", "b c d e", "x y z", "x y", "p q r s t",
        "a a a", "c d e f g", "the cat sat", "the dog sat", "a cat sat down",
        "q r s", "m n o p", "n o p q", "e f g h", "f g h i", "z y x", "b d f h",
        "one two three", "two three four",
    ]
    return [(tuple(r.split()), tuple(f"T{t}" for t in r.split())) for r in rows]


@pytest.fixture
def fixture_index(fixture_corpus):
    return build_index(fixture_corpus)
