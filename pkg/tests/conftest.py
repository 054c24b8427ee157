import numpy as np
import pytest

from zett.tokenizer import PretokenizerConfig, UnigramModel, Vocabulary


def random_unigram(rng, n_extra=12, alphabet=b"abcd", max_tok=4, quantize=False):
    """Random byte-covering unigram model over a small alphabet."""
    tokens = [bytes([b]) for b in alphabet]
    seen = set(tokens)
    for _ in range(n_extra):
        ln = int(rng.integers(2, max_tok + 1))
        t = bytes(rng.choice(list(alphabet), size=ln).tolist())
        if t not in seen:
            seen.add(t)
            tokens.append(t)
    scores = rng.normal(-2.0, 1.0, size=len(tokens))
    if quantize:  # coarse grid scores force plenty of exact ties
        scores = np.round(scores * 2) / 2
    return UnigramModel(Vocabulary(tokens), scores)


def random_pretoken(rng, alphabet=b"abcd", max_len=12):
    ln = int(rng.integers(1, max_len + 1))
    return bytes(rng.choice(list(alphabet), size=ln).tolist())


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def default_pretok():
    return PretokenizerConfig()
