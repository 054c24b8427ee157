"""Tokenizer data model: vocabulary, UnigramLM and BPE models, specs.

Tokens are raw byte strings (not necessarily valid UTF-8). A tokenizer is
the pair (vocabulary, tokenization function); the function is either
UnigramLM (additive per-token scores, Viterbi argmax) or BPE (ordered
merge list over a base alphabet).
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


class Vocabulary:
    """Ordered, duplicate-free list of byte-string tokens with id lookup."""

    def __init__(self, tokens):
        tokens = [bytes(t) for t in tokens]
        if any(len(t) == 0 for t in tokens):
            raise DataError("empty token in vocabulary")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token) -> int:
        return self.index[token]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


class UnigramModel:
    """UnigramLM tokenizer model: vocabulary plus one additive score per token.

    Scores are raw reals (they may be positive, e.g. sampled frequency-plus-
    noise scores), not normalized log-probabilities: the segmentation argmax
    only needs an additive score.
    """

    def __init__(self, vocab: Vocabulary, scores):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(vocab),):
            raise DataError(f"need {len(vocab)} scores, got {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise DataError("non-finite unigram score")
        self.vocab = vocab
        self.scores = scores
        self.max_token_len = max((len(t) for t in vocab.tokens), default=0)

    def score(self, token) -> float:
        return float(self.scores[self.vocab.id(token)])


class BpeModel:
    """BPE tokenizer model: base alphabet plus an ordered merge list.

    Every merge operand must be an alphabet symbol or the result of an
    earlier merge; every merge result and alphabet symbol must be in the
    vocabulary.
    """

    def __init__(self, alphabet, merges, vocab: Vocabulary):
        self.alphabet = frozenset(bytes(a) for a in alphabet)
        self.merges = [(bytes(l), bytes(r)) for l, r in merges]
        self.vocab = vocab
        known = set(self.alphabet)
        for l, r in self.merges:
            if l not in known or r not in known:
                raise DataError(f"merge operand {l!r}+{r!r} not derivable")
            known.add(l + r)
        for sym in self.alphabet:
            if sym not in vocab:
                raise DataError(f"alphabet symbol {sym!r} missing from vocab")
        for l, r in self.merges:
            if l + r not in vocab:
                raise DataError(f"merge result {(l + r)!r} missing from vocab")
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self.max_alpha_len = max((len(a) for a in self.alphabet), default=0)


@dataclass
class PretokenizerConfig:
    """Splitting rule configuration.

    `rule` names the fixed gpt2-derived, Mark-category-aware state machine
    documented in zett.tokenizer.pretokenize (the only supported value is
    "gpt2m"). `prefix_space` prepends a single space to the text before
    splitting. Whitespace-only pretokens longer than `whitespace_run_max`
    characters are split into chunks of at most that length.
    """

    rule: str = "gpt2m"
    prefix_space: bool = False
    whitespace_run_max: int = 16

    def __post_init__(self):
        if self.rule != "gpt2m":
            raise DataError(f"unknown pretokenizer rule {self.rule!r}")
        if self.whitespace_run_max < 1:
            raise DataError("whitespace_run_max must be >= 1")


@dataclass
class TokenizerSpec:
    """A complete tokenizer: model kind, model, pretokenizer, byte-level flag."""

    kind: str
    model: object  # UnigramModel | BpeModel
    pretok: PretokenizerConfig = field(default_factory=PretokenizerConfig)
    byte_level: bool = False

    def __post_init__(self):
        if self.kind == "unigram":
            if not isinstance(self.model, UnigramModel):
                raise DataError("kind 'unigram' requires a UnigramModel")
        elif self.kind == "bpe":
            if not isinstance(self.model, BpeModel):
                raise DataError("kind 'bpe' requires a BpeModel")
        else:
            raise DataError(f"unknown tokenizer kind {self.kind!r}")
        if self.byte_level and not self._byte_complete():
            raise DataError("byte_level spec does not cover all 256 bytes")

    def _byte_complete(self) -> bool:
        singles = (bytes([b]) for b in range(256))
        if self.kind == "unigram":
            return all(s in self.model.vocab for s in singles)
        return all(s in self.model.alphabet for s in singles)

    @property
    def vocab(self) -> Vocabulary:
        return self.model.vocab
