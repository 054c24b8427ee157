"""Tokenizer sampling: rolling text queue with cached substring counts.

Each training step rotates a FIFO pool of texts, assigns every observed
substring (within pretoken boundaries, up to a byte-length cap) a score
equal to its normalized frequency plus Gaussian noise whose scale is
itself drawn log-normally, and assembles a UnigramLM tokenizer from the
top-k substrings by score. Scores are used as raw additive Viterbi
scores downstream.

All single-byte substrings observed in the queue are forced into the
vocabulary so that a sampled tokenizer can always segment its own
paired batch; without this the training loss can hit unsegmentable
text.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpus, InsufficientSubstrings
from .kernels import count_substrings
from .rng import stream
from .tokenizer.pretokenize import pretokenize
from .tokenizer.types import PretokenizerConfig, TokenizerSpec, UnigramModel, Vocabulary


@dataclass
class SamplerConfig:
    pool_size: int = 4096  # n
    batch_size: int = 2048  # m
    max_token_len: int = 16  # l, in bytes
    vocab_size: int = 32768  # k
    noise_mu: float = math.log(1e-5)
    noise_sigma: float = 4.0
    seed: int = 0
    pretok: PretokenizerConfig = field(default_factory=PretokenizerConfig)

    def __post_init__(self):
        if not (self.pool_size >= self.batch_size >= 1):
            raise ValueError("need pool_size >= batch_size >= 1")
        if self.vocab_size < 1 or self.max_token_len < 1 or self.noise_sigma < 0:
            raise ValueError("bad sampler config")


class SamplerState:
    """FIFO queue of texts plus an incrementally maintained substring table."""

    def __init__(self, cfg: SamplerConfig, initial_texts):
        if len(initial_texts) != cfg.pool_size:
            raise ValueError(f"need exactly {cfg.pool_size} initial texts")
        self.cfg = cfg
        self.queue = deque()
        self.table = {}
        self.rng = stream(cfg.seed, "sampler.noise")
        for text in initial_texts:
            self._push(text)

    def _push(self, text: str):
        pres = pretokenize(text, self.cfg.pretok)
        self.queue.append((text, pres))
        count_substrings(self.table, pres, self.cfg.max_token_len, 1)

    def advance(self, batch) -> None:
        """Drop the least-recently-added batch, add the new one."""
        if len(batch) != self.cfg.batch_size:
            raise ValueError(f"batch must have {self.cfg.batch_size} texts")
        for _ in range(len(batch)):
            _, pres = self.queue.popleft()
            count_substrings(self.table, pres, self.cfg.max_token_len, -1)
        for text in batch:
            self._push(text)

    def recount(self) -> dict:
        """From-scratch substring count over the queue (oracle for tests)."""
        table = {}
        for _, pres in self.queue:
            count_substrings(table, pres, self.cfg.max_token_len, 1)
        return table

    def sample_tokenizer(self) -> UnigramModel:
        """Draw a UnigramLM over the top-k substrings by frequency + noise."""
        k = self.cfg.vocab_size
        items = sorted(self.table.items())  # by bytes: fixed noise assignment
        if len(items) < k:
            raise InsufficientSubstrings(f"{len(items)} substrings < k={k}")
        total = 0
        for _, c in items:
            total += c
        z = math.exp(self.rng.normal(self.cfg.noise_mu, self.cfg.noise_sigma))
        noise = self.rng.normal(0.0, z, size=len(items))
        entries = []  # (token, score, count)
        for (tok, c), eps in zip(items, noise):
            entries.append((tok, c / total + eps, c))

        forced = [e for e in entries if len(e[0]) == 1]
        if len(forced) > k:
            raise InsufficientSubstrings(
                f"{len(forced)} observed single bytes exceed k={k}"
            )
        rest = [e for e in entries if len(e[0]) > 1]
        rest.sort(key=lambda e: (-e[1], -e[2], e[0]))
        chosen = forced + rest[: k - len(forced)]
        chosen.sort(key=lambda e: (-e[1], -e[2], e[0]))
        vocab = Vocabulary([tok for tok, _, _ in chosen])
        scores = np.array([s for _, s, _ in chosen])
        return UnigramModel(vocab, scores)

    def spec(self, model: UnigramModel) -> TokenizerSpec:
        byte_complete = all(bytes([b]) in model.vocab for b in range(256))
        return TokenizerSpec("unigram", model, self.cfg.pretok, byte_level=byte_complete)


def training_stream(corpus_texts, cfg: SamplerConfig):
    """Yield (batch_texts, UnigramModel) pairs per Algorithm-1 step.

    The batch is pushed into the pool before the tokenizer is sampled,
    so every batch text is segmentable by its paired tokenizer.
    """
    corpus_texts = list(corpus_texts)
    if not corpus_texts:
        raise EmptyCorpus("no texts")
    rng = stream(cfg.seed, "sampler.texts")
    init = [corpus_texts[i] for i in rng.integers(len(corpus_texts), size=cfg.pool_size)]
    state = SamplerState(cfg, init)
    while True:
        batch = [corpus_texts[i] for i in rng.integers(len(corpus_texts), size=cfg.batch_size)]
        state.advance(batch)
        yield batch, state.sample_tokenizer()
