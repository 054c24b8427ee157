"""Small deterministic tokenizer trainers for fixtures and toy models.

train_bpe learns merges by greedy most-frequent-pair counting over
pretoken frequencies (ties broken lexicographically), at byte or
character granularity. Frequency-scored unigram models are built by
zett.evalmetrics.rescore_unigram.
"""

from collections import Counter

from ..errors import DataError, EmptyCorpus
from .pretokenize import pretokenize
from .types import BpeModel, PretokenizerConfig, TokenizerSpec, Vocabulary


def count_pretokens(texts, cfg: PretokenizerConfig) -> Counter:
    counts = Counter()
    for text in texts:
        counts.update(pretokenize(text, cfg))
    return counts


def train_bpe(
    texts,
    vocab_size: int,
    pretok: PretokenizerConfig | None = None,
    byte_level: bool = True,
    min_pair_count: int = 2,
) -> TokenizerSpec:
    """Learn a BPE tokenizer on texts; byte_level=False uses characters."""
    pretok = pretok or PretokenizerConfig()
    pre_counts = count_pretokens(texts, pretok)
    if not pre_counts:
        raise EmptyCorpus("no pretokens in corpus")

    if byte_level:
        alphabet = [bytes([b]) for b in range(256)]
        words = {tuple(bytes([b]) for b in p): c for p, c in pre_counts.items()}
    else:
        alphabet = set()
        words = {}
        for p, c in pre_counts.items():
            chars = tuple(ch.encode("utf-8") for ch in p.decode("utf-8"))
            alphabet.update(chars)
            words[chars] = words.get(chars, 0) + c
        alphabet = sorted(alphabet)

    vocab = list(alphabet)
    if vocab_size < len(vocab):
        raise DataError(f"vocab_size {vocab_size} below alphabet size {len(vocab)}")
    merges = []
    while len(vocab) < vocab_size:
        pairs = Counter()
        for syms, c in words.items():
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += c
        if not pairs:
            break
        (l, r), c = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        if c < min_pair_count:
            break
        merges.append((l, r))
        vocab.append(l + r)
        new_words = {}
        for syms, cnt in words.items():
            out = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == l and syms[i + 1] == r:
                    out.append(l + r)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            key = tuple(out)
            new_words[key] = new_words.get(key, 0) + cnt
        words = new_words

    model = BpeModel(alphabet, merges, Vocabulary(vocab))
    return TokenizerSpec(kind="bpe", model=model, pretok=pretok, byte_level=byte_level)
