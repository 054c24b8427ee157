"""Evaluation metrics: bits/char, sequence-length deltas, FLOPs accounting.

bits_per_char scores every token (the LM conditions position 0 on its
learned start vector), sums natural-log cross-entropy over documents
and divides by raw character count, converted to base 2. Documents a
tokenizer cannot segment are skipped and reported; pass the same
document set when comparing methods.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import nanograd as ng
from .errors import EmptyCorpus, Unsegmentable
from .hypernet import HypernetConfig
from .tokenizer.pretokenize import pretokenize
from .tokenizer.segment import encode
from .tokenizer.types import TokenizerSpec, UnigramModel, Vocabulary
from .toylm import LmConfig, LmParams, lm_loss


@dataclass
class EvalReport:
    metric: str
    value: float
    tokenizers: list = field(default_factory=list)
    corpus_id: str = ""
    config_hash: str = ""
    extra: dict = field(default_factory=dict)


def corpus_cross_entropy(lm: LmParams, spec: TokenizerSpec, docs,
                         emb_in=None, emb_out=None, batch_size: int = 16):
    """(total nats, chars, bytes, tokens, skipped_docs) over documents."""
    seq = lm.cfg.max_seq_len
    windows = []
    chars = nbytes = ntok = skipped = 0
    for doc in docs:
        try:
            enc = encode(doc, spec)
        except Unsegmentable:
            skipped += 1
            continue
        if not enc:
            continue
        chars += len(doc)
        nbytes += len(doc.encode("utf-8"))
        ntok += len(enc)
        for lo in range(0, len(enc), seq):
            windows.append(enc[lo : lo + seq])
    if not windows:
        raise EmptyCorpus("no encodable documents")
    total = 0.0
    with ng.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = windows[lo : lo + batch_size]
            T = max(len(w) for w in chunk)
            ids = np.zeros((len(chunk), T), dtype=np.int64)
            mask = np.zeros((len(chunk), T))
            for b, w in enumerate(chunk):
                ids[b, : len(w)] = w
                mask[b, : len(w)] = 1.0
            loss = lm_loss(lm, ids, mask, emb_in=emb_in, emb_out=emb_out)
            total += float(loss.data) * mask.sum()
    return total, chars, nbytes, ntok, skipped


def bits_per_char(lm: LmParams, spec: TokenizerSpec, docs, emb_in=None, emb_out=None) -> float:
    nats, chars, _, _, _ = corpus_cross_entropy(lm, spec, docs, emb_in, emb_out)
    return nats / math.log(2) / chars


def bits_per_byte(lm: LmParams, spec: TokenizerSpec, docs, emb_in=None, emb_out=None) -> float:
    nats, _, nbytes, _, _ = corpus_cross_entropy(lm, spec, docs, emb_in, emb_out)
    return nats / math.log(2) / nbytes


def encodable_subset(docs, specs) -> list:
    """Documents every given tokenizer can segment (for fair comparisons)."""
    keep = []
    for doc in docs:
        ok = True
        for spec in specs:
            try:
                encode(doc, spec)
            except Unsegmentable:
                ok = False
                break
        if ok:
            keep.append(doc)
    return keep


def delta_length(tok_a: TokenizerSpec, tok_b: TokenizerSpec, docs) -> float:
    """(len_b - len_a) / len_a over total token counts."""
    len_a = len_b = 0
    for doc in docs:
        len_a += len(encode(doc, tok_a))
        len_b += len(encode(doc, tok_b))
    if len_a == 0:
        raise EmptyCorpus("baseline tokenizer produced no tokens")
    return (len_b - len_a) / len_a


def rescore_unigram(vocab: Vocabulary, docs, pretok=None, floor_drop: float = 10.0) -> UnigramModel:
    """Same vocabulary, scores = log normalized corpus substring frequency.

    Counts every occurrence of each vocab token as a substring of corpus
    pretokens; tokens never seen get (min observed score - floor_drop).
    """
    from .tokenizer.types import PretokenizerConfig

    pretok = pretok or PretokenizerConfig()
    pre_counts = Counter()
    for doc in docs:
        pre_counts.update(pretokenize(doc, pretok))
    if not pre_counts:
        raise EmptyCorpus("corpus has no pretokens")
    max_len = max(len(t) for t in vocab.tokens)
    counts = np.zeros(len(vocab))
    index = vocab.index
    for p, c in pre_counts.items():
        L = len(p)
        for i in range(L):
            hi = min(L, i + max_len)
            for j in range(i + 1, hi + 1):
                tid = index.get(p[i:j])
                if tid is not None:
                    counts[tid] += c
    total = counts.sum()
    if total == 0:
        raise EmptyCorpus("no vocabulary token occurs in the corpus")
    with np.errstate(divide="ignore"):
        scores = np.log(counts / total)
    seen = np.isfinite(scores)
    floor = scores[seen].min() - floor_drop
    scores[~seen] = floor
    return UnigramModel(vocab, scores)


# ---------------------------------------------------------------------------
# FLOPs accounting (analytic 2N convention)


def _lm_block_params(d: int, f: int) -> int:
    attn = 4 * d * d + d  # wq wk wv wo + output bias
    ffn = d * f + f + f * d + d
    lns = 4 * d
    return attn + ffn + lns


def flops_estimate(cfg) -> tuple[int, int]:
    """(parameter count, flops per token) for an LM or hypernet config.

    LM: flops/token = 2 * block params + 2 * d * |V| (the de-embedding
    term). Hypernet: de-embedding is forgone, so flops/token counts the
    transformer blocks only (per decomposition position; the per-token
    prediction heads are excluded and negligible).
    """
    if isinstance(cfg, LmConfig):
        d, f = cfg.d_model, cfg.ffn_dim
        blocks = cfg.layers * _lm_block_params(d, f) + 2 * d  # + final LN
        emb = cfg.vocab_size * d * (1 if cfg.tied_embeddings else 2)
        params = blocks + emb + cfg.max_seq_len * d + d  # + positions + start
        flops = 2 * blocks + 2 * d * cfg.vocab_size
        return params, flops
    if isinstance(cfg, HypernetConfig):
        d, f = cfg.d_model, cfg.ffn_dim
        blocks = cfg.layers * _lm_block_params(d, f)
        heads = 2 * (d * d + d)
        params = blocks + heads + cfg.max_decomp_len * d
        flops = 2 * blocks
        return params, flops
    raise TypeError(f"unsupported config type {type(cfg)!r}")


def flops_batch(n: int, s: int, k: int, t: int,
                main_per_token: float, hyper_per_token: float) -> tuple[float, float]:
    """Per-batch FLOPs split: n*s main-model tokens, k sequences of t
    decomposition positions through the hypernetwork."""
    return n * s * main_per_token, k * t * hyper_per_token
