"""Tokenizer conversion: byte-level completion and UnigramLM approximation.

Byte-level conversion adds the missing single-byte tokens (unigram) or
re-bases merges on bytes by prepending character-assembly merges (BPE),
so any byte sequence becomes segmentable. Unigramifying approximates an
arbitrary tokenizer with a UnigramLM over the same vocabulary by making
each reference decomposition outscore its competitors; the hinge-sum LP
lives in zett.lp.

Competitors whose token multiset equals the reference are dropped when
building constraints: their score sums are identical for every choice
of scores, so strict dominance is unsatisfiable and equivalence is
judged up to token order.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import lp
from .errors import EmptyCorpus, Unsegmentable
from .tokenizer.segment import _all_decompositions, segment_pretoken, unigram_segment
from .tokenizer.train import count_pretokens
from .tokenizer.types import BpeModel, TokenizerSpec, UnigramModel, Vocabulary

BYTE_SCORE_DROP = 10.0  # added byte tokens score: min existing score - 10
FULL_ENUM_MAX_BYTES = 12


def to_byte_level(t: TokenizerSpec) -> tuple[TokenizerSpec, int]:
    """Complete a tokenizer so every byte sequence is segmentable.

    Returns the converted spec and the number of vocabulary entries
    added; already-byte-level tokenizers come back unchanged with 0.
    New tokens are appended after the existing ids. Idempotent.
    """
    singles = [bytes([b]) for b in range(256)]
    if t.kind == "unigram":
        missing = [s for s in singles if s not in t.vocab]
        if not missing:
            return (t if t.byte_level else _with_byte_level(t), 0)
        floor = float(t.model.scores.min()) - BYTE_SCORE_DROP
        vocab = Vocabulary(t.vocab.tokens + missing)
        scores = np.concatenate([t.model.scores, np.full(len(missing), floor)])
        model = UnigramModel(vocab, scores)
        return TokenizerSpec("unigram", model, t.pretok, byte_level=True), len(missing)

    m: BpeModel = t.model
    missing = [s for s in singles if s not in t.vocab]
    assembly = []
    new_tokens = list(missing)
    known = set(t.vocab.tokens) | set(missing)
    seen_merges = set(m.merges)
    for sym in sorted(m.alphabet, key=t.vocab.id):
        if len(sym) == 1:
            continue
        prefix = sym[:1]
        for k in range(1, len(sym)):
            nxt = sym[k : k + 1]
            grown = prefix + nxt
            pair = (prefix, nxt)
            if pair not in seen_merges:
                seen_merges.add(pair)
                assembly.append(pair)
            if grown not in known:
                known.add(grown)
                new_tokens.append(grown)
            prefix = grown
    if not new_tokens and not assembly:
        return (t if t.byte_level else _with_byte_level(t), 0)
    vocab = Vocabulary(t.vocab.tokens + new_tokens)
    model = BpeModel(singles, assembly + list(m.merges), vocab)
    return TokenizerSpec("bpe", model, t.pretok, byte_level=True), len(new_tokens)


def _with_byte_level(t: TokenizerSpec) -> TokenizerSpec:
    return TokenizerSpec(t.kind, t.model, t.pretok, byte_level=True)


def sample_pretokens_by_frequency(corpus_texts, pretok, n: int, seed: int = 0):
    """Draw n pretokens (with replacement) by corpus frequency."""
    counts = count_pretokens(corpus_texts, pretok)
    if not counts:
        raise EmptyCorpus("corpus has no pretokens")
    items = sorted(counts.items())
    toks = [t for t, _ in items]
    weights = np.array([c for _, c in items], dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xBEEF]))
    idx = rng.choice(len(toks), size=n, p=weights / weights.sum())
    return [toks[i] for i in idx]


def _segment_or_none(pretoken, t):
    try:
        return segment_pretoken(pretoken, t)
    except Unsegmentable:
        return None


def preservation_rate(a: TokenizerSpec, b: TokenizerSpec, corpus_texts, n: int, seed: int = 0) -> float:
    """Fraction of frequency-sampled pretokens tokenized identically by a and b."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sampled = sample_pretokens_by_frequency(corpus_texts, a.pretok, n, seed=seed)
    cache = {}
    hits = 0
    for p in sampled:
        if p not in cache:
            ta = _segment_or_none(p, a)
            tb = _segment_or_none(p, b)
            if ta is None or tb is None:
                cache[p] = False
            else:
                cache[p] = [a.vocab.tokens[i] for i in ta] == [b.vocab.tokens[i] for i in tb]
        hits += cache[p]
    return hits / n


@dataclass
class DecompositionSet:
    pretoken: bytes
    decomps: list  # token-id tuples, reference included
    reference: tuple


def count_decompositions(pretoken: bytes, index: dict, max_token_len: int) -> int:
    n = len(pretoken)
    cnt = [0] * (n + 1)
    cnt[0] = 1
    for j in range(1, n + 1):
        lo = max(0, j - max_token_len)
        for i in range(lo, j):
            if cnt[i] and pretoken[i:j] in index:
                cnt[j] += cnt[i]
    return cnt[n]


def k_best_decompositions(pretoken: bytes, index: dict, scores, max_token_len: int, k: int):
    """Top-k decompositions by (score desc, count asc, cuts asc)."""
    n = len(pretoken)
    # per position: list of (score, count, cuts, ids)
    cands = [[] for _ in range(n + 1)]
    cands[0] = [(0.0, 0, (), ())]
    for j in range(1, n + 1):
        pool = []
        lo = max(0, j - max_token_len)
        for i in range(lo, j):
            if not cands[i]:
                continue
            tid = index.get(pretoken[i:j])
            if tid is None:
                continue
            for s, c, cuts, ids in cands[i]:
                nc = cuts + (i,) if i > 0 else cuts
                pool.append((s + scores[tid], c + 1, nc, ids + (tid,)))
        pool.sort(key=lambda e: (-e[0], e[1], e[2]))
        cands[j] = pool[:k]
    return [(ids, s) for s, c, cuts, ids in cands[n]]


def enumerate_decompositions(pretoken: bytes, t: TokenizerSpec, cap: int, scores=None) -> DecompositionSet:
    """Reference plus competitors: exhaustive when the count fits the cap,
    otherwise the reference and the (cap-1) best alternatives by score."""
    pretoken = bytes(pretoken)
    reference = tuple(segment_pretoken(pretoken, t))
    index = t.vocab.index
    if t.kind == "unigram":
        max_len = t.model.max_token_len
    else:
        max_len = max(len(tok) for tok in t.vocab.tokens)
    if scores is None:
        scores = t.model.scores if t.kind == "unigram" else np.zeros(len(t.vocab))
    total = count_decompositions(pretoken, index, max_len)
    if len(pretoken) <= FULL_ENUM_MAX_BYTES and total <= cap:
        decomps = [tuple(ids) for ids, _ in _all_decompositions(pretoken, index, max_len)]
    else:
        decomps = [tuple(ids) for ids, _ in k_best_decompositions(pretoken, index, scores, max_len, cap)]
    if reference not in decomps:
        decomps = [reference] + decomps[: max(0, cap - 1)]
    return DecompositionSet(pretoken, decomps, reference)


@dataclass
class UnigramifyReport:
    residual_loss: float
    preserved: float  # frequency-weighted multiset preservation over X
    skipped: int
    preserved_sequence: float = 0.0
    rounds: int = 0
    constraints: int = 0
    backend: str = ""
    pretokens: int = 0


def _constraint_row(ref_counts, comp_ids):
    """Sparse row of token-count differences (competitor minus reference)."""
    diff = Counter(comp_ids)
    diff.subtract(ref_counts)
    items = [(tid, c) for tid, c in sorted(diff.items()) if c]
    return items


def unigramify(
    t: TokenizerSpec,
    corpus_texts,
    top_n: int,
    cap: int = 32,
    rounds: int = 10,
    delta: float = 1e-6,
    backend: str = "auto",
    subgrad_iters: int = 4000,
) -> tuple[TokenizerSpec, UnigramifyReport]:
    """Approximate tokenizer t by a UnigramLM over the same vocabulary."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    pre_counts = count_pretokens(corpus_texts, t.pretok)
    if not pre_counts:
        raise EmptyCorpus("corpus has no pretokens")
    X = [p for p, _ in sorted(pre_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]]

    refs = {}
    skipped = 0
    for x in X:
        ids = _segment_or_none(x, t)
        if ids is None:
            skipped += 1
        else:
            refs[x] = tuple(ids)

    nvars = len(t.vocab)
    # warm start: log relative frequency of token use in the reference
    # tokenization of X, floored for unseen tokens
    usage = np.zeros(nvars)
    for x, ids in refs.items():
        w = pre_counts[x]
        for tid in ids:
            usage[tid] += w
    with np.errstate(divide="ignore"):
        s0 = np.log(usage / max(usage.sum(), 1.0))
    floor = s0[np.isfinite(s0)].min() - BYTE_SCORE_DROP if np.isfinite(s0).any() else -BYTE_SCORE_DROP
    s0[~np.isfinite(s0)] = floor

    max_len = (
        t.model.max_token_len if t.kind == "unigram" else max(len(tok) for tok in t.vocab.tokens)
    )
    index = t.vocab.index

    row_set = {}
    rows_i, rows_j, rows_v = [], [], []

    def add_row(items) -> bool:
        key = tuple(items)
        if not key or key in row_set:
            return False
        row_set[key] = True
        r = len(row_set) - 1
        for tid, c in items:
            rows_i.append(r)
            rows_j.append(tid)
            rows_v.append(float(c))
        return True

    for x, ref in refs.items():
        ref_counts = Counter(ref)
        ds = enumerate_decompositions(x, t, cap, scores=s0)
        for comp in ds.decomps:
            if sorted(comp) == sorted(ref):
                continue
            add_row(_constraint_row(ref_counts, comp))

    def build_matrix():
        return sp.csr_matrix(
            (rows_v, (rows_i, rows_j)), shape=(len(row_set), nvars), dtype=np.float64
        )

    sol = lp.solve(build_matrix(), delta=delta, s0=s0, backend=backend, max_iter=subgrad_iters)
    scores = sol.scores
    rounds_used = 0
    for _ in range(rounds):
        rounds_used += 1
        model = UnigramModel(t.vocab, scores)
        new_rows = 0
        for x, ref in refs.items():
            got = tuple(unigram_segment(x, model))
            if sorted(got) != sorted(ref) and add_row(_constraint_row(Counter(ref), got)):
                new_rows += 1
        if new_rows == 0:
            break
        sol = lp.solve(build_matrix(), delta=delta, s0=scores, backend=backend, max_iter=subgrad_iters)
        scores = sol.scores

    model = UnigramModel(t.vocab, scores)
    result = TokenizerSpec("unigram", model, t.pretok, byte_level=False)
    if result._byte_complete():
        result.byte_level = True

    total_w = sum(pre_counts[x] for x in refs)
    hits_m = hits_s = 0
    for x, ref in refs.items():
        got = tuple(unigram_segment(x, model))
        w = pre_counts[x]
        hits_m += w * (sorted(got) == sorted(ref))
        hits_s += w * (got == ref)
    pres_m = hits_m / total_w if total_w else 1.0
    pres_s = hits_s / total_w if total_w else 1.0
    # residual includes the strictness margin so that residual 0 implies the
    # reference strictly dominates every enumerated competitor
    report = UnigramifyReport(
        residual_loss=lp.hinge_sum(build_matrix(), scores, delta),
        preserved=pres_m,
        skipped=skipped,
        preserved_sequence=pres_s,
        rounds=rounds_used,
        constraints=len(row_set),
        backend=sol.backend,
        pretokens=len(refs),
    )
    return result, report
