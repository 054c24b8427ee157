"""Embedding transfer heuristics and parameter merging.

Lexical: copy overlapping token rows, draw the rest from the source
matrix's per-coordinate normal statistics. FVT: a new token's row is the
mean of the rows of its decomposition under the source tokenizer. FOCUS:
copy the overlap; combine overlap rows for new tokens with sparsemax
weights over cosine similarities in an auxiliary embedding space (cap of
64 candidate neighbours per token keeps the cost linear; tokens missing
from the auxiliary space fall back to FVT). Auxiliary embeddings can be
trained self-contained from PPMI co-occurrence statistics.
"""

from collections import Counter

import numpy as np

from .errors import DimensionMismatch, EmptyCorpus, EmptyOverlap, ShapeMismatch, Unsegmentable
from .tokenizer.segment import encode, segment_pretoken
from .tokenizer.types import TokenizerSpec, Vocabulary

FOCUS_NEIGHBOR_CAP = 64


def sparsemax(z):
    """Euclidean projection of z onto the probability simplex (sparse)."""
    z = np.asarray(z, dtype=np.float64)
    zs = np.sort(z)[::-1]
    css = np.cumsum(zs)
    k = np.arange(1, z.size + 1)
    support = 1.0 + k * zs > css
    kmax = int(k[support][-1])
    tau = (css[kmax - 1] - 1.0) / kmax
    return np.maximum(z - tau, 0.0)


def transfer_lexical(emb_a, vocab_a: Vocabulary, vocab_b: Vocabulary, rng) -> np.ndarray:
    """Copy overlapping rows; draw the rest from emb_a's coordinate stats."""
    emb_a = np.asarray(emb_a, dtype=np.float64)
    if emb_a.shape[0] != len(vocab_a):
        raise DimensionMismatch(f"{emb_a.shape[0]} rows != |V_a| {len(vocab_a)}")
    mu = emb_a.mean(axis=0)
    sd = emb_a.std(axis=0)
    out = rng.normal(mu, sd, size=(len(vocab_b), emb_a.shape[1]))
    for i, tok in enumerate(vocab_b.tokens):
        j = vocab_a.index.get(tok)
        if j is not None:
            out[i] = emb_a[j]
    return out


def decompose_token(token: bytes, tok_a: TokenizerSpec) -> list[int]:
    """Decompose raw token bytes with the source tokenization function.

    The bytes are segmented as a single pretoken (tokens of another
    vocabulary are not re-pretokenized); byte-level sources never fail.
    """
    return segment_pretoken(token, tok_a)


def transfer_fvt(emb_a, tok_a: TokenizerSpec, vocab_b: Vocabulary) -> np.ndarray:
    """Each target row is the mean of its decomposition's source rows."""
    emb_a = np.asarray(emb_a, dtype=np.float64)
    if emb_a.shape[0] != len(tok_a.vocab):
        raise DimensionMismatch(f"{emb_a.shape[0]} rows != |V_a| {len(tok_a.vocab)}")
    out = np.empty((len(vocab_b), emb_a.shape[1]))
    for i, tok in enumerate(vocab_b.tokens):
        ids = decompose_token(tok, tok_a)
        out[i] = emb_a[ids].mean(axis=0)
    return out


def transfer_focus(emb_a, tok_a: TokenizerSpec, vocab_b: Vocabulary, aux: dict) -> np.ndarray:
    """FOCUS: copy overlap rows, sparsemax-weighted combinations elsewhere."""
    emb_a = np.asarray(emb_a, dtype=np.float64)
    vocab_a = tok_a.vocab
    overlap = [t for t in vocab_b.tokens if t in vocab_a.index]
    if not overlap:
        raise EmptyOverlap("no tokens shared between source and target")
    anchors = [t for t in overlap if t in aux]
    anchor_rows = np.array([emb_a[vocab_a.id(t)] for t in anchors]) if anchors else None
    anchor_vecs = _unit(np.array([aux[t] for t in anchors])) if anchors else None

    out = np.empty((len(vocab_b), emb_a.shape[1]))
    for i, tok in enumerate(vocab_b.tokens):
        j = vocab_a.index.get(tok)
        if j is not None:
            out[i] = emb_a[j]
            continue
        vec = aux.get(tok)
        if vec is None or anchor_rows is None:
            ids = decompose_token(tok, tok_a)
            out[i] = emb_a[ids].mean(axis=0)
            continue
        sims = anchor_vecs @ _unit(np.asarray(vec, dtype=np.float64))
        if sims.size > FOCUS_NEIGHBOR_CAP:
            top = np.argpartition(-sims, FOCUS_NEIGHBOR_CAP)[:FOCUS_NEIGHBOR_CAP]
        else:
            top = np.arange(sims.size)
        w = sparsemax(sims[top])
        out[i] = w @ anchor_rows[top]
    return out


def _unit(x):
    if x.ndim == 1:
        return x / max(np.linalg.norm(x), 1e-12)
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)


def train_aux_embeddings(corpus_texts, tok_b: TokenizerSpec, dim: int, window: int = 5) -> dict:
    """PPMI co-occurrence embeddings over tok_b's vocabulary.

    Co-occurrence is counted in a +/-window token window over the
    encoded corpus; the PPMI matrix is rank-reduced with a truncated
    eigendecomposition (deterministic: sign-fixed eigenvectors).
    """
    vocab = tok_b.vocab
    n = len(vocab)
    counts = np.zeros((n, n))
    any_text = False
    for text in corpus_texts:
        try:
            ids = encode(text, tok_b)
        except Unsegmentable:
            continue
        any_text = True
        for p, a in enumerate(ids):
            for q in range(p + 1, min(p + window + 1, len(ids))):
                b = ids[q]
                counts[a, b] += 1.0
                counts[b, a] += 1.0
    if not any_text:
        raise EmptyCorpus("no encodable texts for auxiliary embeddings")
    total = counts.sum()
    if total == 0:
        raise EmptyCorpus("corpus too short for co-occurrence statistics")
    row = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * row.T))
    ppmi = np.where(counts > 0, np.maximum(pmi, 0.0), 0.0)

    vals, vecs = np.linalg.eigh(ppmi)
    order = np.argsort(-vals)[: min(dim, n)]
    vals = vals[order]
    vecs = vecs[:, order]
    # fix eigenvector signs: largest-magnitude component positive
    flip = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(vecs.shape[1])])
    flip[flip == 0] = 1.0
    vecs = vecs * flip
    # PSD part only: keeps dot products faithful to the (positive) PPMI structure
    emb = vecs * np.sqrt(np.maximum(vals, 0.0))
    if emb.shape[1] < dim:
        emb = np.pad(emb, ((0, 0), (0, dim - emb.shape[1])))
    return {tok: emb[i].copy() for i, tok in enumerate(vocab.tokens)}


def reconstruct_ppmi(corpus_texts, tok_b: TokenizerSpec, window: int = 5):
    """Full-rank eigenreconstruction pair (ppmi, U diag(vals) U^T) for tests."""
    vocab = tok_b.vocab
    n = len(vocab)
    counts = np.zeros((n, n))
    for text in corpus_texts:
        ids = encode(text, tok_b)
        for p, a in enumerate(ids):
            for q in range(p + 1, min(p + window + 1, len(ids))):
                counts[a, ids[q]] += 1.0
                counts[ids[q], a] += 1.0
    total = counts.sum()
    row = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * row.T))
    ppmi = np.where(counts > 0, np.maximum(pmi, 0.0), 0.0)
    vals, vecs = np.linalg.eigh(ppmi)
    return ppmi, (vecs * vals) @ vecs.T


def task_arithmetic(theta_base, theta_ft, theta_target_base, lam: float):
    """theta_target_base + lam * (theta_ft - theta_base), elementwise.

    Accepts arrays or name->array dicts (all three alike)."""
    if isinstance(theta_base, dict):
        if set(theta_base) != set(theta_ft) or set(theta_base) != set(theta_target_base):
            raise ShapeMismatch("parameter name sets differ")
        return {
            k: task_arithmetic(theta_base[k], theta_ft[k], theta_target_base[k], lam)
            for k in theta_base
        }
    a, f, t = (np.asarray(x) for x in (theta_base, theta_ft, theta_target_base))
    if not (a.shape == f.shape == t.shape):
        raise ShapeMismatch(f"{a.shape} vs {f.shape} vs {t.shape}")
    return t + lam * (f - a)


def embedding_compatibility(emb1, emb2) -> tuple[float, float]:
    """(mean row-wise cosine, cosine of the mean rows)."""
    a = np.asarray(emb1, dtype=np.float64)
    b = np.asarray(emb2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    rowcos = (_unit(a) * _unit(b)).sum(axis=-1).mean()
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    meancos = float(_unit(ma) @ _unit(mb))
    return float(rowcos), meancos


def vocab_overlap(vocab_a: Vocabulary, vocab_b: Vocabulary) -> float:
    """|V_a intersection V_b| / |V_b|."""
    return sum(1 for t in vocab_b.tokens if t in vocab_a.index) / len(vocab_b)


def p_overlap(tok_a: TokenizerSpec, tok_b: TokenizerSpec, corpus_texts) -> float:
    """Probability that a token drawn from the T_b-encoded corpus is in V_a."""
    counts = Counter()
    for text in corpus_texts:
        counts.update(encode(text, tok_b))
    total = sum(counts.values())
    if total == 0:
        raise EmptyCorpus("corpus produced no tokens")
    hits = sum(c for tid, c in counts.items() if tok_b.vocab.tokens[tid] in tok_a.vocab.index)
    return hits / total
