"""Segmentation: UnigramLM Viterbi, brute-force oracle, BPE, encode/decode.

All functions are pure given immutable tokenizer values. Unsegmentable
inputs raise a typed error rather than inserting an UNK token;
byte-level conversion (zett.convert) is the supported remedy.
"""

from ..errors import IdOutOfRange, InputTooLong, Unsegmentable
from ..kernels import bpe_apply, viterbi_segment
from .pretokenize import pretokenize
from .types import BpeModel, TokenizerSpec, UnigramModel

BRUTE_MAX_LEN = 12


def unigram_segment(pretoken: bytes, m: UnigramModel) -> list[int]:
    """Score-maximizing decomposition of a pretoken into token ids.

    Ties break toward fewer tokens, then the lexicographically earliest
    set of cut positions.
    """
    ids = viterbi_segment(bytes(pretoken), m.vocab.index, m.scores, m.max_token_len)
    if ids is None:
        raise Unsegmentable(f"cannot segment {pretoken!r}")
    return ids


def _all_decompositions(pretoken: bytes, index: dict, max_token_len: int):
    """Yield (ids, cuts) for every decomposition; cuts are interior positions."""
    n = len(pretoken)
    stack = [(0, [], [])]
    while stack:
        pos, ids, cuts = stack.pop()
        if pos == n:
            yield ids, tuple(cuts)
            continue
        hi = min(n, pos + max_token_len)
        for end in range(hi, pos, -1):
            tid = index.get(pretoken[pos:end])
            if tid is not None:
                stack.append((end, ids + [tid], cuts + ([end] if end < n else [])))


def unigram_segment_brute(pretoken: bytes, m: UnigramModel, max_len: int = BRUTE_MAX_LEN) -> list[int]:
    """Exhaustive-enumeration oracle for unigram_segment (same tie-break)."""
    if len(pretoken) > max_len:
        raise InputTooLong(f"{len(pretoken)} bytes > {max_len}")
    best = None
    for ids, cuts in _all_decompositions(bytes(pretoken), m.vocab.index, m.max_token_len):
        s = 0.0
        for tid in ids:  # left-to-right fold, identical to the Viterbi fold
            s += m.scores[tid]
        key = (s, len(ids), cuts)
        if best is None:
            best = (key, ids)
        else:
            (bs, bc, bb), _ = best
            if key[0] > bs or (key[0] == bs and (key[1] < bc or (key[1] == bc and cuts < bb))):
                best = (key, ids)
    if best is None:
        raise Unsegmentable(f"cannot segment {pretoken!r}")
    return best[1]


def _alphabet_split(pretoken: bytes, m: BpeModel) -> list[bytes]:
    """Greedy longest-match split of a pretoken into alphabet symbols."""
    out = []
    i, n = 0, len(pretoken)
    while i < n:
        hi = min(n, i + m.max_alpha_len)
        for end in range(hi, i, -1):
            if pretoken[i:end] in m.alphabet:
                out.append(pretoken[i:end])
                i = end
                break
        else:
            raise Unsegmentable(f"byte {pretoken[i:i+1]!r} outside BPE alphabet")
    return out


def bpe_encode(pretoken: bytes, m: BpeModel) -> list[int]:
    """Apply merges lowest-rank-first (leftmost on ties) until none applies."""
    if len(pretoken) == 0:
        return []
    symbols = _alphabet_split(bytes(pretoken), m)
    symbols = bpe_apply(symbols, m.ranks)
    return [m.vocab.id(s) for s in symbols]


def segment_pretoken(pretoken: bytes, t: TokenizerSpec) -> list[int]:
    """Segment one pretoken (raw bytes, no pretokenization) under a spec."""
    if t.kind == "unigram":
        return unigram_segment(pretoken, t.model)
    return bpe_encode(pretoken, t.model)


def encode(text: str, t: TokenizerSpec) -> list[int]:
    """Pretokenize, then segment each pretoken independently.

    Token boundaries never cross pretoken boundaries. Byte-level specs
    never raise Unsegmentable.
    """
    ids = []
    for pre in pretokenize(text, t.pretok):
        ids.extend(segment_pretoken(pre, t))
    return ids


def decode(ids, t: TokenizerSpec) -> bytes:
    """Concatenate token byte strings."""
    tokens = t.vocab.tokens
    out = []
    for i in ids:
        if not 0 <= i < len(tokens):
            raise IdOutOfRange(f"id {i} outside vocabulary of size {len(tokens)}")
        out.append(tokens[i])
    return b"".join(out)


def encode_tokens(text: str, t: TokenizerSpec) -> list[bytes]:
    """Like encode, but returns token byte strings (for cross-vocab compares)."""
    tokens = t.vocab.tokens
    return [tokens[i] for i in encode(text, t)]
