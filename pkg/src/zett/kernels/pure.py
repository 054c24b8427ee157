"""Pure-Python segmentation and counting kernels.

These are the fallback implementations of the hot inner loops; the
Cython module zett.kernels._speed mirrors them exactly (same results,
bit for bit, including tie-breaks). Keep the two in sync.

Viterbi tie-break, in order: highest total score, then fewest tokens,
then lexicographically smallest tuple of interior cut positions.
Partial scores are left-to-right folds (best[i] + score[token]), so
float results are reproducible and identical to a brute-force fold.
"""


def _bounds(back: list, i: int) -> tuple:
    """Interior cut positions of the chosen decomposition of pretoken[:i]."""
    cuts = []
    while i > 0:
        i = back[i]
        if i > 0:
            cuts.append(i)
    cuts.reverse()
    return tuple(cuts)


def viterbi_segment(pretoken: bytes, index: dict, scores, max_token_len: int):
    """Best-scoring decomposition of `pretoken` as token ids, or None.

    `index` maps token bytes to ids, `scores` is indexable by id.
    """
    n = len(pretoken)
    if n == 0:
        return []
    NEG = float("-inf")
    best = [NEG] * (n + 1)
    count = [0] * (n + 1)
    back = [-1] * (n + 1)
    tok = [-1] * (n + 1)
    best[0] = 0.0
    for j in range(1, n + 1):
        lo = j - max_token_len if j > max_token_len else 0
        for i in range(lo, j):
            if best[i] == NEG:
                continue
            tid = index.get(pretoken[i:j])
            if tid is None:
                continue
            s = best[i] + scores[tid]
            c = count[i] + 1
            if s > best[j]:
                take = True
            elif s == best[j]:
                if c < count[j]:
                    take = True
                elif c == count[j]:
                    cand = _bounds(back, i) + ((i,) if i > 0 else ())
                    cur = _bounds(back, back[j]) + ((back[j],) if back[j] > 0 else ())
                    take = cand < cur
                else:
                    take = False
            else:
                take = False
            if take:
                best[j], count[j], back[j], tok[j] = s, c, i, tid
    if best[n] == NEG:
        return None
    ids = []
    j = n
    while j > 0:
        ids.append(tok[j])
        j = back[j]
    ids.reverse()
    return ids


def count_substrings(table: dict, pretokens, max_len: int, sign: int) -> None:
    """Add (sign=+1) or remove (sign=-1) substring occurrence counts in place.

    Counts every occurrence of every substring of each pretoken up to
    max_len bytes. Entries that reach zero are deleted, so the table is
    always equal to a from-scratch count.
    """
    for p in pretokens:
        L = len(p)
        for i in range(L):
            hi = i + max_len
            if hi > L:
                hi = L
            for j in range(i + 1, hi + 1):
                sub = p[i:j]
                c = table.get(sub, 0) + sign
                if c:
                    table[sub] = c
                else:
                    del table[sub]


def bpe_apply(symbols: list, ranks: dict) -> list:
    """Apply merges to a symbol list: earliest-ranked first, leftmost on ties."""
    while len(symbols) > 1:
        best_rank = -1
        best_pos = -1
        for pos in range(len(symbols) - 1):
            r = ranks.get((symbols[pos], symbols[pos + 1]))
            if r is not None and (best_pos < 0 or r < best_rank):
                best_rank = r
                best_pos = pos
        if best_pos < 0:
            break
        symbols[best_pos : best_pos + 2] = [symbols[best_pos] + symbols[best_pos + 1]]
    return symbols
