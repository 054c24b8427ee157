# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled segmentation and counting kernels.

Mirrors zett.kernels.pure exactly: same results bit for bit, including
Viterbi tie-breaks (score, then token count, then earliest boundary
tuple) and identical left-to-right float folds. Keep the two in sync.
"""

from libc.stdlib cimport free, malloc


cdef tuple _bounds(int* back, int i):
    cuts = []
    while i > 0:
        i = back[i]
        if i > 0:
            cuts.append(i)
    cuts.reverse()
    return tuple(cuts)


def viterbi_segment(bytes pretoken, dict index, scores, int max_token_len):
    """Best-scoring decomposition of `pretoken` as token ids, or None."""
    cdef int n = len(pretoken)
    if n == 0:
        return []
    cdef double NEG = float("-inf")
    cdef double* best = <double*> malloc((n + 1) * sizeof(double))
    cdef int* count = <int*> malloc((n + 1) * sizeof(int))
    cdef int* back = <int*> malloc((n + 1) * sizeof(int))
    cdef int* tok = <int*> malloc((n + 1) * sizeof(int))
    if not (best and count and back and tok):
        free(best); free(count); free(back); free(tok)
        raise MemoryError()
    cdef int i, j, lo, c
    cdef double s
    cdef bint take
    cdef object tid_obj
    cdef int tid
    try:
        for j in range(n + 1):
            best[j] = NEG
            count[j] = 0
            back[j] = -1
            tok[j] = -1
        best[0] = 0.0
        for j in range(1, n + 1):
            lo = j - max_token_len if j > max_token_len else 0
            for i in range(lo, j):
                if best[i] == NEG:
                    continue
                tid_obj = index.get(pretoken[i:j])
                if tid_obj is None:
                    continue
                tid = tid_obj
                s = best[i] + scores[tid]
                c = count[i] + 1
                take = False
                if s > best[j]:
                    take = True
                elif s == best[j]:
                    if c < count[j]:
                        take = True
                    elif c == count[j]:
                        cand = _bounds(back, i) + ((i,) if i > 0 else ())
                        cur = _bounds(back, back[j]) + ((back[j],) if back[j] > 0 else ())
                        take = cand < cur
                if take:
                    best[j] = s
                    count[j] = c
                    back[j] = i
                    tok[j] = tid
        if best[n] == NEG:
            return None
        ids = []
        j = n
        while j > 0:
            ids.append(tok[j])
            j = back[j]
        ids.reverse()
        return ids
    finally:
        free(best)
        free(count)
        free(back)
        free(tok)


def count_substrings(dict table, pretokens, int max_len, int sign):
    """Add or remove substring occurrence counts in place (see pure twin)."""
    cdef bytes p
    cdef int L, i, j, hi
    cdef object cur
    for p in pretokens:
        L = len(p)
        for i in range(L):
            hi = i + max_len
            if hi > L:
                hi = L
            for j in range(i + 1, hi + 1):
                sub = p[i:j]
                cur = table.get(sub)
                if cur is None:
                    table[sub] = sign
                else:
                    c = cur + sign
                    if c:
                        table[sub] = c
                    else:
                        del table[sub]


def bpe_apply(list symbols, dict ranks):
    """Apply merges: earliest-ranked first, leftmost occurrence on ties."""
    cdef int best_pos, pos, m
    cdef long best_rank, r
    cdef object r_obj
    while len(symbols) > 1:
        best_rank = -1
        best_pos = -1
        m = len(symbols) - 1
        for pos in range(m):
            r_obj = ranks.get((symbols[pos], symbols[pos + 1]))
            if r_obj is not None:
                r = r_obj
                if best_pos < 0 or r < best_rank:
                    best_rank = r
                    best_pos = pos
        if best_pos < 0:
            break
        symbols[best_pos : best_pos + 2] = [symbols[best_pos] + symbols[best_pos + 1]]
    return symbols
