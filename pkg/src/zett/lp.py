"""Hinge-sum minimization for tokenizer approximation.

The problem: given constraint rows A (one row per competing
decomposition, entries are token-count differences competitor-minus-
reference) choose per-token scores s minimizing

    sum_c max(0, (A s)_c + delta)

where delta > 0 turns the strict dominance requirement into a margin.
In epigraph form this is a standard LP (slack variables xi_c >= 0,
objective sum xi). Two backends:

  * a dense primal simplex (exact; small problems and test oracle),
  * projected subgradient descent on the hinge sum directly (scales to
    hundreds of thousands of sparse rows; box projection on scores).

`solve` picks the simplex when the tableau stays small.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import IterationLimit, Unbounded

SIMPLEX_CELL_LIMIT = 2_000_000  # tableau cells: rows x (2 vars + 2 rows + 1)


@dataclass
class LpSolution:
    scores: np.ndarray
    objective: float  # hinge sum including the delta margin
    hinge: float  # delta-free hinge sum (the reported residual)
    backend: str
    iterations: int


def hinge_sum(A, s, delta=0.0) -> float:
    if A.shape[0] == 0:
        return 0.0
    margins = A @ s + delta
    return float(np.maximum(margins, 0.0).sum())


def solve_simplex(A, delta, max_iter=50_000):
    """Exact primal simplex on the epigraph LP. A is dense (m, n)."""
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if m == 0:
        return np.zeros(n), 0
    # variables: [s+ (n), s- (n), xi (m), w (m)]; rows: -A s+ + A s- + xi - w = delta
    cols = 2 * n + 2 * m
    T = np.zeros((m, cols + 1))
    T[:, :n] = -A
    T[:, n : 2 * n] = A
    T[:, 2 * n : 2 * n + m] = np.eye(m)
    T[:, 2 * n + m : cols] = -np.eye(m)
    T[:, cols] = delta
    c = np.zeros(cols)
    c[2 * n : 2 * n + m] = 1.0
    basis = list(range(2 * n, 2 * n + m))
    tol = 1e-9

    for it in range(max_iter):
        r = c - c[basis] @ T[:, :cols]
        # Dantzig rule early, Bland afterwards (anti-cycling)
        neg = np.flatnonzero(r < -tol)
        if neg.size == 0:
            break
        j = int(neg[np.argmin(r[neg])]) if it < 5000 else int(neg[0])
        col = T[:, j]
        pos = col > tol
        if not np.any(pos):
            raise Unbounded("unbounded simplex direction")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[pos, cols] / col[pos]
        i = int(np.argmin(ratios))
        piv = T[i, j]
        T[i] /= piv
        for k in range(m):
            if k != i and T[k, j] != 0.0:
                T[k] -= T[k, j] * T[i]
        basis[i] = j
    else:
        raise IterationLimit(f"simplex did not converge in {max_iter} iterations")

    x = np.zeros(cols)
    x[basis] = T[:, cols]
    s = x[:n] - x[n : 2 * n]
    return s, it


def solve_subgradient(A, delta, s0=None, bound=100.0, max_iter=4000, stall_patience=50):
    """Projected subgradient descent on the hinge sum (Polyak-style steps)."""
    A = sp.csr_matrix(A, dtype=np.float64)
    m, n = A.shape
    s = np.zeros(n) if s0 is None else np.clip(np.asarray(s0, dtype=np.float64), -bound, bound)
    if m == 0:
        return s, 0
    best_f = np.inf
    best_s = s.copy()
    target = 0.0
    stall = 0
    for it in range(max_iter):
        margins = A @ s + delta
        active = margins > 0
        f = float(margins[active].sum())
        if f < best_f - 1e-15:
            best_f, best_s, stall = f, s.copy(), 0
        else:
            stall += 1
            if stall > stall_patience:
                target = 0.9 * best_f  # infeasible instance: chase the floor
                stall = 0
        if f == 0.0:
            return s, it
        g = A.T @ active.astype(np.float64)
        gg = float(g @ g)
        if gg == 0.0:
            break
        step = (f - target) / gg
        s = np.clip(s - step * g, -bound, bound)
    return best_s, max_iter


def solve(A, delta=1e-6, s0=None, backend="auto", **kw) -> LpSolution:
    """Minimize the margin hinge sum; `A` sparse or dense (m rows, n vars)."""
    A = sp.csr_matrix(A, dtype=np.float64)
    m, n = A.shape
    if m == 0:
        s = np.zeros(n) if s0 is None else np.asarray(s0, dtype=np.float64)
        return LpSolution(s, 0.0, 0.0, "none", 0)
    if backend == "auto":
        backend = "simplex" if m * (2 * n + 2 * m + 1) <= SIMPLEX_CELL_LIMIT else "subgradient"
    if backend == "simplex":
        s, iters = solve_simplex(A.toarray(), delta)
    elif backend == "subgradient":
        s, iters = solve_subgradient(A, delta, s0=s0, **kw)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return LpSolution(s, hinge_sum(A, s, delta), hinge_sum(A, s, 0.0), backend, iters)
