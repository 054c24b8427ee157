import itertools

import numpy as np
import pytest
import scipy.optimize
import scipy.sparse as sp

from zett import lp


def brute_hinge_min(A, delta, grid):
    """Grid-scan oracle: minimal hinge sum over a coarse score grid."""
    best = np.inf
    n = A.shape[1]
    for s in itertools.product(grid, repeat=n):
        best = min(best, lp.hinge_sum(A, np.array(s, float), delta))
    return best


def scipy_hinge_min(A, delta):
    """Epigraph LP via scipy.linprog (independent exact oracle)."""
    A = np.asarray(A, float)
    m, n = A.shape
    c = np.concatenate([np.zeros(n), np.ones(m)])
    A_ub = np.hstack([A, -np.eye(m)])
    b_ub = np.full(m, -delta)
    bounds = [(None, None)] * n + [(0, None)] * m
    res = scipy.optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def test_zero_constraints_returns_defaults():
    sol = lp.solve(sp.csr_matrix((0, 4)), delta=1e-6)
    assert sol.objective == 0.0
    assert np.array_equal(sol.scores, np.zeros(4))
    s0 = np.array([1.0, -2.0, 3.0, 4.0])
    sol = lp.solve(sp.csr_matrix((0, 4)), s0=s0)
    assert np.array_equal(sol.scores, s0)


def test_separable_instance_reaches_zero():
    # one constraint: s(a) + s(b) - s(ab) + delta <= slack  (vars a, b, ab)
    A = np.array([[1.0, 1.0, -1.0]])
    for backend in ("simplex", "subgradient"):
        sol = lp.solve(A, delta=1e-6, backend=backend)
        assert sol.objective == pytest.approx(0.0, abs=1e-12)
        assert sol.hinge == 0.0
        s = sol.scores
        assert s[2] > s[0] + s[1]


def test_infeasible_instance_matches_grid_oracle():
    # two pretokens forcing s(ab) > and < s(a) + s(b): hinge floor is 2*delta,
    # i.e. a delta-free residual that cannot reach zero
    delta = 0.25  # coarse margin so the grid oracle can see it
    A = np.array([[1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    oracle = brute_hinge_min(A, delta, grid=np.linspace(-2, 2, 17))
    sol = lp.solve(A, delta=delta, backend="simplex")
    assert sol.objective == pytest.approx(oracle, abs=1e-9)
    assert sol.objective == pytest.approx(2 * delta, abs=1e-9)
    # the optimum ties both decompositions exactly: the margined objective
    # (not the delta-free hinge) is what witnesses non-recovery
    assert sol.hinge == 0.0


def test_simplex_matches_scipy_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(25):
        m, n = int(rng.integers(1, 8)), int(rng.integers(1, 5))
        A = rng.integers(-2, 3, size=(m, n)).astype(float)
        delta = float(rng.choice([1e-6, 0.1, 0.5]))
        sol = lp.solve(A, delta=delta, backend="simplex")
        assert sol.objective == pytest.approx(scipy_hinge_min(A, delta), abs=1e-7)


def test_subgradient_tracks_simplex():
    rng = np.random.default_rng(1)
    for _ in range(15):
        m, n = int(rng.integers(1, 10)), int(rng.integers(1, 5))
        A = rng.integers(-2, 3, size=(m, n)).astype(float)
        exact = lp.solve(A, delta=0.2, backend="simplex").objective
        sub = lp.solve(A, delta=0.2, backend="subgradient", max_iter=6000).objective
        assert sub <= exact + max(0.05 * exact, 1e-6)


def test_auto_backend_switches_on_size():
    A = sp.random(3000, 50, density=0.01, format="csr", random_state=0)
    sol = lp.solve(A, delta=1e-6, backend="auto", max_iter=10)
    assert sol.backend == "subgradient"
    sol2 = lp.solve(np.ones((2, 2)), backend="auto")
    assert sol2.backend == "simplex"
