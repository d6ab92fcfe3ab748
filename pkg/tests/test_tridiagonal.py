import numpy as np
import pytest

from core.errors import DiscretizationError
from core.tridiagonal import TridiagonalSystem, solve_tridiagonal


def _system(sub, diag, sup, rhs):
    return TridiagonalSystem(*(np.asarray(v, dtype=float) for v in (sub, diag, sup, rhs)))


def test_identity_system_returns_rhs():
    n = 6
    rhs = np.arange(n, dtype=float)
    u = solve_tridiagonal(_system(np.zeros(n), np.ones(n), np.zeros(n), rhs))
    np.testing.assert_array_equal(u, rhs)


def test_hand_solved_three_by_three():
    u = solve_tridiagonal(_system([0, -1, -1], [3, 3, 3], [-1, -1, 0], [1, 1, 1]))
    np.testing.assert_allclose(u, [4 / 7, 5 / 7, 4 / 7], atol=1e-14)


def test_random_m_matrices_match_dense_solve():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        sub = -rng.uniform(0, 5, n)
        sup = -rng.uniform(0, 5, n)
        sub[0] = 0.0
        sup[-1] = 0.0
        diag = np.abs(sub) + np.abs(sup) + rng.uniform(0.01, 3, n)
        system = _system(sub, diag, sup, rng.normal(size=n))
        expected = np.linalg.solve(system.to_dense(), system.rhs)
        np.testing.assert_allclose(solve_tridiagonal(system, check_residual=True), expected, atol=1e-12, rtol=1e-10)


def test_matvec_matches_dense_product():
    rng = np.random.default_rng(5)
    system = _system(rng.normal(size=7), rng.normal(size=7) + 5, rng.normal(size=7), np.zeros(7))
    u = rng.normal(size=7)
    np.testing.assert_allclose(system.matvec(u), system.to_dense() @ u, atol=1e-13)


def test_size_mismatch_raises():
    with pytest.raises(DiscretizationError):
        solve_tridiagonal(_system([0, 0], [1, 1, 1], [0, 0, 0], [1, 1, 1]))


def test_singular_system_raises():
    with pytest.raises(DiscretizationError):
        solve_tridiagonal(_system([0, 0, 0], [1, 0, 1], [0, 0, 0], [1, 1, 1]))
