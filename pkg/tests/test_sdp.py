import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ftstab.errors import ConditioningError, ValidationError
from ftstab.sdp import (
    AffineMatrixInequality,
    Status,
    eig_sym,
    inv_sqrt_spd,
    lambda_max,
    solve_feasibility,
    sqrt_spd,
)


def lyapunov_problem(a, delta=1e-3):
    # a^2 p - p < 0 and p > delta
    prob = AffineMatrixInequality(1)
    prob.add([[0.0]], [(0, [[a * a - 1.0]])], "decrease")
    prob.add([[delta]], [(0, [[-1.0]])], "floor")
    return prob


def interval_problem():
    prob = AffineMatrixInequality(1)
    prob.add([[0.0]], [(0, [[1.0]])], "x < 0")
    prob.add([[-1.0]], [(0, [[-1.0]])], "x > -1")
    return prob


class TestEigSym:
    def test_diagonal(self):
        w, V = eig_sym(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(w, [1.0, 3.0])
        np.testing.assert_allclose(np.abs(V), np.array([[0, 1], [1, 0]]), atol=1e-15)

    def test_swap(self):
        w, _ = eig_sym([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(w, [-1.0, 1.0], atol=1e-15)

    def test_random_residual(self, rng):
        G = rng.normal(size=(5, 5))
        M = G + G.T
        w, V = eig_sym(M)
        assert np.linalg.norm(M @ V - V * w) <= 1e-12 * np.linalg.norm(M)
        np.testing.assert_allclose(V.T @ V, np.eye(5), atol=1e-13)
        assert np.all(np.diff(w) >= 0)

    def test_huge_entries_do_not_overflow(self):
        M = np.array([[1e300, 1e-10], [1e-10, -1e300]])
        w, _ = eig_sym(M)
        assert np.all(np.isfinite(w))
        np.testing.assert_allclose(w, [-1e300, 1e300])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
    def test_agrees_with_lapack(self, G):
        M = G + G.T
        w, _ = eig_sym(M)
        np.testing.assert_allclose(w, np.linalg.eigvalsh(M), atol=1e-12 * max(1.0, np.abs(M).max()))


class TestSquareRoots:
    def test_identity(self):
        np.testing.assert_allclose(sqrt_spd(np.eye(3)), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(sqrt_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)

    def test_random_reconstruction(self, rng):
        G = rng.normal(size=(4, 4))
        M = G.T @ G + np.eye(4)
        S = sqrt_spd(M)
        np.testing.assert_allclose(S, S.T, atol=1e-14)
        assert np.linalg.norm(S @ S - M) <= 1e-10 * np.linalg.norm(M)
        np.testing.assert_allclose(inv_sqrt_spd(M) @ S, np.eye(4), atol=1e-10)

    def test_singular_rejected(self):
        with pytest.raises(ConditioningError, match="R_3"):
            sqrt_spd(np.diag([1.0, 1e-14]), "R_3")


class TestProblem:
    def test_asymmetric_block_rejected(self):
        prob = AffineMatrixInequality(1)
        prob.add([[0.0, 1.0], [0.0, 0.0]], [], "bad")
        assert any("not symmetric" in p for p in prob.check())
        with pytest.raises(ValidationError):
            solve_feasibility(prob)

    def test_lambda_max(self):
        assert lambda_max(np.diag([-2.0, 5.0])) == pytest.approx(5.0)


class TestSolver:
    def test_constant_feasible(self):
        prob = AffineMatrixInequality(1)
        prob.add([[-1.0]], [(0, [[0.0]])])
        res = solve_feasibility(prob)
        assert res.status is Status.STRICTLY_FEASIBLE
        assert res.tstar <= -1.0 + 1e-12

    def test_interval(self):
        res = solve_feasibility(interval_problem())
        assert res.feasible
        assert -1.0 < res.x[0] < 0.0

    @pytest.mark.parametrize("a,expected", [(0.5, True), (0.9, True), (1.0, False), (1.5, False)])
    def test_scalar_lyapunov(self, a, expected):
        assert solve_feasibility(lyapunov_problem(a)).feasible is expected

    def test_infeasible_status(self):
        res = solve_feasibility(lyapunov_problem(1.5))
        assert res.status is Status.INFEASIBLE
        assert res.tstar >= -1e-9

    def test_returned_points_reverify(self, rng):
        for _ in range(10):
            n = 3
            M = rng.uniform(-1, 1, (n, n))
            M *= 0.9 / max(abs(np.linalg.eigvals(M)))
            # P > I and M' P M - P < 0 over symmetric P
            prob = AffineMatrixInequality(6)
            idx = 0
            basis = []
            for i in range(n):
                for j in range(i + 1):
                    E = np.zeros((n, n))
                    E[i, j] = E[j, i] = 1.0
                    basis.append((idx, E))
                    idx += 1
            prob.add(np.zeros((n, n)), [(i, M.T @ E @ M - E) for i, E in basis], "decrease")
            prob.add(np.eye(n), [(i, -E) for i, E in basis], "P > I")
            res = solve_feasibility(prob)
            assert res.feasible
            assert max(prob.max_eigenvalues(res.x)) < -1e-9

    def test_deterministic(self):
        a = solve_feasibility(interval_problem())
        b = solve_feasibility(interval_problem())
        assert a.x.tobytes() == b.x.tobytes() and a.iterations == b.iterations

    @pytest.mark.parametrize("a", [0.5, 1.5])
    def test_scale_robust(self, a):
        prob = lyapunov_problem(a)
        assert solve_feasibility(prob.scaled(1e3)).feasible is solve_feasibility(prob).feasible
