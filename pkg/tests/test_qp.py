"""Tests for the QP data types, KKT residual, and the splitting solver."""

import numpy as np
import pytest
import scipy.sparse as sp

from deepchub.qp import (
    QPSolution,
    QpSolver,
    QuadraticProgram,
    SolveStatus,
    dump_qp,
    kkt_residual,
    load_qp,
    objective_value,
    solve_qp,
)
from deepchub.validation import DimensionMismatch

from oracles import oracle_solve_qp, random_strictly_convex_qp


def make_qp(H, f, A_eq=None, b_eq=None, A_in=None, b_in=None):
    n = len(f)
    if A_eq is None:
        A_eq, b_eq = np.zeros((0, n)), np.zeros(0)
    if A_in is None:
        A_in, b_in = np.zeros((0, n)), np.zeros(0)
    return QuadraticProgram(
        H=np.asarray(H, dtype=float), f=f,
        A_eq=np.asarray(A_eq, dtype=float).reshape(-1, n), b_eq=b_eq,
        A_in=np.asarray(A_in, dtype=float).reshape(-1, n), b_in=b_in,
    )


class TestKktResidual:
    def test_zero_at_known_optimum(self):
        # min (x1-1)^2 + (x2-2.5)^2 over a pentagon; optimum (1.4, 1.7)
        # with only the first constraint active (lambda = 0.8).
        qp = make_qp(
            H=2 * np.eye(2), f=[-2.0, -5.0],
            A_in=[[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0], [-1.0, 0.0], [0.0, -1.0]],
            b_in=[2.0, 6.0, 2.0, 0.0, 0.0],
        )
        z = np.array([1.4, 1.7])
        lam = np.array([0.8, 0.0, 0.0, 0.0, 0.0])
        assert kkt_residual(qp, z, np.zeros(0), lam) < 1e-12

    def test_detects_stationarity_violation(self):
        qp = make_qp(H=np.eye(2), f=[0.0, 0.0])
        assert kkt_residual(qp, [1.0, 0.0], np.zeros(0), np.zeros(0)) == pytest.approx(1.0)

    def test_detects_primal_violation(self):
        qp = make_qp(H=np.eye(1), f=[0.0], A_in=[[1.0]], b_in=[-1.0])
        # z = 0 violates x <= -1 by 1
        assert kkt_residual(qp, [0.0], np.zeros(0), [0.0]) == pytest.approx(1.0)

    def test_detects_negative_multiplier_and_complementarity(self):
        qp = make_qp(H=np.eye(1), f=[0.0], A_in=[[1.0]], b_in=[5.0])
        assert kkt_residual(qp, [0.0], np.zeros(0), [-0.3]) >= 0.3
        # positive multiplier on a slack constraint: complementarity residual 5*0.2
        assert kkt_residual(qp, [0.0], np.zeros(0), [0.2]) >= 1.0 - 1e-12

    def test_dimension_checks(self):
        qp = make_qp(H=np.eye(2), f=[0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            kkt_residual(qp, [0.0], np.zeros(0), np.zeros(0))


class TestAnalyticSolves:
    def test_unconstrained(self):
        H = np.diag([2.0, 4.0])
        f = np.array([-2.0, -8.0])
        sol = solve_qp(make_qp(H, f))
        np.testing.assert_allclose(sol.z_star, [1.0, 2.0], atol=1e-8)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-6

    def test_equality_projection(self):
        # min 1/2||z||^2 s.t. sum(z) = 3 -> z = (1, 1, 1)
        qp = make_qp(np.eye(3), np.zeros(3), A_eq=[[1.0, 1.0, 1.0]], b_eq=[3.0])
        sol = solve_qp(qp)
        np.testing.assert_allclose(sol.z_star, np.ones(3), atol=1e-7)
        np.testing.assert_allclose(sol.duals_eq, [-1.0], atol=1e-7)

    def test_separable_bounds(self):
        # min 1/2||z - c||^2 s.t. z <= b -> z = min(c, b), lambda = max(c - b, 0)
        c = np.array([3.0, -1.0, 0.5])
        b = np.array([1.0, 1.0, 1.0])
        qp = make_qp(np.eye(3), -c, A_in=np.eye(3), b_in=b)
        sol = solve_qp(qp)
        np.testing.assert_allclose(sol.z_star, np.minimum(c, b), atol=1e-7)
        np.testing.assert_allclose(sol.duals_in, np.maximum(c - b, 0.0), atol=1e-7)

    def test_pentagon_problem(self):
        qp = make_qp(
            H=2 * np.eye(2), f=[-2.0, -5.0],
            A_in=[[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0], [-1.0, 0.0], [0.0, -1.0]],
            b_in=[2.0, 6.0, 2.0, 0.0, 0.0],
        )
        sol = solve_qp(qp)
        np.testing.assert_allclose(sol.z_star, [1.4, 1.7], atol=1e-7)
        np.testing.assert_allclose(sol.duals_in, [0.8, 0, 0, 0, 0], atol=1e-7)
        assert sol.objective == pytest.approx(objective_value(qp, [1.4, 1.7]))

    def test_redundant_active_rows(self):
        # duplicated active constraint: multipliers are non-unique but the
        # returned point must still satisfy the KKT conditions
        qp = make_qp(
            H=2 * np.eye(2), f=[-2.0, -2.0],
            A_in=[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], b_in=[0.0, 0.0, 0.0],
        )
        sol = solve_qp(qp)
        assert sol.status is SolveStatus.OPTIMAL
        np.testing.assert_allclose(sol.z_star, [0.0, 0.0], atol=1e-6)
        assert sol.kkt_residual <= 1e-6


class TestAgainstEnumerationOracle:
    def test_random_problems_match_oracle(self):
        solver = QpSolver()
        n_checked = 0
        for seed in range(40):
            H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(seed)
            ref = oracle_solve_qp(H, f, A_eq, b_eq, A_in, b_in)
            assert ref is not None, f"oracle says infeasible for seed {seed}"
            qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
            sol = solver.solve(qp)
            assert sol.status is SolveStatus.OPTIMAL, f"seed {seed}: {sol.status}"
            np.testing.assert_allclose(sol.z_star, ref[0], atol=1e-6,
                                       err_msg=f"seed {seed}")
            assert sol.kkt_residual <= 1e-6
            n_checked += 1
        assert n_checked == 40

    def test_oracle_agrees_with_textbook_solution(self):
        # sanity check of the oracle itself on the pentagon problem
        ref = oracle_solve_qp(
            2 * np.eye(2), [-2.0, -5.0], np.zeros((0, 2)), [],
            [[-1.0, 2.0], [1.0, 2.0], [1.0, -2.0], [-1.0, 0.0], [0.0, -1.0]],
            [2.0, 6.0, 2.0, 0.0, 0.0],
        )
        np.testing.assert_allclose(ref[0], [1.4, 1.7], atol=1e-12)


class TestInfeasibility:
    def test_contradictory_bounds(self):
        # x <= 0 and x >= 1
        qp = make_qp(np.eye(1), [0.0], A_in=[[1.0], [-1.0]], b_in=[0.0, -1.0])
        sol = solve_qp(qp)
        assert sol.status is SolveStatus.INFEASIBLE
        assert sol.certificate is not None
        # certificate: A' dy ~ 0 and negative support value
        dy = sol.certificate
        A = np.array([[1.0], [-1.0]])
        assert abs(A.T @ dy) <= 1e-6 * np.max(np.abs(dy))
        assert np.array([0.0, -1.0]) @ np.maximum(dy, 0) < 0

    def test_contradictory_equalities(self):
        qp = make_qp(np.eye(2), [0.0, 0.0],
                     A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[0.0, 1.0])
        sol = solve_qp(qp)
        assert sol.status is SolveStatus.INFEASIBLE

    def test_mixed_infeasible(self):
        # equality forces sum = 0, inequalities force both entries >= 1
        qp = make_qp(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[0.0],
                     A_in=[[-1.0, 0.0], [0.0, -1.0]], b_in=[-1.0, -1.0])
        sol = solve_qp(qp)
        assert sol.status is SolveStatus.INFEASIBLE


class TestStatusesAndDeterminism:
    def test_max_iter_status(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(3)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        sol = QpSolver(max_iter=5).solve(qp)
        assert sol.status in (SolveStatus.MAX_ITER, SolveStatus.OPTIMAL)
        if sol.status is SolveStatus.MAX_ITER:
            assert sol.kkt_residual > 1e-6

    def test_bitwise_determinism_across_instances(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(11)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        s1 = QpSolver().solve(qp)
        s2 = QpSolver().solve(qp)
        assert s1.z_star.tobytes() == s2.z_star.tobytes()
        assert s1.duals_in.tobytes() == s2.duals_in.tobytes()
        assert s1.objective == s2.objective
        assert s1.iterations == s2.iterations

    def test_warm_start_reproduces_solution(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(17)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        solver = QpSolver()
        cold = solver.solve(qp)
        warm = solver.solve(qp, warm_start=cold)
        np.testing.assert_allclose(warm.z_star, cold.z_star, atol=1e-6)
        assert warm.iterations == 0  # active-set fast path, no splitting iterations

    def test_warm_start_after_small_rhs_change(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(23)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        solver = QpSolver()
        base = solver.solve(qp)
        qp2 = QuadraticProgram(H=qp.H, f=qp.f + 1e-3, A_eq=qp.A_eq, b_eq=qp.b_eq,
                               A_in=qp.A_in, b_in=qp.b_in)
        warm = solver.solve(qp2, warm_start=base)
        cold = QpSolver().solve(qp2)
        np.testing.assert_allclose(warm.z_star, cold.z_star, atol=2e-6)
        assert warm.kkt_residual <= 1e-6


class TestSparseAndDiagonalInputs:
    def test_sparse_matrices_match_dense(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(29)
        dense = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        sparse = QuadraticProgram(
            H=sp.csc_matrix(H), f=f,
            A_eq=sp.csr_matrix(dense.A_eq), b_eq=b_eq,
            A_in=sp.csr_matrix(dense.A_in), b_in=b_in,
        )
        sd = solve_qp(dense)
        ss = solve_qp(sparse)
        np.testing.assert_allclose(ss.z_star, sd.z_star, atol=1e-6)

    def test_diagonal_hessian_path(self):
        # diagonal H goes through the cached range-space polish
        rng = np.random.default_rng(5)
        n = 30
        h = rng.uniform(0.5, 3.0, size=n)
        f = rng.normal(size=n)
        A_eq = rng.normal(size=(4, n))
        z0 = rng.normal(size=n)
        A_in = np.vstack([np.eye(n), -np.eye(n)])
        b_in = np.concatenate([z0 + 0.2, -z0 + 0.2])
        qp = QuadraticProgram(H=sp.diags(h), f=f, A_eq=A_eq, b_eq=A_eq @ z0,
                              A_in=sp.csr_matrix(A_in), b_in=b_in)
        sol = solve_qp(qp)
        assert sol.status is SolveStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-6
        ref = oracle_solve_qp(np.diag(h), f, A_eq, A_eq @ z0, A_in, b_in) \
            if n <= 10 else None
        # oracle too slow here; verify optimality via KKT instead
        assert kkt_residual(qp, sol.z_star, sol.duals_eq, sol.duals_in) <= 1e-6

    def test_infinite_upper_bounds_allowed(self):
        qp = make_qp(np.eye(2), [-1.0, -1.0],
                     A_in=[[1.0, 0.0], [0.0, 1.0]], b_in=[0.5, np.inf])
        sol = solve_qp(qp)
        np.testing.assert_allclose(sol.z_star, [0.5, 1.0], atol=1e-7)


class TestValidationAndDump:
    def test_validate_rejects_asymmetric(self):
        qp = make_qp(np.array([[1.0, 0.5], [0.0, 1.0]]), [0.0, 0.0])
        with pytest.raises(ValueError):
            qp.validate()

    def test_validate_rejects_indefinite(self):
        qp = make_qp(np.array([[1.0, 0.0], [0.0, -1.0]]), [0.0, 0.0])
        with pytest.raises(ValueError):
            qp.validate()

    def test_validate_accepts_well_formed(self):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(31)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        qp.var_names = [f"z{i}" for i in range(qp.n)]
        qp.validate()

    def test_validate_rejects_bad_names(self):
        qp = make_qp(np.eye(2), [0.0, 0.0])
        qp.var_names = ["only_one"]
        with pytest.raises(DimensionMismatch):
            qp.validate()

    def test_dump_round_trip(self, tmp_path):
        H, f, A_eq, b_eq, A_in, b_in = random_strictly_convex_qp(37)
        qp = make_qp(H, f, A_eq, b_eq, A_in, b_in)
        qp.var_names = [f"z{i}" for i in range(qp.n)]
        path = tmp_path / "problem.qp"
        dump_qp(qp, path)
        back = load_qp(path)
        np.testing.assert_array_equal(np.asarray(back.H), H)
        np.testing.assert_array_equal(back.f, qp.f)
        np.testing.assert_array_equal(back.b_in, qp.b_in)
        assert back.var_names == qp.var_names
        s1, s2 = solve_qp(qp), solve_qp(back)
        np.testing.assert_allclose(s1.z_star, s2.z_star, atol=1e-9)
