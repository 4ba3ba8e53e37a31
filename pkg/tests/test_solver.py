import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dual_bisection, projected_gradient, random_instance
from polybeam.solver import (InfeasibleError, NonConvergenceError, QcqpInstance, SolverOptions,
                             feasible_start, solve)


def _check_feasible(inst, sol):
    if inst.E.size:
        assert np.max(np.abs(inst.E @ sol.x - inst.f)) <= 1e-8
    assert np.all(inst.ball_norms(sol.x) <= inst.rho * (1 + 1e-6))


class TestTrivial:
    def test_identity_zero(self):
        inst = QcqpInstance(np.eye(4), np.zeros(4), np.zeros((0, 4)), np.zeros(0), [np.eye(4)], 1.0)
        sol = solve(inst)
        np.testing.assert_allclose(sol.x, 0, atol=1e-12)
        assert sol.active_balls == ()

    def test_inactive_balls_equal_null_space_ls(self, rng):
        A, b, E, f, balls, rho = random_instance(rng, n=12, n_eq=3, active=False)
        sol = solve(QcqpInstance(A, b, E, f, balls, rho))
        # independent equality-constrained LS through the full KKT system
        n, m = A.shape[1], E.shape[0]
        K = np.block([[2 * A.T @ A, E.T], [E, np.zeros((m, m))]])
        x_ref = np.linalg.solve(K, np.concatenate([2 * A.T @ b, f]))[:n]
        np.testing.assert_allclose(sol.x, x_ref, rtol=1e-8, atol=1e-10)
        assert sol.active_balls == ()

    def test_no_balls(self, rng):
        A = rng.standard_normal((8, 5))
        b = rng.standard_normal(8)
        sol = solve(QcqpInstance(A, b, np.zeros((0, 5)), np.zeros(0), [], 1.0))
        np.testing.assert_allclose(sol.x, np.linalg.lstsq(A, b, rcond=None)[0], rtol=1e-10)

    def test_fully_determined(self):
        E = np.eye(3)
        f = np.array([0.1, 0.2, 0.3])
        sol = solve(QcqpInstance(np.eye(3), np.ones(3), E, f, [np.eye(3)], 1.0))
        np.testing.assert_allclose(sol.x, f, atol=1e-15)

    def test_bad_instance(self):
        with pytest.raises(ValueError):
            QcqpInstance(np.eye(3), np.ones(3), np.zeros((0, 3)), np.zeros(0), [np.eye(3)], np.inf)
        with pytest.raises(ValueError):
            QcqpInstance(np.eye(3), np.ones(2), np.zeros((0, 3)), np.zeros(0), [], 1.0)


class TestOracles:
    @pytest.mark.parametrize("seed", range(60))
    def test_dual_bisection(self, seed):
        rng = np.random.default_rng(seed)
        A, b, E, f, balls, rho = random_instance(rng)
        inst = QcqpInstance(A, b, E, f, balls, rho)
        sol = solve(inst)
        _, primal, dual, lam = dual_bisection(A, b, E, f, balls, rho)
        assert sol.kkt_residual <= 1e-7
        assert abs(sol.objective - primal) <= 1e-6 * max(1.0, abs(primal))
        assert abs(primal - dual) <= 1e-6 * (1 + abs(primal))
        _check_feasible(inst, sol)
        # complementary slackness against the oracle's multipliers
        for i in range(len(balls)):
            if i not in sol.active_balls:
                assert sol.multipliers[i] < 1e-6

    def test_projected_gradient_six_vars(self, rng):
        n = 6
        Q1 = np.linalg.qr(rng.standard_normal((n, n)))[0]
        balls = [Q1[:, :3].T, Q1[:, 2:5].T]
        A = rng.standard_normal((9, n))
        x_far = 3 * rng.standard_normal(n)
        b = A @ x_far
        E = rng.standard_normal((1, n))
        f = E @ (0.1 * rng.standard_normal(n))
        rho = 0.5
        inst = QcqpInstance(A, b, E, f, balls, rho)
        sol = solve(inst)
        x0 = np.linalg.pinv(E) @ f
        _, pg = projected_gradient(A, b, E, f, balls, rho, x0)
        assert sol.active_balls
        assert abs(sol.objective - pg) <= 1e-4 * abs(pg)
        assert sol.objective <= pg * (1 + 1e-9)

    def test_cvxpy_cross_check(self, rng):
        cp = pytest.importorskip("cvxpy")
        A, b, E, f, balls, rho = random_instance(rng, n=10, n_balls=2, n_eq=2)
        x = cp.Variable(A.shape[1])
        cons = [E @ x == f] + [cp.norm(B @ x) <= rho for B in balls]
        prob = cp.Problem(cp.Minimize(cp.sum_squares(A @ x - b)), cons)
        prob.solve(solver=cp.CLARABEL)
        sol = solve(QcqpInstance(A, b, E, f, balls, rho))
        assert abs(sol.objective - prob.value) <= 1e-6 * max(1.0, prob.value)


class TestProperties:
    @pytest.mark.parametrize("seed", range(10))
    def test_duality_gap(self, seed):
        rng = np.random.default_rng(100 + seed)
        A, b, E, f, balls, rho = random_instance(rng)
        sol = solve(QcqpInstance(A, b, E, f, balls, rho))
        assert sol.duality_gap <= 1e-6 * (1 + abs(sol.objective))

    @pytest.mark.parametrize("seed", range(10))
    def test_stage_monotone(self, seed):
        rng = np.random.default_rng(200 + seed)
        A, b, E, f, balls, rho = random_instance(rng)
        sol = solve(QcqpInstance(A, b, E, f, balls, rho))
        h = np.array(sol.stage_objectives)
        assert np.all(np.diff(h) <= 1e-9 * (1 + np.abs(h[:-1])))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_tightening_rho(self, seed):
        rng = np.random.default_rng(seed)
        A, b, E, f, balls, rho = random_instance(rng)
        vals = []
        for r in rho * np.array([3.0, 1.5, 1.0, 0.8]):
            try:
                vals.append(solve(QcqpInstance(A, b, E, f, balls, r)).objective)
            except InfeasibleError:
                break
        assert np.all(np.diff(vals) >= -1e-8 * (1 + np.abs(vals[:-1])))

    def test_deterministic(self, rng):
        inst = QcqpInstance(*random_instance(rng))
        s1, s2 = solve(inst), solve(inst)
        assert np.array_equal(s1.x, s2.x)


class TestFeasibility:
    def test_infeasible_certificate(self):
        inst = QcqpInstance(np.eye(2), np.zeros(2), np.array([[1.0, 0.0]]), np.array([2.0]), [np.eye(2)], 1.0)
        with pytest.raises(InfeasibleError) as ei:
            solve(inst)
        assert ei.value.certificate == pytest.approx(1.0, abs=1e-4)

    def test_phase_one_needed(self):
        E = np.array([[1.0, 1.0]])
        f = np.array([2.0])
        B = np.array([[0.0, 1.0]])
        inst = QcqpInstance(np.eye(2), np.array([0.0, 3.0]), E, f, [B], 0.5)
        x0 = feasible_start(inst)
        assert abs(E @ x0 - f)[0] < 1e-10
        assert np.linalg.norm(B @ x0) < 0.5
        sol = solve(inst)
        np.testing.assert_allclose(sol.x, [1.5, 0.5], atol=1e-7)
        assert sol.active_balls == (0,)

    def test_min_norm_start(self):
        E = np.array([[1.0, 1.0]])
        inst = QcqpInstance(np.eye(2), np.zeros(2), E, np.array([1.0]), [np.eye(2)], 5.0)
        np.testing.assert_allclose(feasible_start(inst), [0.5, 0.5], atol=1e-14)

    def test_nonconvergence_carries_best(self, rng):
        A, b, E, f, balls, rho = random_instance(rng, n=20, n_balls=3, n_eq=2)
        inst = QcqpInstance(A, b, E, f, balls, rho)
        opts = SolverOptions(max_stages=1, max_newton=2, kkt_tol=1e-14)
        try:
            solve(inst, opts)
        except NonConvergenceError as exc:
            assert exc.best.x.shape == (20,)
        else:
            pytest.skip("instance solved within one stage")
