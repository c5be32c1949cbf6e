import numpy as np
import pytest

from slipgait.solver import (
    NlpProblem,
    SolverOptions,
    kkt_residual,
    max_violation,
    solve,
)


def quadratic_problem():
    # min (x-2)^2 with bound x >= 3
    return NlpProblem(
        n=1,
        objective=lambda x: float((x[0] - 2.0) ** 2),
        gradient=lambda x: np.array([2.0 * (x[0] - 2.0)]),
        lb=np.array([3.0]),
        ub=np.array([np.inf]),
    )


def equality_problem():
    # min x^2 + y^2 s.t. x + y = 1
    return NlpProblem(
        n=2,
        objective=lambda x: float(x @ x),
        gradient=lambda x: 2.0 * x,
        eq=lambda x: np.array([x[0] + x[1] - 1.0]),
        eq_jac=lambda x: np.array([[1.0, 1.0]]),
    )


class TestSolve:
    def test_active_bound(self):
        report = solve(quadratic_problem(), np.array([10.0]))
        assert report.status == "Converged"
        assert report.x[0] == pytest.approx(3.0, abs=1e-8)

    def test_equality_constrained_symmetric(self):
        report = solve(equality_problem(), np.array([5.0, -3.0]))
        assert report.status == "Converged"
        assert np.allclose(report.x, [0.5, 0.5], atol=1e-7)

    def test_rosenbrock(self):
        def f(x):
            return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

        def g(x):
            return np.array([
                -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1 - x[0]),
                200.0 * (x[1] - x[0] ** 2),
            ])

        problem = NlpProblem(n=2, objective=f, gradient=g)
        report = solve(problem, np.array([-1.2, 1.0]))
        assert report.status == "Converged"
        assert np.allclose(report.x, [1.0, 1.0], atol=1e-6)
        # gradient-norm oracle at the returned point
        assert np.linalg.norm(g(report.x)) < 1e-4

    def test_inequality_constraint(self):
        # min (x+1)^2 + y^2 s.t. x >= 1 expressed as general inequality
        problem = NlpProblem(
            n=2,
            objective=lambda x: float((x[0] + 1.0) ** 2 + x[1] ** 2),
            gradient=lambda x: np.array([2.0 * (x[0] + 1.0), 2.0 * x[1]]),
            ineq=lambda x: np.array([x[0] - 1.0]),
            ineq_jac=lambda x: np.array([[1.0, 0.0]]),
        )
        report = solve(problem, np.array([4.0, 2.0]))
        assert report.status == "Converged"
        assert np.allclose(report.x, [1.0, 0.0], atol=1e-6)
        assert report.lam_ineq[0] == pytest.approx(-4.0, abs=1e-3)

    def test_randomized_equality_qps_match_kkt_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(12):
            n = rng.integers(3, 21)
            m = rng.integers(1, max(2, n - 1))
            root = rng.normal(size=(n, n))
            H = root @ root.T + n * np.eye(n)
            q = rng.normal(size=n)
            A = rng.normal(size=(m, n))
            b = rng.normal(size=m)

            problem = NlpProblem(
                n=int(n),
                objective=lambda x, H=H, q=q: float(0.5 * x @ H @ x + q @ x),
                gradient=lambda x, H=H, q=q: H @ x + q,
                eq=lambda x, A=A, b=b: A @ x - b,
                eq_jac=lambda x, A=A: A,
            )
            # closed-form KKT oracle: solve the saddle system directly
            kkt = np.block([[H, A.T], [A, np.zeros((m, m))]])
            sol = np.linalg.solve(kkt, np.concatenate([-q, b]))
            x_star = sol[:n]

            opts = SolverOptions(feas_tol=1e-8, opt_tol=1e-6)
            report = solve(problem, rng.normal(size=n), opts)
            assert report.status == "Converged"
            assert np.max(np.abs(report.x - x_star)) < 1e-6

    def test_merit_decreases_within_each_outer_iteration(self):
        report = solve(equality_problem(), np.array([8.0, -6.0]))
        for start, end in report.merit_history:
            assert end <= start + 1e-9 * max(1.0, abs(start))

    def test_converged_report_passes_independent_audit(self):
        problem = equality_problem()
        opts = SolverOptions()
        report = solve(problem, np.array([2.0, 2.0]), opts)
        assert report.status == "Converged"
        assert max_violation(problem, report.x) <= opts.feas_tol
        assert kkt_residual(problem, report.x, report.lam_eq, report.lam_ineq) <= 5 * opts.opt_tol

    def test_nonfinite_start_rejected(self):
        problem = NlpProblem(
            n=1,
            objective=lambda x: float(np.log(x[0])),
            gradient=lambda x: np.array([1.0 / x[0]]),
        )
        with pytest.raises(ValueError):
            solve(problem, np.array([-1.0]))

    def test_unbounded_descent_reports_diverged(self):
        problem = NlpProblem(
            n=1,
            objective=lambda x: float(-x[0] ** 3),
            gradient=lambda x: np.array([-3.0 * x[0] ** 2]),
        )
        report = solve(problem, np.array([1.0]), SolverOptions(max_outer=3))
        assert report.status in ("Diverged", "IterationLimit")
        assert report.status != "Converged"

    def test_warm_start_multiplier_shapes_checked(self):
        with pytest.raises(ValueError):
            solve(equality_problem(), np.zeros(2), warm_lam_eq=np.zeros(3))


class TestKktResidual:
    def test_unconstrained_quadratic_vertex(self):
        problem = NlpProblem(
            n=2,
            objective=lambda x: float((x - 1.0) @ (x - 1.0)),
            gradient=lambda x: 2.0 * (x - 1.0),
        )
        assert kkt_residual(problem, np.ones(2)) == 0.0

    def test_hand_evaluated_equality_kkt(self):
        # grad f + lam * grad c = (1,1) + (-1)(1,1) = 0 at (0.5, 0.5)
        assert kkt_residual(equality_problem(), np.array([0.5, 0.5]),
                            lam_eq=np.array([-1.0])) == pytest.approx(0.0, abs=1e-12)

    def test_positive_at_nonstationary_point(self):
        assert kkt_residual(equality_problem(), np.array([2.0, 1.0]),
                            lam_eq=np.array([-1.0])) > 0.1
