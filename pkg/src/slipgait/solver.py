"""Smooth NLP solver: augmented Lagrangian outer loop, L-BFGS-B inner loop.

Solves
    min f(x)  s.t.  c_eq(x) = 0,  c_ineq(x) >= 0,  lb <= x <= ub

by the method of multipliers. Equalities enter the merit as
``lam . c + rho/2 |c|^2``; inequalities use the Powell-Hestenes-Rockafellar
form ``(min(0, mu + rho g)^2 - mu^2) / (2 rho)`` so inactive constraints drop
out smoothly. The bound-constrained inner minimization is delegated to
scipy's limited-memory quasi-Newton (L-BFGS-B).

Multiplier convention: the Lagrangian is ``f + lam . c_eq + mu . c_ineq``,
so inequality multipliers are nonpositive at a solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize


@dataclass
class NlpProblem:
    """Problem functions. Constraint callables may be None when absent.

    Jacobians are dense arrays of shape (n_constraints, n).
    """

    n: int
    objective: callable
    gradient: callable
    eq: callable = None
    eq_jac: callable = None
    ineq: callable = None
    ineq_jac: callable = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        if self.lb is None:
            self.lb = np.full(self.n, -np.inf)
        if self.ub is None:
            self.ub = np.full(self.n, np.inf)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise ValueError("bound shapes inconsistent with problem dimension")
        if (self.eq is None) != (self.eq_jac is None):
            raise ValueError("eq and eq_jac must be provided together")
        if (self.ineq is None) != (self.ineq_jac is None):
            raise ValueError("ineq and ineq_jac must be provided together")

    def eq_vals(self, x):
        return np.zeros(0) if self.eq is None else np.asarray(self.eq(x), dtype=float)

    def ineq_vals(self, x):
        return np.zeros(0) if self.ineq is None else np.asarray(self.ineq(x), dtype=float)


@dataclass
class SolverOptions:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-4
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e9
    violation_shrink: float = 0.25   # required per-outer violation reduction
    verbose: bool = False


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    max_violation: float
    stationarity: float
    status: str                       # Converged | IterationLimit | Diverged
    outer_iterations: int
    inner_iterations: int
    lam_eq: np.ndarray
    lam_ineq: np.ndarray
    merit_history: list = field(default_factory=list)  # (start, end) per outer

    @property
    def converged(self):
        return self.status == "Converged"


def max_violation(problem, x):
    """Infinity norm of constraint violation (equalities and g >= 0)."""
    viol = 0.0
    c = problem.eq_vals(x)
    if c.size:
        viol = float(np.max(np.abs(c)))
    g = problem.ineq_vals(x)
    if g.size:
        viol = max(viol, float(np.max(np.maximum(0.0, -g))))
    return viol


def _lagrangian_grad(problem, x, lam_eq, lam_ineq):
    grad = np.asarray(problem.gradient(x), dtype=float).copy()
    if lam_eq.size:
        grad += np.asarray(problem.eq_jac(x)).T @ lam_eq
    if lam_ineq.size:
        grad += np.asarray(problem.ineq_jac(x)).T @ lam_ineq
    return grad


def _projected_residual(x, grad, lb, ub):
    """Infinity norm of x - P(x - grad) over the box (stationarity measure)."""
    step = np.clip(x - grad, lb, ub)
    return float(np.max(np.abs(x - step))) if x.size else 0.0


def kkt_residual(problem, x, lam_eq=None, lam_ineq=None):
    """Projected-gradient stationarity plus complementarity violation.

    Uses the ``f + lam . c`` multiplier convention; the complementarity part
    is ``sum |mu_i * g_i|`` plus any positive-part violation of ``mu <= 0``.
    """
    x = np.asarray(x, dtype=float)
    lam_eq = np.zeros(problem.eq_vals(x).size) if lam_eq is None else np.asarray(lam_eq, float)
    lam_ineq = (
        np.zeros(problem.ineq_vals(x).size) if lam_ineq is None else np.asarray(lam_ineq, float)
    )
    grad = _lagrangian_grad(problem, x, lam_eq, lam_ineq)
    res = _projected_residual(x, grad, problem.lb, problem.ub)
    g = problem.ineq_vals(x)
    if g.size:
        res += float(np.sum(np.abs(lam_ineq * g)))
        res += float(np.sum(np.maximum(0.0, lam_ineq)))
    return res


def _least_squares_multipliers(problem, x, lam_eq, lam_ineq):
    """Equality multipliers minimizing the stationarity residual at x.

    Solves ``min_lam | (grad f + J_ineq^T mu + J_eq^T lam)[free] |`` over the
    coordinates not pinned by active bounds. Returns None when nothing is
    free.
    """
    tol = 1e-10
    free = (x > problem.lb + tol) & (x < problem.ub - tol)
    if not np.any(free):
        return None
    rhs = np.asarray(problem.gradient(x), dtype=float).copy()
    if lam_ineq.size:
        rhs += np.asarray(problem.ineq_jac(x)).T @ lam_ineq
    jac_t = np.asarray(problem.eq_jac(x)).T
    sol, *_ = np.linalg.lstsq(jac_t[free], -rhs[free], rcond=None)
    return sol


def _augmented_value_grad(problem, x, lam_eq, lam_ineq, rho):
    val = float(problem.objective(x))
    grad = np.asarray(problem.gradient(x), dtype=float).copy()
    if lam_eq.size:
        c = problem.eq_vals(x)
        jac = np.asarray(problem.eq_jac(x))
        val += float(lam_eq @ c) + 0.5 * rho * float(c @ c)
        grad += jac.T @ (lam_eq + rho * c)
    if lam_ineq.size:
        g = problem.ineq_vals(x)
        jac = np.asarray(problem.ineq_jac(x))
        t = np.minimum(0.0, lam_ineq + rho * g)
        val += float(t @ t - lam_ineq @ lam_ineq) / (2.0 * rho)
        grad += jac.T @ t
    return val, grad


def solve(problem, x0, options=None, warm_lam_eq=None, warm_lam_ineq=None) -> SolveReport:
    """Run the augmented-Lagrangian loop from ``x0`` (projected into bounds).

    ``warm_lam_eq`` / ``warm_lam_ineq`` seed the multipliers, e.g. from a
    previous solve of a neighboring problem.
    """
    opts = options or SolverOptions()
    x = np.clip(np.asarray(x0, dtype=float), problem.lb, problem.ub)

    f0 = problem.objective(x)
    c0 = problem.eq_vals(x)
    g0 = problem.ineq_vals(x)
    if not (np.isfinite(f0) and np.all(np.isfinite(c0)) and np.all(np.isfinite(g0))):
        raise ValueError("objective or constraints non-finite at the start point")

    n_eq, n_ineq = c0.size, g0.size
    lam_eq = np.zeros(n_eq) if warm_lam_eq is None else np.asarray(warm_lam_eq, float).copy()
    lam_ineq = (
        np.zeros(n_ineq) if warm_lam_ineq is None else np.asarray(warm_lam_ineq, float).copy()
    )
    if lam_eq.shape != (n_eq,) or lam_ineq.shape != (n_ineq,):
        raise ValueError("warm-start multiplier shapes do not match the problem")

    rho = opts.penalty_init
    prev_viol = np.inf
    inner_total = 0
    merit_history = []
    status = "IterationLimit"
    stationarity = np.inf
    viol = max_violation(problem, x)
    outer = 0

    for outer in range(1, opts.max_outer + 1):
        def al_fun(z, _lam_eq=lam_eq, _lam_ineq=lam_ineq, _rho=rho):
            return _augmented_value_grad(problem, z, _lam_eq, _lam_ineq, _rho)

        merit_start = al_fun(x)[0]
        # inner tolerance tightens as the iterates become feasible
        gtol = max(opts.opt_tol * 0.1, min(1e-3, 0.1 * viol)) if viol > 0 else opts.opt_tol * 0.1
        res = _scipy_minimize(
            al_fun,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(problem.lb, problem.ub)),
            options={
                "maxiter": opts.max_inner,
                "maxfun": 4 * opts.max_inner,
                "ftol": 1e-15,
                "gtol": gtol,
                "maxcor": 20,
            },
        )
        x = np.clip(res.x, problem.lb, problem.ub)
        inner_total += int(res.nit)
        merit_history.append((merit_start, float(res.fun)))

        fval = float(problem.objective(x))
        if not np.isfinite(fval) or fval < -1e20:
            status = "Diverged"
            break

        c = problem.eq_vals(x)
        g = problem.ineq_vals(x)
        viol = 0.0
        if c.size:
            viol = float(np.max(np.abs(c)))
        if g.size:
            viol = max(viol, float(np.max(np.maximum(0.0, -g))))

        # first-order multiplier updates
        if n_eq:
            lam_eq = lam_eq + rho * c
        if n_ineq:
            lam_ineq = np.minimum(0.0, lam_ineq + rho * g)

        grad_l = _lagrangian_grad(problem, x, lam_eq, lam_ineq)
        stationarity = _projected_residual(x, grad_l, problem.lb, problem.ub)

        # near feasibility the first-order updates converge only linearly;
        # a least-squares multiplier estimate on the bound-inactive rows
        # collapses the stationarity residual much faster
        if n_eq and viol <= max(opts.feas_tol, 1e-8):
            refined = _least_squares_multipliers(problem, x, lam_eq, lam_ineq)
            if refined is not None:
                grad_r = _lagrangian_grad(problem, x, refined, lam_ineq)
                stat_r = _projected_residual(x, grad_r, problem.lb, problem.ub)
                if stat_r < stationarity:
                    lam_eq, stationarity = refined, stat_r

        if opts.verbose:
            print(
                f"  outer {outer:3d}: f={fval: .6e} viol={viol:.3e} "
                f"stat={stationarity:.3e} rho={rho:.1e} inner={res.nit}"
            )

        if viol <= opts.feas_tol and stationarity <= opts.opt_tol:
            status = "Converged"
            break

        # strengthen the penalty only while violation is both above tolerance
        # and not shrinking fast enough. Once feasible, relax it instead: a
        # large rho makes the inner Hessian so stiff that L-BFGS-B stalls on
        # the f round-off floor before reaching the stationarity tolerance,
        # while with accurate multipliers a mild rho suffices for feasibility.
        if viol > opts.feas_tol and viol > opts.violation_shrink * prev_viol:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        elif viol <= opts.feas_tol and stationarity > opts.opt_tol:
            rho = max(rho / opts.penalty_growth, opts.penalty_init)
        prev_viol = viol

    return SolveReport(
        x=x,
        objective=float(problem.objective(x)),
        max_violation=max_violation(problem, x),
        stationarity=stationarity,
        status=status,
        outer_iterations=outer,
        inner_iterations=inner_total,
        lam_eq=lam_eq,
        lam_ineq=lam_ineq,
        merit_history=merit_history,
    )
