"""Reward-risk portfolio optimization on scenario inputs.

Solves

    min_theta  -alpha * E[Z] + (1 - alpha) * Risk[Z]

over the simplex (optionally with shorting) under an L1 turnover cap
sum|theta - theta_bar| <= gamma. Risk is either the scenario variance
(quadratic program) or CVaR at level beta in its Rockafellar-Uryasev
linearization (linear program). Ties among optima are broken by minimum
Euclidean distance to the previous weights.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, eye as speye, hstack as sphstack, vstack as spvstack

from .analytics import sample_cvar
from .errors import DomainError, InfeasibleError, ShapeError, SolverError
from .esg_transform import EsgBlendParams, blend_scenarios

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
NUMERIC_LIMIT = "NumericLimit"

FEAS_TOL = 1e-8

# Interior-point tolerances for the QP path; the LP path uses HiGHS simplex.
_CLARABEL_OPTS = {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10}


class DegenerateTailWarning(UserWarning):
    """Fewer than 10 scenarios land in the CVaR tail."""


@dataclasses.dataclass(frozen=True)
class OptimizationSpec:
    """Program parameters shared by both risk measures."""

    alpha: float
    risk_measure: str = "mcvar"
    beta: float = 0.99
    gamma: float = math.inf
    prev_weights: np.ndarray | None = None
    allow_short: bool = False
    tie_break: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and 0.0 <= self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.risk_measure not in ("mv", "mcvar"):
            raise DomainError(f"risk_measure must be 'mv' or 'mcvar', got {self.risk_measure}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        if math.isnan(self.gamma) or self.gamma < 0.0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if self.turnover_active:
            bar = np.asarray(self.prev_weights, dtype=float)
            if abs(bar.sum() - 1.0) > FEAS_TOL:
                raise DomainError("prev_weights must sum to 1 when the turnover cap is active")

    @property
    def turnover_active(self) -> bool:
        return math.isfinite(self.gamma) and self.prev_weights is not None


@dataclasses.dataclass(frozen=True)
class Weights:
    theta: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.theta)) - 1.0) > 1e-6:
            raise DomainError("weights must sum to 1")


@dataclasses.dataclass(frozen=True)
class SolveReport:
    weights: Weights | None
    objective: float
    status: str
    iterations: int = 0
    duality_gap: float | None = None
    cvar: float | None = None
    alpha: float = math.nan
    message: str = ""


def _scenario_values(scenarios) -> np.ndarray:
    values = scenarios if isinstance(scenarios, np.ndarray) else scenarios.values
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ShapeError(f"scenario matrix must be 2-d, got shape {values.shape}")
    return values


def _reference(spec: OptimizationSpec, n_assets: int) -> np.ndarray:
    if spec.prev_weights is not None:
        ref = np.asarray(spec.prev_weights, dtype=float)
        if ref.shape != (n_assets,):
            raise ShapeError(f"prev_weights shape {ref.shape}, expected ({n_assets},)")
        return ref
    return np.zeros(n_assets)


def _check_feasible(theta: np.ndarray, spec: OptimizationSpec) -> str:
    """Empty string when theta satisfies every constraint within FEAS_TOL."""
    if abs(theta.sum() - 1.0) > FEAS_TOL:
        return f"budget violated by {abs(theta.sum() - 1.0):.2e}"
    if not spec.allow_short and theta.min() < -FEAS_TOL:
        return f"long-only violated by {-theta.min():.2e}"
    if spec.turnover_active:
        turn = float(np.abs(theta - np.asarray(spec.prev_weights)).sum())
        if turn > spec.gamma + FEAS_TOL:
            return f"turnover {turn:.6g} exceeds gamma {spec.gamma:.6g}"
    return ""


def _mv_objective(theta: np.ndarray, mu: np.ndarray, sigma: np.ndarray, alpha: float) -> float:
    return float(-alpha * mu @ theta + (1.0 - alpha) * theta @ sigma @ theta)


def repair_covariance(sigma: np.ndarray) -> np.ndarray:
    """Symmetrize and, if the smallest eigenvalue is negative, add the
    documented ridge 1e-10 * trace/I."""
    sigma = np.asarray(sigma, dtype=float)
    sigma = 0.5 * (sigma + sigma.T)
    eigmin = float(np.linalg.eigvalsh(sigma)[0])
    if eigmin < 0.0:
        ridge = 1e-10 * np.trace(sigma) / sigma.shape[0]
        sigma = sigma + max(ridge, -2.0 * eigmin) * np.eye(sigma.shape[0])
    return sigma


def _base_constraints(theta, spec: OptimizationSpec):
    constraints = [cp.sum(theta) == 1.0]
    if not spec.allow_short:
        constraints.append(theta >= 0.0)
    if spec.turnover_active:
        constraints.append(cp.norm1(theta - np.asarray(spec.prev_weights)) <= spec.gamma)
    return constraints


def _solve_clarabel(problem: cp.Problem) -> None:
    # Statuses are inspected by the caller; cvxpy's own "may be inaccurate"
    # warning would just duplicate that handling on stderr.
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=UserWarning, module="cvxpy")
        problem.solve(solver=cp.CLARABEL, **_CLARABEL_OPTS)


def _tie_break_mv(mu, sigma, spec, f_star) -> np.ndarray | None:
    """Min ||theta - theta_bar|| over the band objective <= f* + eps.

    The band makes this tractable for interior-point solvers but lets
    directions whose reduced cost is below ~eps drift into the solution;
    eps is 1e-8(1+|f*|), so the drift is bounded by 1e-8 over the smallest
    active objective slope.
    """
    n = mu.size
    theta = cp.Variable(n)
    obj_expr = -spec.alpha * mu @ theta + (1.0 - spec.alpha) * cp.quad_form(
        theta, cp.psd_wrap(sigma)
    )
    constraints = _base_constraints(theta, spec)
    constraints.append(obj_expr <= f_star + 1e-8 * (1.0 + abs(f_star)))
    ref = _reference(spec, n)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(theta - ref)), constraints)
    try:
        _solve_clarabel(problem)
    except cp.error.SolverError:
        return None
    if problem.status != cp.OPTIMAL or theta.value is None:
        return None
    return np.asarray(theta.value, dtype=float)


def solve_mv(mu, sigma, spec: OptimizationSpec) -> SolveReport:
    """Quadratic program: min -alpha mu'theta + (1-alpha) theta'Sigma theta."""
    mu = np.asarray(mu, dtype=float)
    sigma = repair_covariance(sigma)
    n = mu.size
    if sigma.shape != (n, n):
        raise ShapeError(f"Sigma shape {sigma.shape}, expected ({n}, {n})")

    theta = cp.Variable(n)
    objective = cp.Minimize(
        -spec.alpha * mu @ theta + (1.0 - spec.alpha) * cp.quad_form(theta, cp.psd_wrap(sigma))
    )
    problem = cp.Problem(objective, _base_constraints(theta, spec))
    try:
        _solve_clarabel(problem)
    except cp.error.SolverError as exc:
        raise SolverError(f"MV solve failed: {exc}") from exc

    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise InfeasibleError(f"MV program infeasible (gamma={spec.gamma})")
    if theta.value is None:
        raise SolverError(f"MV solver returned no iterate (status {problem.status})")

    value = np.asarray(theta.value, dtype=float)
    if not np.all(np.isfinite(value)) or abs(value.sum() - 1.0) > 1e-6:
        return SolveReport(
            weights=None,
            objective=math.nan,
            status=NUMERIC_LIMIT,
            alpha=spec.alpha,
            message=f"unusable MV iterate (status {problem.status})",
        )
    status = OPTIMAL if problem.status == cp.OPTIMAL else NUMERIC_LIMIT
    message = ""
    # A strictly convex objective has a unique optimum, so the tie-break
    # would only add epsilon-relaxation drift; run it when the quadratic
    # term can actually be flat along some direction.
    curvature = (1.0 - spec.alpha) * float(np.linalg.eigvalsh(sigma)[0])
    if status == OPTIMAL and spec.tie_break and curvature < 1e-12:
        refined = _tie_break_mv(mu, sigma, spec, _mv_objective(value, mu, sigma, spec.alpha))
        if refined is not None:
            value = refined
        else:
            message = "tie-break stage skipped (refinement solve failed)"

    violation = _check_feasible(value, spec)
    if violation and status == OPTIMAL:
        status = NUMERIC_LIMIT
        message = violation
    stats = problem.solver_stats
    return SolveReport(
        weights=Weights(theta=value),
        objective=_mv_objective(value, mu, sigma, spec.alpha),
        status=status,
        iterations=int(stats.num_iters or 0) if stats is not None else 0,
        duality_gap=None,
        alpha=spec.alpha,
        message=message,
    )


def _mcvar_lp_parts(values: np.ndarray, spec: OptimizationSpec):
    """Sparse (c, A_ub, b_ub, A_eq, b_eq, bounds) for the R-U linearization.

    Variable layout: theta (I), xi (1), u (S), then a, b (I each) when the
    turnover cap is active (theta - theta_bar = a - b, sum(a + b) <= gamma).
    """
    n_scen, n_assets = values.shape
    tail = n_scen * (1.0 - spec.beta)
    mu_hat = values.mean(axis=0)
    turn = spec.turnover_active
    n_var = n_assets + 1 + n_scen + (2 * n_assets if turn else 0)

    c = np.zeros(n_var)
    c[:n_assets] = -spec.alpha * mu_hat
    c[n_assets] = 1.0 - spec.alpha
    c[n_assets + 1 : n_assets + 1 + n_scen] = (1.0 - spec.alpha) / tail

    # u_s >= -x_s - xi  <=>  -Z theta - xi - u <= 0
    blocks = [csr_matrix(-values), csr_matrix(-np.ones((n_scen, 1))), -speye(n_scen, format="csr")]
    if turn:
        blocks.append(csr_matrix((n_scen, 2 * n_assets)))
    a_ub_rows = [sphstack(blocks, format="csr")]
    b_ub = [np.zeros(n_scen)]

    eye_i = speye(n_assets, format="csr")
    a_eq_rows = []
    b_eq = []
    budget = [csr_matrix(np.ones((1, n_assets))), csr_matrix((1, 1 + n_scen))]
    if turn:
        budget.append(csr_matrix((1, 2 * n_assets)))
    a_eq_rows.append(sphstack(budget, format="csr"))
    b_eq.append(np.array([1.0]))

    if turn:
        a_eq_rows.append(
            sphstack(
                [eye_i, csr_matrix((n_assets, 1 + n_scen)), -eye_i, eye_i],
                format="csr",
            )
        )
        b_eq.append(np.asarray(spec.prev_weights, dtype=float))
        a_ub_rows.append(
            sphstack(
                [
                    csr_matrix((1, n_assets + 1 + n_scen)),
                    csr_matrix(np.ones((1, 2 * n_assets))),
                ],
                format="csr",
            )
        )
        b_ub.append(np.array([spec.gamma]))

    theta_lb = None if spec.allow_short else 0.0
    bounds = (
        [(theta_lb, None)] * n_assets
        + [(None, None)]
        + [(0.0, None)] * n_scen
        + ([(0.0, None)] * (2 * n_assets) if turn else [])
    )
    return (
        c,
        spvstack(a_ub_rows, format="csr"),
        np.concatenate(b_ub),
        spvstack(a_eq_rows, format="csr"),
        np.concatenate(b_eq),
        bounds,
        mu_hat,
    )


def _mcvar_objective(theta: np.ndarray, values: np.ndarray, spec: OptimizationSpec) -> tuple[float, float]:
    x = values @ theta
    cvar = sample_cvar(x, spec.beta)
    return float(-spec.alpha * x.mean() + (1.0 - spec.alpha) * cvar), cvar


def _mcvar_has_theta_ties(res, theta: np.ndarray, spec: OptimizationSpec) -> bool:
    """True when some weight sits at its zero bound with zero reduced cost.

    That is the standard certificate for an alternate optimal vertex
    touching the theta block; ties living purely in the (xi, u) block do
    not move the weights. Without a lower bound (shorting allowed) there
    is no cheap certificate, so the refinement runs unconditionally.
    """
    if spec.allow_short:
        return True
    marginals = getattr(getattr(res, "lower", None), "marginals", None)
    if marginals is None:
        return True
    reduced = np.asarray(marginals[: theta.size])
    at_bound = theta <= 1e-10
    return bool(np.any(at_bound & (np.abs(reduced) <= 1e-9)))


def _tie_break_mcvar(values, spec, f_star) -> np.ndarray | None:
    n_scen, n_assets = values.shape
    mu_hat = values.mean(axis=0)
    theta = cp.Variable(n_assets)
    xi = cp.Variable()
    u = cp.Variable(n_scen)
    obj_expr = -spec.alpha * mu_hat @ theta + (1.0 - spec.alpha) * (
        xi + cp.sum(u) / (n_scen * (1.0 - spec.beta))
    )
    constraints = _base_constraints(theta, spec)
    constraints += [u >= 0.0, u >= -values @ theta - xi]
    constraints.append(obj_expr <= f_star + 1e-8 * (1.0 + abs(f_star)))
    ref = _reference(spec, n_assets)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(theta - ref)), constraints)
    try:
        _solve_clarabel(problem)
    except cp.error.SolverError:
        return None
    if problem.status != cp.OPTIMAL or theta.value is None:
        return None
    return np.asarray(theta.value, dtype=float)


def solve_mcvar(scenarios, spec: OptimizationSpec) -> SolveReport:
    """Linear program for the scenario mean-CVaR objective."""
    values = _scenario_values(scenarios)
    n_scen, n_assets = values.shape
    tail = n_scen * (1.0 - spec.beta)
    if tail < 1.0 - 1e-9:
        raise DomainError(f"(1-beta)*S = {tail:.3g} < 1: tail is empty at beta={spec.beta}")
    if tail < 10.0:
        warnings.warn(
            f"only {tail:.3g} scenarios in the CVaR tail; estimates will be noisy",
            DegenerateTailWarning,
            stacklevel=2,
        )
    if spec.prev_weights is not None and np.asarray(spec.prev_weights).shape != (n_assets,):
        raise ShapeError("prev_weights length mismatch")

    c, a_ub, b_ub, a_eq, b_eq, bounds, _ = _mcvar_lp_parts(values, spec)
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")

    if res.status == 2:
        raise InfeasibleError(f"mCVaR program infeasible (gamma={spec.gamma})")
    if res.status == 3:
        raise SolverError("mCVaR program unbounded; check allow_short with no turnover cap")
    if res.x is None:
        raise SolverError(f"mCVaR solver failed: {res.message}")

    theta = np.asarray(res.x[:n_assets], dtype=float)
    if not np.all(np.isfinite(theta)) or abs(theta.sum() - 1.0) > 1e-6:
        return SolveReport(
            weights=None,
            objective=math.nan,
            status=NUMERIC_LIMIT,
            alpha=spec.alpha,
            message=f"unusable LP iterate: {res.message}",
        )
    status = OPTIMAL if res.status == 0 else NUMERIC_LIMIT
    message = "" if res.status == 0 else res.message

    if status == OPTIMAL and spec.tie_break and _mcvar_has_theta_ties(res, theta, spec):
        f_star, _ = _mcvar_objective(theta, values, spec)
        refined = _tie_break_mcvar(values, spec, f_star)
        if refined is not None:
            theta = refined
        else:
            message = "tie-break stage skipped (refinement solve failed)"

    violation = _check_feasible(theta, spec)
    if violation and status == OPTIMAL:
        status = NUMERIC_LIMIT
        message = violation
    objective, cvar = _mcvar_objective(theta, values, spec)
    return SolveReport(
        weights=Weights(theta=theta),
        objective=objective,
        status=status,
        iterations=int(getattr(res, "nit", 0)),
        duality_gap=None,
        cvar=cvar,
        alpha=spec.alpha,
        message=message,
    )


def solve(scenarios, spec: OptimizationSpec) -> SolveReport:
    """Dispatch on spec.risk_measure; scenarios are already ESG-valued."""
    values = _scenario_values(scenarios)
    if spec.risk_measure == "mv":
        mu = values.mean(axis=0)
        sigma = np.cov(values, rowvar=False, ddof=1)
        sigma = np.atleast_2d(sigma)
        return solve_mv(mu, sigma, spec)
    return solve_mcvar(values, spec)


def sweep_alpha(
    scenarios,
    scores,
    lambda_params: EsgBlendParams,
    alpha_grid,
    spec_template: OptimizationSpec,
) -> list[SolveReport]:
    """One solve per alpha on the blended scenario matrix, ordered by alpha.

    Failures at individual grid points are recorded in that point's report
    (weights None) and the sweep continues.
    """
    alpha_grid = [float(a) for a in alpha_grid]
    if not alpha_grid:
        raise DomainError("alpha grid is empty")
    if any(not 0.0 <= a <= 1.0 for a in alpha_grid):
        raise DomainError("alpha grid values must lie in [0, 1]")

    values = _scenario_values(scenarios)
    blended = blend_scenarios(values, scores, lambda_params)
    reports: list[SolveReport] = []
    for alpha in alpha_grid:
        spec = dataclasses.replace(spec_template, alpha=alpha)
        try:
            reports.append(solve(blended, spec))
        except (InfeasibleError, SolverError) as exc:
            reports.append(
                SolveReport(
                    weights=None,
                    objective=math.nan,
                    status=INFEASIBLE if isinstance(exc, InfeasibleError) else NUMERIC_LIMIT,
                    alpha=alpha,
                    message=str(exc),
                )
            )
    return reports
