"""
Multi-period mean-variance MPC solver.

At each decision date the solver maximises, over H weight vectors,

    sum_tau  mu_tau' w_tau - gamma_sigma * w_tau' Sigma w_tau
             - gamma_trade * sum_i TC(w_i,tau - w_i,tau-1)

subject to full investment, a floor on every risky weight and a
nonnegative cash weight. The |dw|^1.5 impact term is carried by an
epigraph variable per asset and step. The cvxpy problem is parametrised
(DPP), so a backtest builds it once and re-solves it every day.
"""

import itertools
import logging
import math
from typing import Dict, Optional

import cvxpy as cp
import numpy as np
from scipy.linalg import eigh

from .config import MpcConfig
from .cost_model import CostParams, impact_coefficients, total_cost
from .errors import GuardError
from .estimators import EstimateSet
from .models import AllocationPlan, SolverStatus

logger = logging.getLogger(__name__)

ORACLE_MAX_ASSETS = 4
ORACLE_MAX_HORIZON = 2


def _solver_options(config: MpcConfig) -> Dict[str, float]:
    name = config.solver.upper()
    if name == "CLARABEL":
        return {
            "tol_gap_rel": config.tolerance,
            "tol_gap_abs": config.tolerance,
            "max_iter": config.max_iterations,
        }
    if name == "ECOS":
        return {"reltol": config.tolerance, "abstol": config.tolerance, "max_iters": config.max_iterations}
    if name == "SCS":
        return {"eps_rel": config.tolerance, "eps_abs": config.tolerance, "max_iters": config.max_iterations}
    return {}


def risk_factor(covariance: np.ndarray) -> np.ndarray:
    """F with F'F equal to the (PSD-clipped) covariance."""
    values, vectors = eigh(covariance)
    return np.sqrt(np.clip(values, 0.0, None))[:, np.newaxis] * vectors.T


def floor_feasible(n_assets: int, min_weight: float) -> bool:
    return min_weight * n_assets <= 1.0 + 1e-12


def _project_simplex(v: np.ndarray, mass: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = mass}."""
    if mass <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    excess = np.cumsum(u) - mass
    ranks = np.arange(1, len(v) + 1)
    active = u - excess / ranks > 0
    rho = ranks[active][-1]
    theta = excess[active][-1] / rho
    return np.maximum(v - theta, 0.0)


def project_feasible(
    w: np.ndarray, floor: np.ndarray, fixed: Optional[np.ndarray] = None, anchor: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Project one weight vector (cash last) onto the feasible set. Risky
    entries flagged in ``fixed`` are pinned to ``anchor``.
    """
    n = len(floor)
    lower = np.append(floor, 0.0)
    free = np.ones(n + 1, dtype=bool)
    x = np.array(w, dtype=float)
    if fixed is not None and np.any(fixed):
        free[:n] = ~fixed
        x[:n][fixed] = anchor[:n][fixed]
    mass = 1.0 - x[~free].sum() - lower[free].sum()
    x[free] = lower[free] + _project_simplex(x[free] - lower[free], mass)
    return x


def plan_objective(
    weights: np.ndarray,
    estimates: EstimateSet,
    w_current: np.ndarray,
    gamma_sigma: float,
    gamma_trade: float,
    cost_params: CostParams,
) -> float:
    """Objective value of an H x (N + 1) weight plan, evaluated in numpy."""
    previous = np.asarray(w_current, dtype=float)
    value = 0.0
    for tau, w in enumerate(weights):
        value += float(estimates.boosted[tau] @ w)
        value -= gamma_sigma * float(w @ estimates.covariance @ w)
        value -= gamma_trade * float(total_cost(w - previous, cost_params))
        previous = w
    return value


class MpcSolver:
    """A parametrised MPC problem for a fixed number of assets and horizon."""

    def __init__(self, n_assets: int, config: MpcConfig):
        self.n_assets = n_assets
        self.config = config
        n, horizon = n_assets, config.horizon

        self.w = cp.Variable((horizon, n + 1), name="weights")
        self.trade = cp.Variable((horizon, n), name="trades")
        self.impact = cp.Variable((horizon, n), name="impact")

        self.mu = cp.Parameter((horizon, n + 1), name="mu")
        self.factor = cp.Parameter((n, n), name="risk_factor")
        self.w0 = cp.Parameter(n, name="w0")
        self.floor = cp.Parameter(n, name="floor")
        self.frozen = cp.Parameter(n, nonneg=True, name="frozen")
        self.linear = cp.Parameter(n, nonneg=True, name="linear_cost")
        self.impact_coef = cp.Parameter(n, nonneg=True, name="impact_cost")

        constraints = [
            cp.sum(self.w, axis=1) == 1,
            self.w[:, n] >= 0,
            cp.power(cp.abs(self.trade), 1.5) <= self.impact,
        ]
        utility = 0
        for tau in range(horizon):
            previous = self.w0 if tau == 0 else self.w[tau - 1, :n]
            constraints += [
                self.trade[tau] == self.w[tau, :n] - previous,
                self.w[tau, :n] >= self.floor,
                cp.multiply(self.frozen, self.trade[tau]) == 0,
            ]
            utility += (
                self.mu[tau] @ self.w[tau]
                - cp.sum_squares(self.factor @ self.w[tau, :n])
                - self.linear @ cp.abs(self.trade[tau])
                - self.impact_coef @ self.impact[tau]
            )
        self.problem = cp.Problem(cp.Maximize(utility), constraints)
        self.options = _solver_options(config)

    def _floor(self, w_current: np.ndarray, frozen: np.ndarray) -> np.ndarray:
        floor = np.full(self.n_assets, self.config.min_weight)
        return np.where(frozen, np.minimum(floor, w_current[: self.n_assets]), floor)

    def solve(
        self, estimates: EstimateSet, w_current: np.ndarray, cost_params: CostParams
    ) -> AllocationPlan:
        n, horizon = self.n_assets, self.config.horizon
        w_current = np.asarray(w_current, dtype=float)
        if not floor_feasible(n, self.config.min_weight):
            return AllocationPlan(
                weights=np.tile(w_current, (horizon, 1)),
                objective=float("nan"),
                status=SolverStatus.INFEASIBLE,
                decision_date=estimates.date.date(),
            )

        frozen = ~cost_params.tradable
        floor = self._floor(w_current, frozen)
        self.mu.value = estimates.boosted
        self.factor.value = math.sqrt(self.config.gamma_sigma) * risk_factor(
            estimates.covariance[:n, :n]
        )
        self.w0.value = w_current[:n]
        self.floor.value = floor
        self.frozen.value = frozen.astype(float)
        self.linear.value = np.full(n, self.config.gamma_trade * 0.5 * cost_params.spread)
        self.impact_coef.value = self.config.gamma_trade * impact_coefficients(cost_params)

        try:
            self.problem.solve(solver=self.config.solver, **self.options)
            raw_status = self.problem.status
        except cp.error.SolverError as e:
            logger.warning(f"Solver failure on {estimates.date.date()}: {e}")
            raw_status = None

        if raw_status == cp.OPTIMAL:
            status = SolverStatus.OPTIMAL
        elif raw_status == cp.INFEASIBLE:
            status = SolverStatus.INFEASIBLE
        else:
            status = SolverStatus.MAX_ITERATIONS

        iterate = self.w.value
        if iterate is None or not np.all(np.isfinite(iterate)):
            iterate = np.tile(w_current, (horizon, 1))
        weights = np.vstack(
            [project_feasible(row, floor, fixed=frozen, anchor=w_current) for row in iterate]
        )
        objective = plan_objective(
            weights,
            estimates,
            w_current,
            self.config.gamma_sigma,
            self.config.gamma_trade,
            cost_params,
        )
        return AllocationPlan(
            weights=weights,
            objective=objective,
            status=status,
            decision_date=estimates.date.date(),
        )


def solve(
    estimates: EstimateSet, w_current: np.ndarray, config: MpcConfig, cost_params: CostParams
) -> AllocationPlan:
    """One-off solve; backtests reuse an ``MpcSolver`` instead."""
    return MpcSolver(estimates.n_assets, config).solve(estimates, w_current, cost_params)


def simplex_grid(n_assets: int, min_weight: float, step: float) -> np.ndarray:
    """
    Feasible weight vectors (cash last) on a grid of spacing ``step`` above
    the risky floor; mass left below one step goes to cash.
    """
    free_mass = 1.0 - n_assets * min_weight
    units = int(math.floor(free_mass / step + 1e-9))
    parts = n_assets + 1
    bars = np.array(list(itertools.combinations(range(units + parts - 1), parts - 1)), dtype=int)
    bars = bars.reshape(-1, parts - 1)
    edges = np.hstack(
        [np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), units + parts - 1)]
    )
    grid = (np.diff(edges, axis=1) - 1) * step
    grid[:, :n_assets] += min_weight
    grid[:, n_assets] += free_mass - units * step
    return grid


def _grid_cost(delta: np.ndarray, cost_params: CostParams) -> np.ndarray:
    size = np.abs(delta[..., : cost_params.n_assets])
    per_asset = 0.5 * cost_params.spread * size + impact_coefficients(cost_params) * size**1.5
    stuck = np.any((size > 0) & ~cost_params.tradable, axis=-1)
    return np.where(stuck, np.inf, per_asset.sum(axis=-1))


def brute_force_oracle(
    estimates: EstimateSet,
    w_current: np.ndarray,
    config: MpcConfig,
    cost_params: CostParams,
    grid_step: float,
    max_evaluations: float = 5e8,
) -> AllocationPlan:
    """
    Exhaustive search of the MPC objective over a feasible weight grid.

    Raises:
        GuardError: For more than four risky assets, horizons above two, or
            grids larger than ``max_evaluations`` plans.
    """
    n, horizon = estimates.n_assets, config.horizon
    if n > ORACLE_MAX_ASSETS or horizon > ORACLE_MAX_HORIZON:
        raise GuardError(f"oracle supports N <= {ORACLE_MAX_ASSETS} and H <= {ORACLE_MAX_HORIZON}")
    w_current = np.asarray(w_current, dtype=float)
    if not floor_feasible(n, config.min_weight):
        return AllocationPlan(
            weights=np.tile(w_current, (horizon, 1)),
            objective=float("nan"),
            status=SolverStatus.INFEASIBLE,
        )

    units = int(math.floor((1.0 - n * config.min_weight) / grid_step + 1e-9))
    n_points = math.comb(units + n, n)
    if n_points**horizon > max_evaluations:
        raise GuardError(f"oracle grid of {n_points}^{horizon} plans exceeds {max_evaluations:g}")

    grid = simplex_grid(n, config.min_weight, grid_step)
    sigma = estimates.covariance
    quadratic = np.einsum("pi,ij,pj->p", grid, sigma, grid)

    def stage(tau: int) -> np.ndarray:
        return grid @ estimates.boosted[tau] - config.gamma_sigma * quadratic

    first = stage(0) - config.gamma_trade * _grid_cost(grid - w_current, cost_params)
    if horizon == 1:
        best = int(np.argmax(first))
        plan = grid[best][np.newaxis, :]
    else:
        second = stage(1)
        chunk = max(1, int(4e6 // (len(grid) * max(n, 1))))
        best_value, best_pair = -np.inf, (0, 0)
        for start in range(0, len(grid), chunk):
            rows = grid[start : start + chunk]
            moves = _grid_cost(grid[np.newaxis, :, :] - rows[:, np.newaxis, :], cost_params)
            totals = first[start : start + chunk, np.newaxis] + second[np.newaxis, :] - config.gamma_trade * moves
            i, j = np.unravel_index(int(np.argmax(totals)), totals.shape)
            if totals[i, j] > best_value:
                best_value, best_pair = totals[i, j], (start + i, j)
        plan = grid[list(best_pair)]

    objective = plan_objective(
        plan, estimates, w_current, config.gamma_sigma, config.gamma_trade, cost_params
    )
    return AllocationPlan(weights=plan, objective=objective, status=SolverStatus.OPTIMAL)
