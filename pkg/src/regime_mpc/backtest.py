"""
Roll-forward backtests of the MPC portfolio and its benchmarks.

Decision day k trades at day k's close; day k + 1 returns and cash interest
accrue to the new weights. The currency cost of a rebalance is deducted
pro rata from the holdings at k + 1, so that

    V[k+1] = V[k] * (1 + w' r[k+1]) - cost[k].
"""

import logging
from datetime import date
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import CostConfig, EstimatorConfig, MpcConfig
from .cost_model import CostParams, total_cost
from .errors import AlignmentError, BankruptcyError, InfeasibleError, WarmupError
from .estimators import KalmanState, ReturnEstimator, ema_series, ewm_std_series
from .market_data import AlignedPanel
from .models import BUY_AND_HOLD, EQUAL_WEIGHT, MPC, BacktestResult, SolverStatus
from .mpc_optimizer import MpcSolver, floor_feasible
from .regime_signals import SignalPanel

logger = logging.getLogger(__name__)

Bound = Union[int, date, str, pd.Timestamp]
# policy(k, drifted weights, value) -> (target weights, cost fraction, status)
Policy = Callable[[int, np.ndarray, float], Tuple[np.ndarray, float, Optional[str]]]


def resolve_range(panel: AlignedPanel, start: Bound, end: Bound) -> Tuple[int, int]:
    """Calendar indices of the first decision day and the final valuation day."""
    if isinstance(start, (int, np.integer)) and isinstance(end, (int, np.integer)):
        first, last = int(start), int(end)
    else:
        first, last = panel.index_range(start, end)
    if not 0 <= first < last < len(panel):
        raise AlignmentError(
            f"backtest range [{first}, {last}] needs two dates inside a {len(panel)}-date panel"
        )
    return first, last


def equal_weights(n_assets: int) -> np.ndarray:
    return np.append(np.full(n_assets, 1.0 / n_assets), 0.0)


def _simulate(
    panel: AlignedPanel,
    first: int,
    last: int,
    initial_value: float,
    policy: Policy,
    name: str,
) -> BacktestResult:
    n = panel.n_assets
    asset_returns = panel.returns.to_numpy()
    cash_rates = panel.cash_rate.to_numpy()
    dates = panel.dates[first : last + 1]

    value = float(initial_value)
    drift = equal_weights(n)
    values, weights, trades, costs, returns, cash_returns, statuses = [value], [], [], [], [], [], []

    for k in range(first, last):
        target, cost_fraction, status = policy(k, drift, value)
        cost = cost_fraction * value
        growth = np.append(asset_returns[k + 1], cash_rates[k + 1])
        grown = target * value * (1.0 + growth)
        gross = grown.sum()
        new_value = gross - cost
        if not new_value > 0:
            raise BankruptcyError(
                f"{name}: portfolio value {new_value:.2f} on {panel.dates[k + 1].date()}"
            )

        weights.append(target)
        trades.append(target - drift)
        costs.append(cost)
        returns.append(new_value / value - 1.0)
        cash_returns.append(cash_rates[k + 1])
        if status is not None:
            statuses.append(status)
        values.append(new_value)
        drift = grown / gross
        value = new_value

    logger.info(
        f"{name}: {last - first} decision days {dates[0].date()}..{dates[-1].date()}, "
        f"final value {value:,.2f}"
    )
    return BacktestResult(
        name=name,
        assets=panel.assets,
        cash_label=panel.cash_label,
        dates=dates,
        values=np.asarray(values),
        weights=np.vstack(weights),
        end_weights=drift,
        trades=np.vstack(trades),
        costs=np.asarray(costs),
        returns=np.asarray(returns),
        cash_returns=np.asarray(cash_returns),
        statuses=statuses,
    )


def required_history(config: MpcConfig, estimator_config: EstimatorConfig) -> int:
    return estimator_config.covariance_window + config.horizon + estimator_config.ema_window


def run_mpc_backtest(
    panel: AlignedPanel,
    signals: SignalPanel,
    config: MpcConfig,
    start: Bound,
    end: Bound,
    initial_value: float = 26000.0,
    estimator_config: Optional[EstimatorConfig] = None,
    cost_config: Optional[CostConfig] = None,
    kalman_state: Optional[KalmanState] = None,
    name: str = MPC,
) -> BacktestResult:
    """
    Simulate the MPC portfolio from an equal-weight start.

    Without ``kalman_state`` the bias filter is first run over every row
    before ``start``, so a run reproduces the filter path of any longer run
    that covers it.

    Raises:
        WarmupError: Less history before ``start`` than the estimators need.
        InfeasibleError: The weight floor cannot be met.
    """
    estimator_config = estimator_config or EstimatorConfig()
    cost_config = cost_config or CostConfig()
    first, last = resolve_range(panel, start, end)
    needed = required_history(config, estimator_config)
    if first < needed:
        raise WarmupError(
            f"MPC backtest starting at row {first} needs {needed} rows of history"
        )
    if not floor_feasible(panel.n_assets, config.min_weight):
        raise InfeasibleError(
            f"minimum weight {config.min_weight} is infeasible for {panel.n_assets} assets"
        )

    estimator = ReturnEstimator(panel, signals, config.horizon, estimator_config, kalman_state)
    if kalman_state is None:
        estimator.warm_up(0, first)
    solver = MpcSolver(panel.n_assets, config)

    def policy(k: int, w: np.ndarray, value: float):
        estimates = estimator.estimate(k)
        params = CostParams.from_estimates(estimates, value, cost_config)
        plan = solver.solve(estimates, w, params)
        day = panel.dates[k].date()
        if plan.status is SolverStatus.INFEASIBLE:
            raise InfeasibleError(f"MPC problem infeasible on {day}")
        if plan.status is SolverStatus.MAX_ITERATIONS:
            logger.warning(f"MPC solve on {day} did not converge; using projected iterate")
        target = plan.first_step
        return target, float(total_cost(target - w, params)), plan.status.value

    logger.info(
        f"Running MPC backtest: gamma_sigma={config.gamma_sigma}, "
        f"gamma_trade={config.gamma_trade}, H={config.horizon}"
    )
    return _simulate(panel, first, last, initial_value, policy, name)


def run_buy_and_hold(
    panel: AlignedPanel, start: Bound, end: Bound, initial_value: float = 26000.0
) -> BacktestResult:
    """Equal initial allocation, never rebalanced."""
    first, last = resolve_range(panel, start, end)

    def policy(k: int, w: np.ndarray, value: float):
        return w, 0.0, None

    return _simulate(panel, first, last, initial_value, policy, BUY_AND_HOLD)


def _rebalance_due(dates: pd.DatetimeIndex, k: int, rebalance: str) -> bool:
    if rebalance == "daily":
        return True
    today, previous = dates[k], dates[k - 1]
    if rebalance == "weekly":
        return today.isocalendar()[:2] != previous.isocalendar()[:2]
    if rebalance == "monthly":
        return (today.year, today.month) != (previous.year, previous.month)
    raise ValueError(f"unknown rebalance frequency {rebalance!r}")


def run_equal_weight(
    panel: AlignedPanel,
    start: Bound,
    end: Bound,
    initial_value: float = 26000.0,
    rebalance: str = "daily",
    cost_config: Optional[CostConfig] = None,
    ema_window: int = 10,
) -> BacktestResult:
    """1/N portfolio rebalanced at the given frequency, paying modelled costs."""
    cost_config = cost_config or CostConfig()
    first, last = resolve_range(panel, start, end)
    target = equal_weights(panel.n_assets)
    sigma = ewm_std_series(panel.returns, ema_window).to_numpy()
    volume = ema_series(panel.dollar_volume, ema_window).to_numpy()

    def policy(k: int, w: np.ndarray, value: float):
        if k == first or not _rebalance_due(panel.dates, k, rebalance):
            return w, 0.0, None
        params = CostParams(
            spread=cost_config.bid_ask_spread,
            ewm_sigma=sigma[k - 1],
            ewm_volume=volume[k - 1],
            portfolio_value=value,
            market_impact=cost_config.market_impact,
        )
        return target, float(total_cost(target - w, params)), None

    return _simulate(panel, first, last, initial_value, policy, EQUAL_WEIGHT)
