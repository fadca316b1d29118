"""
Data models for the regime MPC toolkit.

This module defines the records passed between the optimiser, the backtest
engine, the evaluation code and the tuner: allocation plans, backtest
results, performance reports and tuning trials.
"""

from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

# Benchmark names used as column labels and information-ratio keys.
MPC = "MPC"
BUY_AND_HOLD = "buy-and-hold"
EQUAL_WEIGHT = "1/N"


class SolverStatus(str, Enum):
    """Outcome of one MPC solve."""

    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


class AllocationPlan(BaseModel):
    """
    The H-step weight sequence produced by one MPC solve.

    Attributes:
        weights: H x (N + 1) array, risky assets first and cash last
        objective: Objective value of the returned weights
        status: Solver status
        decision_date: Date the plan was made for (optional)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray
    objective: float
    status: SolverStatus
    decision_date: Optional[date] = None

    @property
    def first_step(self) -> np.ndarray:
        return self.weights[0]


@dataclass
class BacktestResult:
    """
    Daily record of one roll-forward simulation.

    The value path covers ``dates`` (decision days plus the final valuation
    day); per-day arrays cover the decision days ``dates[:-1]``.
    """

    name: str
    assets: List[str]
    cash_label: str
    dates: pd.DatetimeIndex
    values: np.ndarray
    weights: np.ndarray
    end_weights: np.ndarray
    trades: np.ndarray
    costs: np.ndarray
    returns: np.ndarray
    cash_returns: np.ndarray
    statuses: List[str] = field(default_factory=list)

    @property
    def excess_returns(self) -> np.ndarray:
        return self.returns - self.cash_returns

    @property
    def turnover(self) -> np.ndarray:
        """Sum of absolute risky weight changes per decision day."""
        return np.abs(self.trades[:, : len(self.assets)]).sum(axis=1)

    @property
    def columns(self) -> List[str]:
        return [*self.assets, self.cash_label]

    def weights_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.weights, index=self.dates[:-1], columns=self.columns)

    def monthly_weights(self) -> pd.DataFrame:
        """Average executed weights per calendar month."""
        frame = self.weights_frame()
        monthly = frame.groupby(frame.index.to_period("M")).mean()
        monthly.index = monthly.index.astype(str)
        monthly.index.name = "month"
        return monthly

    def to_frame(self) -> pd.DataFrame:
        """One row per valuation day."""
        n_days = len(self.dates)
        frame = pd.DataFrame(index=pd.Index(self.dates.strftime("%Y-%m-%d"), name="date"))
        frame["value"] = self.values
        frame["return"] = np.concatenate([[np.nan], self.returns])
        frame["excess_return"] = np.concatenate([[np.nan], self.excess_returns])
        frame["cost"] = np.concatenate([self.costs, [0.0]])
        frame["turnover"] = np.concatenate([self.turnover, [0.0]])
        held = np.vstack([self.weights, self.end_weights[np.newaxis, :]])
        for j, column in enumerate(self.columns):
            frame[f"w_{column}"] = held[:n_days, j]
        return frame

    def summary(self) -> Dict[str, Any]:
        counts: Dict[str, int] = {}
        for status in self.statuses:
            counts[status] = counts.get(status, 0) + 1
        return {
            "name": self.name,
            "start": self.dates[0].strftime("%Y-%m-%d"),
            "end": self.dates[-1].strftime("%Y-%m-%d"),
            "decision_days": len(self.dates) - 1,
            "initial_value": float(self.values[0]),
            "final_value": float(self.values[-1]),
            "total_cost": float(self.costs.sum()),
            "total_turnover": float(self.turnover.sum()),
            "solver_statuses": counts,
        }


class PerformanceReport(BaseModel):
    """
    Performance metrics of one portfolio over one period.

    Ratios are annualised with 252 trading days. Information ratios are keyed
    by benchmark name; None marks a zero tracking error.
    """

    name: str
    mean_excess: float
    ann_mean_excess: float
    volatility: float
    ann_volatility: float
    sharpe: float
    sortino: float
    max_drawdown: float = Field(ge=0, le=1)
    information_ratios: Dict[str, Optional[float]] = Field(default_factory=dict)


class TrialRecord(BaseModel):
    """One hyperparameter trial; metrics are fold means, NaN when the trial failed."""

    trial: int
    gamma_sigma: float
    gamma_trade: float
    sortino: float = float("nan")
    sharpe: float = float("nan")
    ann_return: float = float("nan")
    ann_vol: float = float("nan")
    error: Optional[str] = None


class TuningResult(BaseModel):
    gamma_sigma: float
    gamma_trade: float
    best_trial: int
    trials: List[TrialRecord]

    def trial_frame(self) -> pd.DataFrame:
        columns = ["trial", "gamma_sigma", "gamma_trade", "sortino", "sharpe", "ann_return", "ann_vol"]
        return pd.DataFrame([t.model_dump(include=set(columns)) for t in self.trials], columns=columns)
