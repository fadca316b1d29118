"""
Performance metrics and portfolio comparisons.

Conventions: 252 trading days per year, geometric annualisation of the mean
daily excess return, square-root-of-time scaling of volatility and ratios,
sample standard deviations (ddof=1) and a zero Sortino target on excess
returns.
"""

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .backtest import Bound, run_mpc_backtest
from .config import CostConfig, EstimatorConfig, MpcConfig
from .errors import AlignmentError, ConfigError
from .market_data import TRADING_DAYS, AlignedPanel
from .models import BUY_AND_HOLD, EQUAL_WEIGHT, BacktestResult, PerformanceReport
from .regime_signals import SignalPanel

logger = logging.getLogger(__name__)

ROW_LABELS = [
    "Mean excess returns",
    "Ann. mean excess returns",
    "Volatility",
    "Ann. volatility",
    "Ann. Sharpe ratio",
    "Ann. Sortino ratio",
    "Maximum drawdown",
    "Ann. IR (vs. buy-and-hold)",
    "Ann. IR (vs. 1/N)",
]
IR_ROWS = {BUY_AND_HOLD: ROW_LABELS[7], EQUAL_WEIGHT: ROW_LABELS[8]}


def _ratio(numerator: float, denominator: float) -> float:
    """Division with 0/0 -> 0 and x/0 -> signed infinity."""
    if denominator == 0:
        return 0.0 if numerator == 0 else math.copysign(math.inf, numerator)
    return numerator / denominator


def sample_std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def downside_deviation(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.minimum(x, 0.0) ** 2))) if len(x) else 0.0


def sharpe_ratio(excess: np.ndarray) -> float:
    return _ratio(float(np.mean(excess)), sample_std(excess)) * math.sqrt(TRADING_DAYS)


def sortino_ratio(excess: np.ndarray) -> float:
    return _ratio(float(np.mean(excess)), downside_deviation(excess)) * math.sqrt(TRADING_DAYS)


def max_drawdown(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(1.0 - values / np.maximum.accumulate(values)))


def information_ratio(returns: np.ndarray, benchmark: np.ndarray) -> Optional[float]:
    """Annualised IR; None when the tracking error is zero."""
    active = np.asarray(returns) - np.asarray(benchmark)
    tracking = sample_std(active)
    if tracking == 0:
        return None
    return float(np.mean(active)) / tracking * math.sqrt(TRADING_DAYS)


def compute_report(
    result: BacktestResult, benchmarks: Optional[Mapping[str, BacktestResult]] = None
) -> PerformanceReport:
    """
    Compute all metrics of ``result``, with information ratios against each
    named benchmark.

    Raises:
        AlignmentError: A benchmark covers different dates.
    """
    excess = result.excess_returns
    mean = float(np.mean(excess))
    volatility = sample_std(excess)
    ratios: Dict[str, Optional[float]] = {}
    for name, benchmark in (benchmarks or {}).items():
        if not result.dates.equals(benchmark.dates):
            raise AlignmentError(f"benchmark {name} covers different dates than {result.name}")
        ratios[name] = information_ratio(result.returns, benchmark.returns)

    return PerformanceReport(
        name=result.name,
        mean_excess=mean,
        ann_mean_excess=(1.0 + mean) ** TRADING_DAYS - 1.0,
        volatility=volatility,
        ann_volatility=volatility * math.sqrt(TRADING_DAYS),
        sharpe=sharpe_ratio(excess),
        sortino=sortino_ratio(excess),
        max_drawdown=max_drawdown(result.values),
        information_ratios=ratios,
    )


def comparison_table(reports: Sequence[PerformanceReport]) -> pd.DataFrame:
    """Nine labelled metric rows, one column per portfolio."""
    columns = {}
    for report in reports:
        ir = {label: report.information_ratios.get(name) for name, label in IR_ROWS.items()}
        column = [
            report.mean_excess,
            report.ann_mean_excess,
            report.volatility,
            report.ann_volatility,
            report.sharpe,
            report.sortino,
            report.max_drawdown,
            ir[ROW_LABELS[7]],
            ir[ROW_LABELS[8]],
        ]
        columns[report.name] = [np.nan if v is None else v for v in column]
    return pd.DataFrame(columns, index=pd.Index(ROW_LABELS, name="metric"))


def format_table(table: pd.DataFrame) -> str:
    return table.to_string(float_format=lambda v: f"{v:.6f}", na_rep="-")


def _sweep_point(
    panel: AlignedPanel,
    signals: SignalPanel,
    config: MpcConfig,
    start: Bound,
    end: Bound,
    initial_value: float,
    estimator_config: EstimatorConfig,
    cost_config: CostConfig,
) -> Dict[str, float]:
    result = run_mpc_backtest(
        panel, signals, config, start, end, initial_value, estimator_config, cost_config
    )
    report = compute_report(result)
    return {
        "gamma_sigma": config.gamma_sigma,
        "ann_return": report.ann_mean_excess,
        "ann_vol": report.ann_volatility,
        "sharpe": report.sharpe,
        "sortino": report.sortino,
    }


def gamma_sigma_sweep(
    panel: AlignedPanel,
    signals: SignalPanel,
    config: MpcConfig,
    grid: List[float],
    start: Bound,
    end: Bound,
    initial_value: float = 26000.0,
    estimator_config: Optional[EstimatorConfig] = None,
    cost_config: Optional[CostConfig] = None,
    n_jobs: int = 1,
) -> pd.DataFrame:
    """
    One backtest per risk-aversion value, everything else fixed. The rows
    with the highest Sharpe and Sortino ratios are flagged.
    """
    if not grid:
        raise ConfigError("gamma_sigma grid must not be empty")
    estimator_config = estimator_config or EstimatorConfig()
    cost_config = cost_config or CostConfig()
    logger.info(f"Sweeping gamma_sigma over {len(grid)} values")
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_point)(
            panel,
            signals,
            config.model_copy(update={"gamma_sigma": float(gamma)}),
            start,
            end,
            initial_value,
            estimator_config,
            cost_config,
        )
        for gamma in grid
    )
    table = pd.DataFrame(rows, columns=["gamma_sigma", "ann_return", "ann_vol", "sharpe", "sortino"])
    table["max_sharpe"] = False
    table["max_sortino"] = False
    table.loc[table["sharpe"].idxmax(), "max_sharpe"] = True
    table.loc[table["sortino"].idxmax(), "max_sortino"] = True
    return table
