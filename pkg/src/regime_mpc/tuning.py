"""
Purged group time-series splitting and random search over the MPC
penalties, scored by validation Sortino ratio.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import loguniform

from .backtest import required_history, run_mpc_backtest
from .config import RunConfig, SearchSpace
from .errors import InputError, TuningError, WarmupError
from .evaluation import compute_report
from .market_data import AlignedPanel
from .models import TrialRecord, TuningResult
from .regime_signals import SignalPanel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PgtsFold:
    train: pd.DatetimeIndex
    validation: pd.DatetimeIndex


@dataclass(frozen=True)
class PgtsSplit:
    """Expanding-window folds; ``gap`` dates are purged before each validation block."""

    folds: List[PgtsFold]
    gap: int

    def __len__(self) -> int:
        return len(self.folds)


def make_pgts(dates: Sequence, n_folds: int, gap: int) -> PgtsSplit:
    """
    Split ``dates`` into n_folds + 1 contiguous groups. Fold f trains on
    groups 0..f and validates on group f + 1 without its first ``gap`` dates.

    Raises:
        InputError: Too few dates for non-empty folds.
    """
    if n_folds < 1 or gap < 0:
        raise InputError(f"need n_folds >= 1 and gap >= 0, got {n_folds} and {gap}")
    calendar = pd.DatetimeIndex(dates)
    groups = np.array_split(np.arange(len(calendar)), n_folds + 1)
    folds = []
    for f in range(n_folds):
        train = np.concatenate(groups[: f + 1])
        validation = groups[f + 1][gap:]
        if len(train) == 0 or len(validation) < 2:
            raise InputError(
                f"{len(calendar)} dates are too few for {n_folds} folds with a {gap}-date gap"
            )
        folds.append(PgtsFold(train=calendar[train], validation=calendar[validation]))
    return PgtsSplit(folds=folds, gap=gap)


def sample_params(space: SearchSpace) -> np.ndarray:
    """Seeded log-uniform draws, one (gamma_sigma, gamma_trade) row per trial."""
    rng = np.random.default_rng(space.seed)
    columns = []
    for low, high in (space.gamma_sigma_range, space.gamma_trade_range):
        if low == high:
            columns.append(np.full(space.trials, float(low)))
        else:
            columns.append(loguniform(low, high).rvs(size=space.trials, random_state=rng))
    return np.column_stack(columns)


def _check_warmup(panel: AlignedPanel, split: PgtsSplit, config: RunConfig) -> None:
    needed = required_history(config.mpc, config.estimators)
    for i, fold in enumerate(split.folds):
        first = panel.index_of(fold.validation[0])
        if first < needed:
            raise WarmupError(
                f"fold {i} validation starts at row {first}; {needed} rows of history are needed"
            )


def evaluate_params(
    panel: AlignedPanel,
    signals: SignalPanel,
    split: PgtsSplit,
    config: RunConfig,
    gamma_sigma: float,
    gamma_trade: float,
) -> Dict[str, float]:
    """
    Mean validation metrics of one parameter pair over all folds.

    Each fold is scored by the plain MPC backtest of its validation block,
    so the bias filter has absorbed the training block (and the purged gap)
    before the first validation decision.
    """
    mpc = config.mpc.model_copy(update={"gamma_sigma": gamma_sigma, "gamma_trade": gamma_trade})
    metrics = {"sortino": [], "sharpe": [], "ann_return": [], "ann_vol": []}
    for fold in split.folds:
        result = run_mpc_backtest(
            panel,
            signals,
            mpc,
            panel.index_of(fold.validation[0]),
            panel.index_of(fold.validation[-1]),
            config.backtest.initial_value,
            config.estimators,
            config.costs,
        )
        report = compute_report(result)
        metrics["sortino"].append(report.sortino)
        metrics["sharpe"].append(report.sharpe)
        metrics["ann_return"].append(report.ann_mean_excess)
        metrics["ann_vol"].append(report.ann_volatility)
    return {name: float(np.mean(values)) for name, values in metrics.items()}


def _run_trial(
    trial: int,
    gamma_sigma: float,
    gamma_trade: float,
    panel: AlignedPanel,
    signals: SignalPanel,
    split: PgtsSplit,
    config: RunConfig,
) -> TrialRecord:
    try:
        metrics = evaluate_params(panel, signals, split, config, gamma_sigma, gamma_trade)
    except Exception as e:
        logger.warning(f"Trial {trial} failed: {e}")
        return TrialRecord(
            trial=trial, gamma_sigma=gamma_sigma, gamma_trade=gamma_trade, error=str(e)
        )
    logger.info(
        f"Trial {trial}: gamma_sigma={gamma_sigma:.6g} gamma_trade={gamma_trade:.6g} "
        f"sortino={metrics['sortino']:.4f}"
    )
    return TrialRecord(trial=trial, gamma_sigma=gamma_sigma, gamma_trade=gamma_trade, **metrics)


def tune(
    panel: AlignedPanel,
    signals: SignalPanel,
    space: SearchSpace,
    split: PgtsSplit,
    config: RunConfig,
    n_jobs: int = 1,
) -> TuningResult:
    """
    Random search maximising mean validation Sortino. Ties go to the lowest
    trial index.

    Raises:
        WarmupError: A validation block starts without enough history.
        TuningError: Every trial failed.
    """
    _check_warmup(panel, split, config)
    params = sample_params(space)
    logger.info(f"Tuning {space.trials} trials over {len(split)} folds (seed {space.seed})")
    trials: List[TrialRecord] = Parallel(n_jobs=n_jobs)(
        delayed(_run_trial)(i, float(gs), float(gt), panel, signals, split, config)
        for i, (gs, gt) in enumerate(params)
    )
    trials.sort(key=lambda t: t.trial)

    scores = np.array([t.sortino for t in trials], dtype=float)
    if np.all(np.isnan(scores)):
        details = "; ".join(f"trial {t.trial}: {t.error}" for t in trials)
        raise TuningError(f"all {len(trials)} trials failed: {details}")
    best = int(np.nanargmax(scores))
    winner = trials[best]
    if math.isinf(winner.sortino):
        logger.warning(f"Winning trial {best} has an infinite Sortino ratio")
    logger.info(
        f"Best trial {best}: gamma_sigma={winner.gamma_sigma:.6g} "
        f"gamma_trade={winner.gamma_trade:.6g} sortino={winner.sortino:.4f}"
    )
    return TuningResult(
        gamma_sigma=winner.gamma_sigma,
        gamma_trade=winner.gamma_trade,
        best_trial=best,
        trials=trials,
    )
