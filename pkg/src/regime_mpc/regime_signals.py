"""
Regime signals: loading the upstream predictions and generating synthetic
regime-switching markets for testing.

Signals follow the contrarian convention: a BULLISH prediction means the
portfolio should lean against the asset, BEARISH means lean into it.
"""

import logging
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from .config import SynthConfig
from .errors import ConfigError, DataValidationError
from .market_data import TRADING_DAYS, AlignedPanel

logger = logging.getLogger(__name__)

SIGNAL_COLUMNS = ("date", "asset", "predicted", "p_bull", "p_bear")
UPTREND, DOWNTREND = 0, 1


class RegimeClass(str, Enum):
    BULLISH = "BULLISH"
    BEARISH = "BEARISH"
    OTHER = "OTHER"


# Integer codes used in vectorised estimator code.
CLASS_CODES = {RegimeClass.BULLISH: 0, RegimeClass.BEARISH: 1, RegimeClass.OTHER: 2}
CODE_CLASSES = {code: cls for cls, code in CLASS_CODES.items()}


class RegimeSignal(BaseModel):
    """One upstream prediction for one asset and date."""

    asset_label: str
    date: date
    predicted: RegimeClass
    p_bull: float = Field(ge=0, le=1)
    p_bear: float = Field(ge=0, le=1)


@dataclass(frozen=True)
class SignalPanel:
    """
    Signals on a panel calendar: T x N frames of class codes and probabilities.
    """

    predicted: pd.DataFrame
    p_bull: pd.DataFrame
    p_bear: pd.DataFrame

    @property
    def assets(self):
        return list(self.predicted.columns)

    def __len__(self) -> int:
        return len(self.predicted)

    def signal(self, day: Union[date, str, pd.Timestamp], asset: str) -> RegimeSignal:
        stamp = pd.Timestamp(day)
        return RegimeSignal(
            asset_label=asset,
            date=stamp.date(),
            predicted=CODE_CLASSES[int(self.predicted.at[stamp, asset])],
            p_bull=float(self.p_bull.at[stamp, asset]),
            p_bear=float(self.p_bear.at[stamp, asset]),
        )

    def row(self, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Class codes, p_bull and p_bear of calendar row k."""
        return (
            self.predicted.iloc[k].to_numpy(dtype=int),
            self.p_bull.iloc[k].to_numpy(dtype=float),
            self.p_bear.iloc[k].to_numpy(dtype=float),
        )

    def select(self, assets: Iterable[str]) -> "SignalPanel":
        keep = list(assets)
        return SignalPanel(self.predicted[keep], self.p_bull[keep], self.p_bear[keep])


def load_signals(path: Union[str, Path], panel: AlignedPanel) -> SignalPanel:
    """
    Load a ``date,asset,predicted,p_bull,p_bear`` CSV onto the panel calendar.

    Cells without a row are filled with OTHER and zero probabilities. Rows
    dated outside the calendar are ignored.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataValidationError(f"{path}: file is empty") from e
    frame.columns = [c.strip().lower() for c in frame.columns]
    missing = [c for c in SIGNAL_COLUMNS if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing columns {missing}")

    shape = (len(panel), panel.n_assets)
    predicted = np.full(shape, CLASS_CODES[RegimeClass.OTHER], dtype=int)
    p_bull = np.zeros(shape)
    p_bear = np.zeros(shape)
    seen = set()
    ignored = 0
    columns = {asset: j for j, asset in enumerate(panel.assets)}

    for i, record in enumerate(frame.itertuples(index=False)):
        line = i + 2
        asset = str(record.asset).strip()
        if asset not in columns:
            raise DataValidationError(f"{path}: line {line}: unknown asset {asset!r}")
        try:
            signal = RegimeSignal(
                asset_label=asset,
                date=str(record.date).strip(),
                predicted=str(record.predicted).strip().upper(),
                p_bull=record.p_bull,
                p_bear=record.p_bear,
            )
        except ValidationError as e:
            raise DataValidationError(f"{path}: line {line}: {e.errors()[0]['msg']}") from e

        key = (signal.date, asset)
        if key in seen:
            raise DataValidationError(f"{path}: line {line}: duplicate signal for {asset} on {signal.date}")
        seen.add(key)

        stamp = pd.Timestamp(signal.date)
        if stamp not in panel.dates:
            ignored += 1
            continue
        k = panel.index_of(stamp)
        j = columns[asset]
        predicted[k, j] = CLASS_CODES[signal.predicted]
        p_bull[k, j] = signal.p_bull
        p_bear[k, j] = signal.p_bear

    if ignored:
        logger.warning(f"Ignored {ignored} signal rows dated outside the panel calendar")
    filled = predicted.size - (len(seen) - ignored)
    if filled:
        logger.info(f"Filled {filled} missing signal cells with OTHER")
    logger.info(f"Loaded {len(seen)} signals from {path}")

    def _frame(values: np.ndarray) -> pd.DataFrame:
        return pd.DataFrame(values, index=panel.dates, columns=panel.assets)

    return SignalPanel(_frame(predicted), _frame(p_bull), _frame(p_bear))


def _check_transition(matrix: np.ndarray) -> None:
    if matrix.shape != (2, 2):
        raise ConfigError(f"transition matrix must be 2x2, got shape {matrix.shape}")
    if np.any(matrix < 0) or np.any(matrix > 1):
        raise ConfigError("transition probabilities must lie in [0, 1]")
    if np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError(f"transition rows must sum to 1, got {matrix.sum(axis=1).tolist()}")


def _simulate_chains(
    rng: np.random.Generator, transition: np.ndarray, n_steps: int, n_chains: int
) -> np.ndarray:
    """Two-state Markov chains, one column per chain."""
    uniforms = rng.random((n_steps, n_chains))
    states = np.empty((n_steps, n_chains), dtype=int)
    states[0] = (uniforms[0] < 0.5).astype(int)
    for t in range(1, n_steps):
        stay = transition[states[t - 1], states[t - 1]]
        states[t] = np.where(uniforms[t] < stay, states[t - 1], 1 - states[t - 1])
    return states


def generate_synthetic(
    config: SynthConfig, seed: int
) -> Tuple[AlignedPanel, SignalPanel, pd.DataFrame]:
    """
    Simulate a regime-switching market and contrarian regime signals.

    Regime 0 is the uptrend, regime 1 the downtrend. The signal emitted on
    day t looks at the regime of day t + 1: a coming downtrend is announced
    BULLISH, a coming uptrend BEARISH. With probability ``signal_noise`` the
    class is replaced by one of the three classes drawn uniformly.

    Returns:
        The aligned panel, the signal panel and the true regime of every
        return row (T x N).
    """
    transition = np.asarray(config.transition, dtype=float)
    _check_transition(transition)
    rng = np.random.default_rng(seed)
    n, days = config.n_assets, config.n_days

    chains = _simulate_chains(rng, transition, days + 1, 1 if config.common_regime else n)
    regimes = np.repeat(chains, n, axis=1) if config.common_regime else chains

    drift_scale = np.asarray(config.drift_scale or [1.0] * n)
    vol_scale = np.asarray(config.volatility_scale or [1.0] * n)
    drift = np.asarray(config.drift)[regimes[:days]] * drift_scale
    sigma = np.asarray(config.volatility)[regimes[:days]] * vol_scale

    shocks = rng.standard_normal((days, n))
    log_returns = np.log1p(drift) - 0.5 * sigma**2 + sigma * shocks
    log_returns[0] = 0.0
    for shock in config.shocks:
        if shock.asset >= n or shock.day >= days:
            raise ConfigError(f"shock {shock.model_dump()} lies outside the simulated market")
        log_returns[shock.day, shock.asset] += np.log1p(shock.size)
    prices = config.initial_price * np.exp(np.cumsum(log_returns, axis=0))

    # Signals
    ahead = regimes[1 : days + 1]
    active = rng.uniform(*config.probability_range, size=(days, n))
    passive = rng.uniform(0.0, 1.0, size=(days, n)) * (1.0 - active)
    noisy = rng.random((days, n)) < config.signal_noise
    random_class = rng.integers(0, 3, size=(days, n))
    other_probs = rng.uniform(0.0, 0.5, size=(days, 2, n))

    bull_code = CLASS_CODES[RegimeClass.BULLISH]
    bear_code = CLASS_CODES[RegimeClass.BEARISH]
    other_code = CLASS_CODES[RegimeClass.OTHER]
    oracle = np.where(ahead == DOWNTREND, bull_code, bear_code)
    predicted = np.where(noisy, random_class, oracle)
    p_bull = np.where(predicted == bull_code, active, passive)
    p_bear = np.where(predicted == bear_code, active, passive)
    p_bull = np.where(predicted == other_code, other_probs[:, 0], p_bull)
    p_bear = np.where(predicted == other_code, other_probs[:, 1], p_bear)

    dates = pd.bdate_range(config.start_date, periods=days, name="date")
    assets = [f"{config.asset_prefix}{j + 1}" for j in range(n)]

    def frame(values):
        return pd.DataFrame(values, index=dates, columns=assets)

    panel = AlignedPanel.from_prices(
        prices=frame(prices),
        dollar_volume=frame(np.full((days, n), config.dollar_volume)),
        cash_rate=pd.Series(config.cash_annual_yield / 100.0 / TRADING_DAYS, index=dates),
    )
    signals = SignalPanel(frame(predicted), frame(p_bull), frame(p_bear))
    logger.debug(f"Generated synthetic market: {n} assets, {days} days, seed {seed}")
    return panel, signals, frame(regimes[:days])


def write_fixture(
    out_dir: Union[str, Path],
    panel: AlignedPanel,
    signals: SignalPanel,
    regimes: pd.DataFrame,
) -> Path:
    """Write a panel and its signals in the loader's CSV formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamps = panel.dates.strftime("%Y-%m-%d")

    for asset in panel.assets:
        pd.DataFrame(
            {"date": stamps, "close": panel.prices[asset].to_numpy(), "volume": panel.dollar_volume[asset].to_numpy()}
        ).to_csv(out / f"{asset}.csv", index=False)

    pd.DataFrame(
        {"date": stamps, "annual_yield": panel.cash_rate.to_numpy() * 100.0 * TRADING_DAYS}
    ).to_csv(out / f"{panel.cash_label}.csv", index=False)

    long = []
    for asset in signals.assets:
        long.append(
            pd.DataFrame(
                {
                    "date": stamps,
                    "asset": asset,
                    "predicted": [CODE_CLASSES[int(c)].value for c in signals.predicted[asset]],
                    "p_bull": signals.p_bull[asset].to_numpy(),
                    "p_bear": signals.p_bear[asset].to_numpy(),
                }
            )
        )
    pd.concat(long, ignore_index=True).to_csv(out / "signals.csv", index=False)

    regimes.set_axis(stamps, axis=0).rename_axis("date").to_csv(out / "true_regimes.csv")
    logger.info(f"Wrote synthetic fixture for {panel.n_assets} assets to {out}")
    return out
