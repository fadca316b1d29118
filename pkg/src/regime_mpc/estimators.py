"""
Return, risk and liquidity estimators for each decision date.

For decision index k only rows up to k - 1 of returns and volumes are read;
the signal and cash rate of row k are known at the decision.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import EstimatorConfig
from .errors import WarmupError
from .market_data import AlignedPanel
from .regime_signals import CLASS_CODES, RegimeClass, RegimeSignal, SignalPanel

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

BULLISH = CLASS_CODES[RegimeClass.BULLISH]
BEARISH = CLASS_CODES[RegimeClass.BEARISH]


@dataclass(frozen=True)
class EmaState:
    window: int
    current: ArrayLike

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"EMA window must be >= 1, got {self.window}")

    @property
    def alpha(self) -> float:
        return 2.0 / (self.window + 1)


def ema_update(state: EmaState, x: ArrayLike) -> EmaState:
    alpha = state.alpha
    return replace(state, current=x * alpha + state.current * (1.0 - alpha))


def ema_series(frame: pd.DataFrame, window: int) -> pd.DataFrame:
    """EMA with smoothing 2 / (window + 1), seeded with the first observation."""
    return frame.ewm(span=window, adjust=False).mean()


def ewm_std_series(returns: pd.DataFrame, window: int) -> pd.DataFrame:
    """Square root of the EMA of squared deviations from the EMA mean."""
    deviation = returns - ema_series(returns, window)
    return np.sqrt(ema_series(deviation**2, window)).fillna(0.0)


@dataclass(frozen=True)
class KalmanState:
    """
    Local-level filter state: the hidden level is the bias between realised
    and estimated returns.
    """

    level: ArrayLike
    variance: ArrayLike
    q: float
    r: float

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0 or np.any(np.asarray(self.variance) <= 0):
            raise ValueError("Kalman variances must be positive")

    @classmethod
    def initial(cls, n_assets: int, config: EstimatorConfig) -> "KalmanState":
        return cls(
            level=np.full(n_assets, config.kalman_initial_level),
            variance=np.full(n_assets, config.kalman_initial_variance),
            q=config.kalman_q,
            r=config.kalman_r,
        )


def kalman_update(state: KalmanState, observation: ArrayLike) -> KalmanState:
    """One predict/update step; NaN observations leave the state unchanged."""
    observation = np.asarray(observation, dtype=float)
    predicted = state.variance + state.q
    gain = predicted / (predicted + state.r)
    level = state.level + gain * (np.nan_to_num(observation) - state.level)
    variance = (1.0 - gain) * predicted
    observed = ~np.isnan(observation)
    if observation.ndim == 0:
        if not observed:
            return state
        return replace(state, level=float(level), variance=float(variance))
    return replace(
        state,
        level=np.where(observed, level, state.level),
        variance=np.where(observed, variance, state.variance),
    )


def kalman_boost(
    state: KalmanState, raw: ArrayLike, realized_prev: ArrayLike, raw_prev: ArrayLike
):
    """
    Boost ``raw`` with the lagged level, then absorb the latest observation.

    Returns:
        (updated state, boosted estimate)
    """
    boosted = raw + state.level
    return kalman_update(state, np.subtract(realized_prev, raw_prev)), boosted


def estimate_returns(
    predicted: np.ndarray, p_bull: np.ndarray, p_bear: np.ndarray, ema_r: np.ndarray
) -> np.ndarray:
    """Vectorised regime transform of EMA returns."""
    return np.where(
        predicted == BULLISH,
        -p_bull * ema_r,
        np.where(predicted == BEARISH, p_bear * ema_r, ema_r),
    )


def estimate_return(signal: RegimeSignal, ema_r: float) -> float:
    if signal.predicted is RegimeClass.BULLISH:
        return -signal.p_bull * ema_r
    if signal.predicted is RegimeClass.BEARISH:
        return signal.p_bear * ema_r
    return ema_r


def _raw_estimates(ema: np.ndarray, signals: SignalPanel, k: int, horizon: int) -> np.ndarray:
    predicted, p_bull, p_bear = signals.row(k)
    rows = [k - 1 - (horizon - j) for j in range(1, horizon + 1)]
    return estimate_returns(predicted, p_bull, p_bear, ema[rows])


def _check_history(k: int, horizon: int, ema_window: int) -> None:
    needed = horizon + ema_window
    if k < needed:
        raise WarmupError(
            f"decision index {k} needs at least {needed} rows of history"
        )


def horizon_estimates(
    panel: AlignedPanel,
    signals: SignalPanel,
    k: int,
    horizon: int,
    ema_window: int = 10,
    ema: Optional[pd.DataFrame] = None,
) -> np.ndarray:
    """
    Raw estimates for steps k + 1 .. k + H as an H x N array.

    Step j reads the EMA of row k - 1 - (H - j) and the signal of row k.
    """
    if k >= len(panel):
        raise WarmupError(f"decision index {k} is outside a {len(panel)}-row panel")
    _check_history(k, horizon, ema_window)
    if ema is None:
        ema = ema_series(panel.returns, ema_window)
    return _raw_estimates(ema.to_numpy(), signals, k, horizon)


def rolling_covariance(
    panel: AlignedPanel, k: int, window: int, ridge: float = 1e-8
) -> np.ndarray:
    """
    Sample covariance of returns rows k - window .. k - 1, ridge on the risky
    diagonal, with a zero cash row and column appended.
    """
    if k - window < 1:
        raise WarmupError(f"decision index {k} needs {window} returns before it")
    window_returns = panel.returns.iloc[k - window : k].to_numpy()
    sample = np.atleast_2d(np.cov(window_returns, rowvar=False, ddof=1))
    sample = 0.5 * (sample + sample.T)
    n = panel.n_assets
    covariance = np.zeros((n + 1, n + 1))
    covariance[:n, :n] = sample + ridge * np.eye(n)
    return covariance


@dataclass(frozen=True)
class EstimateSet:
    """
    Everything the optimiser needs at one decision date. Return arrays are
    H x (N + 1) with cash last.
    """

    date: pd.Timestamp
    index: int
    raw: np.ndarray
    boosted: np.ndarray
    covariance: np.ndarray
    ewm_sigma: np.ndarray
    ewm_volume: np.ndarray
    cash_rate: float

    @property
    def horizon(self) -> int:
        return self.boosted.shape[0]

    @property
    def n_assets(self) -> int:
        return self.boosted.shape[1] - 1


class ReturnEstimator:
    """
    Stateful estimator for one backtest: precomputes EMA series and carries
    the Kalman state from one decision to the next.
    """

    def __init__(
        self,
        panel: AlignedPanel,
        signals: SignalPanel,
        horizon: int,
        config: EstimatorConfig,
        kalman_state: Optional[KalmanState] = None,
    ):
        if list(signals.assets) != panel.assets:
            raise ValueError("signal and panel assets differ")
        self.panel = panel
        self.signals = signals
        self.horizon = horizon
        self.config = config
        self.state = kalman_state or KalmanState.initial(panel.n_assets, config)
        self._ema = ema_series(panel.returns, config.ema_window).to_numpy()
        self._sigma = ewm_std_series(panel.returns, config.ema_window).to_numpy()
        self._volume = ema_series(panel.dollar_volume, config.ema_window).to_numpy()
        self._returns = panel.returns.to_numpy()
        self._last: Optional[int] = None

    def _observation_parts(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Realised return of row k - 1 and the step-1 raw estimate made at k - 2."""
        made_at = k - 2
        if made_at < self.horizon + self.config.ema_window:
            missing = np.full(self.panel.n_assets, np.nan)
            return missing, missing
        raw_prev = _raw_estimates(self._ema, self.signals, made_at, self.horizon)[0]
        return self._returns[k - 1], raw_prev

    def observation(self, k: int) -> np.ndarray:
        """
        Realised return of row k - 1 minus the step-1 raw estimate that
        targeted it (made at decision k - 2). NaN while unavailable.
        """
        realized_prev, raw_prev = self._observation_parts(k)
        return realized_prev - raw_prev

    def _absorb(self, k: int) -> None:
        self.state = kalman_update(self.state, self.observation(k))
        self._last = k

    def warm_up(self, k_from: int, k_to: int) -> KalmanState:
        """Run the filter over decisions k_from .. k_to - 1 without estimating."""
        for k in range(k_from, k_to):
            self._absorb(k)
        logger.debug(f"Kalman warm-up over rows {k_from}..{k_to - 1}")
        return self.state

    def estimate(self, k: int) -> EstimateSet:
        """Estimates for decision index k; calls are expected in increasing k."""
        _check_history(k, self.horizon, self.config.ema_window)
        raw = _raw_estimates(self._ema, self.signals, k, self.horizon)
        covariance = rolling_covariance(
            self.panel, k, self.config.covariance_window, self.config.ridge
        )

        if self._last is not None:
            for j in range(self._last + 1, k):
                self._absorb(j)
        realized_prev, raw_prev = self._observation_parts(k)
        self.state, boosted = kalman_boost(self.state, raw, realized_prev, raw_prev)
        self._last = k

        cash = float(self.panel.cash_rate.iloc[k])
        cash_column = np.full((self.horizon, 1), cash)
        return EstimateSet(
            date=self.panel.dates[k],
            index=k,
            raw=np.hstack([raw, cash_column]),
            boosted=np.hstack([boosted, cash_column]),
            covariance=covariance,
            ewm_sigma=self._sigma[k - 1].copy(),
            ewm_volume=self._volume[k - 1].copy(),
            cash_rate=cash,
        )
