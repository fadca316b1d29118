"""
Transaction cost model.

Trades are fractions of portfolio value. For risky asset i the cost of a
weight change d is ``b/2 * |d| + sigma_i * |d|**1.5 / sqrt(volume_i / V)``,
also a fraction of portfolio value. Cash trades are free.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import CostConfig
from .errors import IlliquidityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostParams:
    spread: float
    ewm_sigma: np.ndarray
    ewm_volume: np.ndarray
    portfolio_value: float
    market_impact: bool = True

    def __post_init__(self):
        if self.spread < 0:
            raise ValueError(f"bid-ask spread must be >= 0, got {self.spread}")
        if not self.portfolio_value > 0:
            raise ValueError(f"portfolio value must be positive, got {self.portfolio_value}")

    @classmethod
    def from_estimates(cls, estimates, portfolio_value: float, config: CostConfig) -> "CostParams":
        return cls(
            spread=config.bid_ask_spread,
            ewm_sigma=np.asarray(estimates.ewm_sigma, dtype=float),
            ewm_volume=np.asarray(estimates.ewm_volume, dtype=float),
            portfolio_value=portfolio_value,
            market_impact=config.market_impact,
        )

    @property
    def n_assets(self) -> int:
        return len(self.ewm_sigma)

    @property
    def tradable(self) -> np.ndarray:
        return self.ewm_volume > 0


def impact_coefficients(params: CostParams) -> np.ndarray:
    """sigma_i * sqrt(V / volume_i); zero for untradable assets or without impact."""
    if not params.market_impact:
        return np.zeros(params.n_assets)
    coefficients = np.zeros(params.n_assets)
    tradable = params.tradable
    coefficients[tradable] = params.ewm_sigma[tradable] * np.sqrt(
        params.portfolio_value / params.ewm_volume[tradable]
    )
    return coefficients


def _risky(delta_w: np.ndarray, params: CostParams) -> np.ndarray:
    delta_w = np.asarray(delta_w, dtype=float)
    if delta_w.shape[-1] == params.n_assets + 1:
        return delta_w[..., : params.n_assets]
    if delta_w.shape[-1] != params.n_assets:
        raise ValueError(
            f"trade vector has {delta_w.shape[-1]} entries for {params.n_assets} assets"
        )
    return delta_w


def transaction_cost(delta_w: np.ndarray, params: CostParams) -> np.ndarray:
    """
    Per-asset cost of a weight change, broadcasting over leading axes.

    A trailing cash entry (N + 1 columns) is accepted and costs nothing.

    Raises:
        IlliquidityError: A nonzero trade in an asset with no volume.
    """
    size = np.abs(_risky(delta_w, params))
    if not np.all(np.isfinite(size)):
        raise ValueError("trade vector must be finite")
    stuck = (size > 0) & ~params.tradable
    if np.any(stuck):
        assets = np.flatnonzero(np.any(stuck.reshape(-1, params.n_assets), axis=0)).tolist()
        raise IlliquidityError(f"nonzero trade in assets without volume: {assets}")
    return 0.5 * params.spread * size + impact_coefficients(params) * size**1.5


def total_cost(delta_w: np.ndarray, params: CostParams) -> np.ndarray:
    return transaction_cost(delta_w, params).sum(axis=-1)
