"""
Configuration module for the regime MPC toolkit.

This module defines the Pydantic models for loading and validating a run
configuration from a YAML file. Every block has defaults taken from the
published model settings, so a configuration file only needs to name its
data source and date ranges.
"""

import logging
import os
from datetime import date
from pathlib import Path
from string import Template
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Minimum purge between the tuning and the test period, in calendar days.
MIN_PERIOD_GAP_DAYS = 15


class MpcConfig(BaseModel):
    """Model predictive control settings."""
    horizon: int = Field(2, ge=1)
    gamma_sigma: float = Field(0.1262, ge=0)
    gamma_trade: float = Field(4.6670, ge=0)
    min_weight: float = Field(0.01, ge=0, lt=1)
    tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(200, ge=1)
    solver: str = "CLARABEL"


class EstimatorConfig(BaseModel):
    """Return, risk and liquidity estimator settings."""
    ema_window: int = Field(10, ge=1)
    covariance_window: int = Field(504, ge=2)
    ridge: float = Field(1e-8, ge=0)
    kalman_q: float = Field(1e-6, gt=0)
    kalman_r: float = Field(1e-4, gt=0)
    kalman_initial_level: float = 0.0
    kalman_initial_variance: float = Field(1.0, gt=0)


class CostConfig(BaseModel):
    """Transaction cost settings."""
    bid_ask_spread: float = Field(0.002, ge=0)
    market_impact: bool = True


class BacktestConfig(BaseModel):
    """Roll-forward simulation settings."""
    initial_value: float = Field(26000.0, gt=0)
    rebalance: Literal["daily", "weekly", "monthly"] = "daily"


class DateRange(BaseModel):
    """Inclusive calendar range."""
    start: date
    end: date

    @model_validator(mode="after")
    def _ordered(self) -> "DateRange":
        if self.start > self.end:
            raise ValueError(f"start {self.start} is after end {self.end}")
        return self


class PeriodsConfig(BaseModel):
    """Tuning and test periods."""
    tune: Optional[DateRange] = None
    test: DateRange


class DataConfig(BaseModel):
    """File inputs."""
    prices: List[str]
    cash_rate: str
    signals: str
    max_ffill: int = Field(5, ge=0)


class ShockConfig(BaseModel):
    """One-day price jump injected into a synthetic asset."""
    asset: int = Field(ge=0)
    day: int = Field(ge=1)
    size: float = Field(gt=-1)


class SynthConfig(BaseModel):
    """Regime-switching market and signal generator settings.

    Regime 0 is the uptrend, regime 1 the downtrend. Drifts are daily simple
    returns.
    """
    n_assets: int = Field(4, ge=1)
    n_days: int = Field(800, ge=2)
    start_date: date = date(2018, 1, 1)
    transition: List[List[float]] = Field(
        default_factory=lambda: [[0.99, 0.01], [0.01, 0.99]]
    )
    drift: Tuple[float, float] = (0.004, -0.004)
    volatility: Tuple[float, float] = (0.008, 0.008)
    drift_scale: Optional[List[float]] = None
    volatility_scale: Optional[List[float]] = None
    common_regime: bool = False
    signal_noise: float = Field(0.0, ge=0, le=1)
    probability_range: Tuple[float, float] = (0.7, 1.0)
    initial_price: float = Field(100.0, gt=0)
    dollar_volume: float = Field(1e8, gt=0)
    cash_annual_yield: float = 0.0
    shocks: List[ShockConfig] = Field(default_factory=list)
    asset_prefix: str = "asset"

    @model_validator(mode="after")
    def _per_asset_lengths(self) -> "SynthConfig":
        for name in ("drift_scale", "volatility_scale"):
            values = getattr(self, name)
            if values is not None and len(values) != self.n_assets:
                raise ValueError(f"{name} needs {self.n_assets} entries, got {len(values)}")
        low, high = self.probability_range
        if not 0 <= low <= high <= 1:
            raise ValueError(f"probability_range {self.probability_range} not within [0, 1]")
        return self


class SearchSpace(BaseModel):
    """Log-uniform search ranges for the two MPC penalties."""
    gamma_sigma_range: Tuple[float, float] = (0.01, 1000.0)
    gamma_trade_range: Tuple[float, float] = (0.0001, 25.0)
    trials: int = Field(100, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _positive_ranges(self) -> "SearchSpace":
        for name in ("gamma_sigma_range", "gamma_trade_range"):
            low, high = getattr(self, name)
            if low <= 0 or high < low:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got {(low, high)}")
        return self


class TuningConfig(SearchSpace):
    """Hyperparameter search settings."""
    n_folds: int = Field(1, ge=1)
    gap: int = Field(15, ge=0)
    n_jobs: int = 1

    def search_space(self) -> SearchSpace:
        return SearchSpace(**self.model_dump(include=set(SearchSpace.model_fields)))


class SweepConfig(BaseModel):
    """Risk-aversion sweep settings."""
    gamma_sigma_grid: List[float] = Field(
        default_factory=lambda: [0.01, 0.1, 0.1262, 1.0, 10.0, 100.0, 1000.0], min_length=1
    )
    n_jobs: int = 1


class RunConfig(BaseModel):
    """Main application configuration."""
    data: Optional[DataConfig] = None
    synthetic: Optional[SynthConfig] = None
    seed: int = 0
    periods: PeriodsConfig
    mpc: MpcConfig = Field(default_factory=MpcConfig)
    estimators: EstimatorConfig = Field(default_factory=EstimatorConfig)
    costs: CostConfig = Field(default_factory=CostConfig)
    backtest: BacktestConfig = Field(default_factory=BacktestConfig)
    tuning: TuningConfig = Field(default_factory=TuningConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    exclude: List[str] = Field(default_factory=list)
    output_dir: str = "output"

    @model_validator(mode="after")
    def _one_source(self) -> "RunConfig":
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'data' or 'synthetic' must be configured")
        tune = self.periods.tune
        if tune is not None:
            gap = (self.periods.test.start - tune.end).days
            if gap < MIN_PERIOD_GAP_DAYS:
                logger.warning(
                    f"Tuning period ends {gap} days before the test period "
                    f"(at least {MIN_PERIOD_GAP_DAYS} recommended)"
                )
        return self

    def check_paths(self) -> None:
        """Raise ConfigError naming the first referenced file that does not exist."""
        if self.data is None:
            return
        for path in [*self.data.prices, self.data.cash_rate, self.data.signals]:
            if not Path(path).is_file():
                raise ConfigError(f"file not found: {path}")


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """
    Return a validated copy of the configuration with CLI flag values applied.

    Recognised keys: seed, trials, gamma_sigma, gamma_trade, horizon, exclude,
    output_dir, n_jobs. Keys whose value is None are ignored.
    """
    data: Dict[str, Any] = config.model_dump()
    values = {key: value for key, value in overrides.items() if value is not None}

    if "seed" in values:
        data["seed"] = values["seed"]
        data["tuning"]["seed"] = values["seed"]
    if "trials" in values:
        data["tuning"]["trials"] = values["trials"]
    for key in ("gamma_sigma", "gamma_trade"):
        if key in values:
            data["mpc"][key] = values[key]
    if "horizon" in values:
        data["mpc"]["horizon"] = values["horizon"]
    if "exclude" in values:
        data["exclude"] = list(values["exclude"])
    if "output_dir" in values:
        data["output_dir"] = values["output_dir"]
    if "n_jobs" in values:
        data["tuning"]["n_jobs"] = values["n_jobs"]
        data["sweep"]["n_jobs"] = values["n_jobs"]

    return RunConfig.model_validate(data)


def load_config(config_file: str = "config/config.yml") -> RunConfig:
    """
    Load and process the configuration file with environment variable substitution.

    Args:
        config_file: Path to the YAML configuration file.

    Returns:
        RunConfig: The parsed and validated configuration.
    """
    try:
        with open(config_file) as f:
            template = Template(f.read())
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {config_file}") from e

    config_str = template.safe_substitute(os.environ)
    config_data = yaml.safe_load(config_str)
    if not isinstance(config_data, dict):
        raise ConfigError(f"{config_file} does not contain a configuration mapping")

    return RunConfig(**config_data)
