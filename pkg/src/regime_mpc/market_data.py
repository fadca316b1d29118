"""
Price, volume and cash-rate loading plus calendar alignment.

Inputs are per-asset CSV files (``date,close,volume``) and a cash-rate CSV
(``date,annual_yield`` in percent). ``align`` merges them into an
``AlignedPanel`` on a shared trading calendar.
"""

import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import AlignmentError, DataValidationError

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
PRICE_COLUMNS = ("date", "close", "volume")
CASH_COLUMNS = ("date", "annual_yield")

DateLike = Union[date, str, pd.Timestamp]


@dataclass(frozen=True)
class PriceSeries:
    """Daily close prices and dollar volumes of one asset."""

    asset_label: str
    dates: pd.DatetimeIndex
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        if not (len(self.dates) == len(self.close) == len(self.volume)):
            raise DataValidationError(f"{self.asset_label}: column lengths differ")
        if not self.dates.is_monotonic_increasing or self.dates.has_duplicates:
            raise DataValidationError(f"{self.asset_label}: dates must be strictly increasing")
        if np.any(~(self.close > 0)):
            raise DataValidationError(f"{self.asset_label}: close prices must be positive")
        if np.any(~(self.volume >= 0)):
            raise DataValidationError(f"{self.asset_label}: volumes must be nonnegative")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class CashRateSeries:
    """Daily risk-free return per date."""

    label: str
    dates: pd.DatetimeIndex
    daily_rate: np.ndarray

    def __post_init__(self):
        if not self.dates.is_monotonic_increasing or self.dates.has_duplicates:
            raise DataValidationError(f"{self.label}: dates must be strictly increasing")
        if len(self.dates) != len(self.daily_rate) or np.any(~np.isfinite(self.daily_rate)):
            raise DataValidationError(f"{self.label}: invalid cash rates")


def _read_table(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise DataValidationError(f"{path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DataValidationError(f"{path}: file is empty") from e
    frame.columns = [c.strip().lower() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"{path}: missing columns {missing}")
    return frame[list(columns)]


def _parse_column(frame: pd.DataFrame, column: str, path: Union[str, Path], kind: str) -> pd.Series:
    """Parse one text column, naming the first bad line (header is line 1)."""
    raw = frame[column]
    if kind == "date":
        parsed = pd.to_datetime(raw, format="%Y-%m-%d", errors="coerce")
    else:
        parsed = pd.to_numeric(raw, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataValidationError(
            f"{path}: line {row + 2}: cannot parse {column} value {raw.iloc[row]!r}"
        )
    return parsed


def _first_line(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0]) + 2


def load_price_csv(path: Union[str, Path], asset_label: Optional[str] = None) -> PriceSeries:
    """
    Load one asset's ``date,close,volume`` CSV.

    Args:
        path: CSV file path.
        asset_label: Asset name; defaults to the file stem.

    Returns:
        PriceSeries: The validated series sorted by date.
    """
    label = asset_label or Path(path).stem
    frame = _read_table(path, PRICE_COLUMNS)
    dates = _parse_column(frame, "date", path, "date")
    close = _parse_column(frame, "close", path, "number").to_numpy(dtype=float)
    volume = _parse_column(frame, "volume", path, "number").to_numpy(dtype=float)

    if np.any(close <= 0):
        raise DataValidationError(f"{path}: line {_first_line(close <= 0)}: close must be positive")
    if np.any(volume < 0):
        raise DataValidationError(f"{path}: line {_first_line(volume < 0)}: volume must be >= 0")
    duplicated = dates.duplicated().to_numpy()
    if duplicated.any():
        raise DataValidationError(f"{path}: line {_first_line(duplicated)}: duplicate date")

    order = np.argsort(dates.to_numpy(), kind="stable")
    logger.info(f"Loaded {len(order)} rows for {label} from {path}")
    return PriceSeries(
        asset_label=label,
        dates=pd.DatetimeIndex(dates.to_numpy()[order]),
        close=close[order],
        volume=volume[order],
    )


def load_cash_csv(path: Union[str, Path], label: str = "cash") -> CashRateSeries:
    """Load a ``date,annual_yield`` CSV (percent) as daily rates (yield / 100 / 252)."""
    frame = _read_table(path, CASH_COLUMNS)
    dates = _parse_column(frame, "date", path, "date")
    annual = _parse_column(frame, "annual_yield", path, "number").to_numpy(dtype=float)
    duplicated = dates.duplicated().to_numpy()
    if duplicated.any():
        raise DataValidationError(f"{path}: line {_first_line(duplicated)}: duplicate date")

    order = np.argsort(dates.to_numpy(), kind="stable")
    logger.info(f"Loaded {len(order)} cash-rate rows from {path}")
    return CashRateSeries(
        label=label,
        dates=pd.DatetimeIndex(dates.to_numpy()[order]),
        daily_rate=annual[order] / 100.0 / TRADING_DAYS,
    )


@dataclass(frozen=True)
class AlignedPanel:
    """
    Date-aligned prices, simple returns and dollar volumes of N risky assets
    plus the daily cash rate. Row 0 of ``returns`` is NaN.
    """

    prices: pd.DataFrame
    returns: pd.DataFrame
    dollar_volume: pd.DataFrame
    cash_rate: pd.Series
    cash_label: str = "cash"

    @classmethod
    def from_prices(
        cls,
        prices: pd.DataFrame,
        dollar_volume: pd.DataFrame,
        cash_rate: pd.Series,
        cash_label: str = "cash",
    ) -> "AlignedPanel":
        prices = prices.astype(float)
        if prices.isna().any().any() or (prices <= 0).any().any():
            raise DataValidationError("panel prices must be populated and positive")
        index = pd.DatetimeIndex(prices.index)
        return cls(
            prices=prices,
            returns=prices / prices.shift(1) - 1.0,
            dollar_volume=dollar_volume.reindex(index=prices.index, columns=prices.columns).astype(float),
            cash_rate=cash_rate.reindex(prices.index).astype(float),
            cash_label=cash_label,
        )

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.prices.index)

    @property
    def assets(self) -> List[str]:
        return list(self.prices.columns)

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    def __len__(self) -> int:
        return len(self.prices)

    def index_of(self, day: DateLike) -> int:
        try:
            return int(self.dates.get_loc(pd.Timestamp(day)))
        except KeyError as e:
            raise AlignmentError(f"{day} is not a trading date of the panel") from e

    def index_range(self, start: DateLike, end: DateLike) -> Tuple[int, int]:
        """First and last calendar index inside [start, end]."""
        first = int(self.dates.searchsorted(pd.Timestamp(start), side="left"))
        last = int(self.dates.searchsorted(pd.Timestamp(end), side="right")) - 1
        if first > last:
            raise AlignmentError(f"no trading dates between {start} and {end}")
        return first, last

    def select(self, assets: Iterable[str]) -> "AlignedPanel":
        keep = list(assets)
        unknown = [a for a in keep if a not in self.prices.columns]
        if unknown:
            raise DataValidationError(f"unknown assets: {unknown}")
        if not keep:
            raise DataValidationError("at least one risky asset is required")
        return AlignedPanel(
            prices=self.prices[keep],
            returns=self.returns[keep],
            dollar_volume=self.dollar_volume[keep],
            cash_rate=self.cash_rate,
            cash_label=self.cash_label,
        )

    def exclude(self, assets: Iterable[str]) -> "AlignedPanel":
        drop = list(assets)
        unknown = [a for a in drop if a not in self.prices.columns]
        if unknown:
            raise DataValidationError(f"cannot exclude unknown assets: {unknown}")
        return self.select([a for a in self.assets if a not in drop])

    def to_series(self) -> Tuple[List[PriceSeries], CashRateSeries]:
        series = [
            PriceSeries(
                asset_label=asset,
                dates=self.dates,
                close=self.prices[asset].to_numpy(),
                volume=self.dollar_volume[asset].to_numpy(),
            )
            for asset in self.assets
        ]
        cash = CashRateSeries(self.cash_label, self.dates, self.cash_rate.to_numpy())
        return series, cash


def _fill_short_gaps(frame: pd.DataFrame, max_ffill: int) -> pd.DataFrame:
    """Forward-fill runs of missing values no longer than ``max_ffill``."""
    filled = frame.copy()
    carried = frame.ffill()
    for column in frame.columns:
        missing = frame[column].isna()
        if not missing.any():
            continue
        runs = (missing != missing.shift()).cumsum()
        run_length = missing.groupby(runs).transform("sum")
        fillable = missing & (run_length <= max_ffill) & carried[column].notna()
        filled.loc[fillable, column] = carried.loc[fillable, column]
    return filled


def align(
    series: Sequence[PriceSeries], cash: CashRateSeries, max_ffill: int = 5
) -> AlignedPanel:
    """
    Merge price series and a cash-rate series on a common calendar.

    The calendar starts as the union of all dates. Gaps of at most
    ``max_ffill`` consecutive dates are forward-filled (zero dollar volume on
    filled dates); any date still missing for some input is dropped for all.

    Raises:
        AlignmentError: If no date survives.
    """
    if not series:
        raise AlignmentError("at least one price series is required")
    if max_ffill < 0:
        raise AlignmentError("max_ffill must be >= 0")
    labels = [s.asset_label for s in series]
    if len(set(labels)) != len(labels):
        raise DataValidationError(f"duplicate asset labels: {labels}")

    calendar = cash.dates
    for s in series:
        calendar = calendar.union(s.dates)

    close = pd.DataFrame(
        {s.asset_label: pd.Series(s.close, index=s.dates) for s in series}, index=calendar
    )
    volume = pd.DataFrame(
        {s.asset_label: pd.Series(s.volume, index=s.dates) for s in series}, index=calendar
    )
    rate = pd.Series(cash.daily_rate, index=cash.dates).reindex(calendar)

    close = _fill_short_gaps(close, max_ffill)
    rate = _fill_short_gaps(rate.to_frame(cash.label), max_ffill)[cash.label]
    volume = volume.where(volume.notna() | close.isna(), 0.0)

    complete = close.notna().all(axis=1) & rate.notna()
    dropped = int((~complete).sum())
    if dropped:
        logger.warning(f"Dropped {dropped} of {len(calendar)} dates that could not be aligned")
    if not complete.any():
        raise AlignmentError("no common dates remain after alignment")

    index = calendar[complete.to_numpy()]
    index.name = "date"
    panel = AlignedPanel.from_prices(
        prices=close.loc[index],
        dollar_volume=volume.loc[index],
        cash_rate=rate.loc[index],
        cash_label=cash.label,
    )
    logger.info(
        f"Aligned {panel.n_assets} assets on {len(panel)} dates "
        f"({index[0].date()} to {index[-1].date()})"
    )
    return panel
