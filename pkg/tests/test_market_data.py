import sys
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pandas as pd
import pytest

# Add src directory to path
sys.path.append(str(Path(__file__).parent.parent / "src"))

from regime_mpc.errors import AlignmentError, DataValidationError
from regime_mpc.market_data import (
    CashRateSeries,
    PriceSeries,
    align,
    load_cash_csv,
    load_price_csv,
)


def _series(label, dates, close, volume=None):
    dates = pd.DatetimeIndex(pd.to_datetime(dates))
    volume = np.full(len(dates), 1e6) if volume is None else np.asarray(volume, dtype=float)
    return PriceSeries(label, dates, np.asarray(close, dtype=float), volume)


def _cash(dates, rate=0.0):
    dates = pd.DatetimeIndex(pd.to_datetime(dates))
    return CashRateSeries("cash", dates, np.full(len(dates), rate))


class TestLoadPriceCsv(unittest.TestCase):
    def setUp(self):
        self.tmp = TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return path

    def test_well_formed_file(self):
        path = self._write(
            "gold.csv",
            "date,close,volume\n2021-01-04,100,5000\n2021-01-05,101,6000\n2021-01-06,99.5,5500\n",
        )
        series = load_price_csv(path)
        self.assertEqual(len(series), 3)
        self.assertEqual(series.asset_label, "gold")
        np.testing.assert_allclose(series.close, [100, 101, 99.5])

    def test_zero_close_names_the_line(self):
        path = self._write("bad.csv", "date,close,volume\n2021-01-04,100,1\n2021-01-05,0,1\n")
        with self.assertRaisesRegex(DataValidationError, "line 3"):
            load_price_csv(path)

    def test_malformed_value_names_the_line(self):
        path = self._write("bad.csv", "date,close,volume\n2021-01-04,abc,1\n")
        with self.assertRaisesRegex(DataValidationError, "line 2"):
            load_price_csv(path)

    def test_duplicate_date_rejected(self):
        path = self._write("dup.csv", "date,close,volume\n2021-01-04,1,1\n2021-01-04,2,1\n")
        with self.assertRaisesRegex(DataValidationError, "duplicate"):
            load_price_csv(path)

    def test_shuffled_dates_equal_sorted(self):
        rows = ["2021-01-04,100,1", "2021-01-05,101,2", "2021-01-06,102,3"]
        sorted_path = self._write("s.csv", "date,close,volume\n" + "\n".join(rows) + "\n")
        shuffled = self._write("x.csv", "date,close,volume\n" + "\n".join(rows[::-1]) + "\n")
        a, b = load_price_csv(sorted_path), load_price_csv(shuffled)
        self.assertTrue(a.dates.equals(b.dates))
        np.testing.assert_array_equal(a.close, b.close)
        np.testing.assert_array_equal(a.volume, b.volume)

    def test_cash_yield_converted_to_daily(self):
        path = self._write("tbill.csv", "date,annual_yield\n2021-01-04,2.52\n")
        cash = load_cash_csv(path)
        self.assertAlmostEqual(cash.daily_rate[0], 0.0001, places=15)


def test_identical_calendars_are_kept():
    dates = ["2021-01-04", "2021-01-05", "2021-01-06"]
    panel = align([_series("a", dates, [1, 2, 3]), _series("b", dates, [4, 5, 6])], _cash(dates))
    assert list(panel.dates.strftime("%Y-%m-%d")) == dates
    assert panel.assets == ["a", "b"]
    assert np.isnan(panel.returns.iloc[0]).all()


def test_interior_gap_is_forward_filled():
    dates = ["2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"]
    a = _series("a", [dates[0], dates[1], dates[3]], [10.0, 11.0, 12.0])
    b = _series("b", dates, [1.0, 1.0, 1.0, 1.0])
    panel = align([a, b], _cash(dates), max_ffill=5)

    assert len(panel) == 4
    assert panel.prices["a"].iloc[2] == 11.0
    assert panel.returns["a"].iloc[2] == 0.0
    assert panel.dollar_volume["a"].iloc[2] == 0.0


def test_long_gap_drops_dates_for_all_assets():
    dates = pd.bdate_range("2021-01-04", periods=10).strftime("%Y-%m-%d").tolist()
    a = _series("a", dates[:2] + dates[5:], np.arange(1, 8))
    b = _series("b", dates, np.arange(1, 11))
    panel = align([a, b], _cash(dates), max_ffill=2)
    assert len(panel) == 7
    assert pd.Timestamp(dates[3]) not in panel.dates


def test_disjoint_ranges_raise():
    a = _series("a", ["2021-01-04", "2021-01-05"], [1, 2])
    b = _series("b", ["2022-01-04", "2022-01-05"], [1, 2])
    cash = _cash(["2021-01-04", "2021-01-05", "2022-01-04", "2022-01-05"])
    with pytest.raises(AlignmentError):
        align([a, b], cash, max_ffill=0)


def test_returns_and_price_reconstruction():
    rng = np.random.default_rng(3)
    dates = pd.bdate_range("2021-01-04", periods=50).strftime("%Y-%m-%d")
    close = 100 * np.cumprod(1 + rng.normal(0, 0.01, size=(50, 2)), axis=0)
    panel = align([_series("a", dates, close[:, 0]), _series("b", dates, close[:, 1])], _cash(dates))

    prices = panel.prices.to_numpy()
    returns = panel.returns.to_numpy()
    np.testing.assert_allclose(returns[1:], prices[1:] / prices[:-1] - 1, rtol=0, atol=1e-12)
    rebuilt = prices[0] * np.cumprod(np.vstack([np.ones(2), 1 + returns[1:]]), axis=0)
    np.testing.assert_allclose(rebuilt, prices, rtol=1e-9)


def test_alignment_is_idempotent():
    dates = pd.bdate_range("2021-01-04", periods=8).strftime("%Y-%m-%d").tolist()
    a = _series("a", dates[:3] + dates[4:], np.arange(1.0, 8.0))
    b = _series("b", dates, np.arange(1.0, 9.0))
    once = align([a, b], _cash(dates, 1e-4))
    twice = align(*once.to_series())
    pd.testing.assert_frame_equal(once.prices, twice.prices)
    pd.testing.assert_frame_equal(once.dollar_volume, twice.dollar_volume)
    pd.testing.assert_series_equal(once.cash_rate, twice.cash_rate)


def test_index_range_snaps_to_calendar():
    dates = ["2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"]
    panel = align([_series("a", dates, [1, 2, 3, 4])], _cash(dates))
    assert panel.index_range("2021-01-02", "2021-01-06") == (0, 2)
    with pytest.raises(AlignmentError):
        panel.index_range("2022-01-01", "2022-02-01")


def test_exclude_keeps_remaining_assets():
    dates = ["2021-01-04", "2021-01-05"]
    panel = align(
        [_series("a", dates, [1, 2]), _series("b", dates, [1, 2]), _series("c", dates, [1, 2])],
        _cash(dates),
    )
    assert panel.exclude(["a", "c"]).assets == ["b"]
    with pytest.raises(DataValidationError):
        panel.exclude(["zzz"])
    with pytest.raises(DataValidationError):
        panel.exclude(["a", "b", "c"])
