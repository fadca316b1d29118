import logging
import sys
import unittest
from pathlib import Path

import numpy as np
import pytest

# Add src directory to path
sys.path.append(str(Path(__file__).parent.parent / "src"))

from regime_mpc.backtest import (
    _simulate,
    resolve_range,
    run_buy_and_hold,
    run_equal_weight,
    run_mpc_backtest,
)
from regime_mpc.config import CostConfig, EstimatorConfig, MpcConfig, SynthConfig
from regime_mpc.errors import AlignmentError, BankruptcyError, InfeasibleError, WarmupError
from regime_mpc.estimators import KalmanState, ReturnEstimator
from regime_mpc.market_data import AlignedPanel
from regime_mpc.models import AllocationPlan, SolverStatus
from regime_mpc.regime_signals import generate_synthetic
from tests.market_fixtures import constant_signals, make_panel

ESTIMATORS = EstimatorConfig(covariance_window=40)


def _synthetic(seed=0, n_days=160):
    panel, signals, _ = generate_synthetic(SynthConfig(n_assets=3, n_days=n_days, signal_noise=0.2), seed)
    return panel, signals


def _doubling_panel(n_days=21):
    first = np.linspace(100.0, 200.0, n_days)
    return make_panel(np.column_stack([first, np.full(n_days, 50.0)]))


class TestBenchmarks(unittest.TestCase):
    def test_buy_and_hold_on_flat_prices_keeps_value(self):
        panel = make_panel(np.full((30, 3), 10.0))
        result = run_buy_and_hold(panel, 0, 29)
        np.testing.assert_array_equal(result.values, 26000.0)
        self.assertEqual(result.costs.sum(), 0.0)

    def test_buy_and_hold_drifts_with_prices(self):
        result = run_buy_and_hold(_doubling_panel(), 0, 20)
        self.assertAlmostEqual(result.values[-1], 39000.0, delta=1e-6)
        np.testing.assert_allclose(result.end_weights, [2 / 3, 1 / 3, 0.0], atol=1e-12)

    def test_equal_weight_on_flat_prices_pays_nothing(self):
        panel = make_panel(np.full((30, 2), 10.0))
        for spread in (0.0, 0.002):
            result = run_equal_weight(panel, 0, 29, cost_config=CostConfig(bid_ask_spread=spread))
            np.testing.assert_array_equal(result.values, 26000.0)

    def test_equal_weight_without_costs_matches_hand_computation(self):
        panel = _doubling_panel()
        config = CostConfig(bid_ask_spread=0.0, market_impact=False)
        result = run_equal_weight(panel, 0, 20, cost_config=config)
        r = panel.returns["a1"].to_numpy()[1:]
        self.assertAlmostEqual(result.values[-1], 26000.0 * np.prod(1 + 0.5 * r), delta=1e-8)

    def test_equal_weight_linear_costs_match_hand_computation(self):
        panel = _doubling_panel()
        config = CostConfig(bid_ask_spread=0.002, market_impact=False)
        result = run_equal_weight(panel, 0, 20, cost_config=config)

        r = panel.returns["a1"].to_numpy()
        value, w = 26000.0, 0.5
        for k in range(20):
            cost = 0.0 if k == 0 else 0.001 * 2 * abs(0.5 - w) * value
            value = value * (1 + 0.5 * r[k + 1]) - cost
            w = 0.5 * (1 + r[k + 1]) / (1 + 0.5 * r[k + 1])
        self.assertAlmostEqual(result.values[-1], value, delta=1e-8)
        self.assertEqual(result.costs[0], 0.0)
        self.assertTrue(np.all(result.costs[1:] > 0))

    def test_weekly_and_monthly_rebalancing(self):
        panel = make_panel(np.column_stack([np.linspace(100, 300, 90), np.full(90, 50.0)]))
        for rebalance, key in (("weekly", lambda d: d.isocalendar()[:2]), ("monthly", lambda d: (d.year, d.month))):
            result = run_equal_weight(panel, 0, 89, rebalance=rebalance)
            dates = result.dates[:-1]
            traded = np.flatnonzero(result.turnover > 0)
            assert len(traded) > 0
            for k in traded:
                assert k > 0 and key(dates[k]) != key(dates[k - 1])


class TestMpcBacktest(unittest.TestCase):
    def test_no_motion_economy_keeps_initial_value(self):
        panel = make_panel(np.full((60, 3), 20.0))
        result = run_mpc_backtest(
            panel, constant_signals(panel), MpcConfig(), 35, 59, estimator_config=EstimatorConfig(covariance_window=20)
        )
        np.testing.assert_allclose(result.values, 26000.0, rtol=0, atol=1e-6)

    def test_huge_trading_aversion_barely_trades(self):
        panel, signals = _synthetic(seed=1)
        result = run_mpc_backtest(panel, signals, MpcConfig(gamma_trade=1e9), 60, 100, estimator_config=ESTIMATORS)
        self.assertLess(result.turnover.max(), 1e-4)

    def test_accounting_identity_and_constraints(self):
        panel, signals = _synthetic(seed=2)
        result = run_mpc_backtest(panel, signals, MpcConfig(), 60, 120, estimator_config=ESTIMATORS)
        growth = np.column_stack([panel.returns.to_numpy(), panel.cash_rate.to_numpy()])[61:121]

        expected = result.values[:-1] * (1 + np.einsum("ki,ki->k", result.weights, growth)) - result.costs
        np.testing.assert_allclose(result.values[1:], expected, rtol=1e-12, atol=1e-9)

        np.testing.assert_allclose(result.weights.sum(axis=1), 1.0, atol=1e-9)
        self.assertTrue(np.all(result.weights[:, :-1] >= 0.01 - 1e-9))
        self.assertTrue(np.all(result.weights[:, -1] >= -1e-9))
        self.assertEqual(len(result.statuses), 60)

    def test_result_ignores_data_after_the_last_valuation_day(self):
        panel, signals = _synthetic(seed=4)
        last = 100
        clean = run_mpc_backtest(panel, signals, MpcConfig(), 60, last, estimator_config=ESTIMATORS)
        dirty = run_mpc_backtest(
            _poisoned_after(panel, last), signals, MpcConfig(), 60, last, estimator_config=ESTIMATORS
        )

        np.testing.assert_array_equal(clean.values, dirty.values)
        np.testing.assert_array_equal(clean.weights, dirty.weights)

    def test_insufficient_history_raises(self):
        panel, signals = _synthetic()
        with self.assertRaises(WarmupError):
            run_mpc_backtest(panel, signals, MpcConfig(), 30, 100, estimator_config=ESTIMATORS)

    def test_infeasible_floor_raises_before_trading(self):
        panel, signals = _synthetic()
        with self.assertRaises(InfeasibleError):
            run_mpc_backtest(panel, signals, MpcConfig(min_weight=0.5), 60, 100, estimator_config=ESTIMATORS)


def test_bankruptcy_raises():
    panel = make_panel(np.full((10, 2), 10.0))

    def ruinous(k, w, value):
        return w, 2.0, None

    with pytest.raises(BankruptcyError):
        _simulate(panel, 0, 9, 26000.0, ruinous, "ruin")


def test_resolve_range_accepts_dates_and_rejects_empty_ranges():
    panel = make_panel(np.full((10, 1), 10.0))
    first, last = resolve_range(panel, "2020-01-02", "2020-01-08")
    assert (first, last) == (1, 5)
    with pytest.raises(AlignmentError):
        resolve_range(panel, 5, 5)
    with pytest.raises(AlignmentError):
        resolve_range(panel, 0, 10)


def test_unconverged_solves_are_logged(mocker, caplog):
    panel, signals = _synthetic(seed=6)

    def stalled(self, estimates, w_current, cost_params):
        return AllocationPlan(
            weights=np.tile(w_current, (2, 1)), objective=0.0, status=SolverStatus.MAX_ITERATIONS
        )

    mocker.patch("regime_mpc.backtest.MpcSolver.solve", stalled)
    with caplog.at_level(logging.WARNING):
        result = run_mpc_backtest(panel, signals, MpcConfig(), 60, 65, estimator_config=ESTIMATORS)
    assert result.statuses == ["MaxIterations"] * 5
    assert "did not converge" in caplog.text


def test_infeasible_solve_stops_the_backtest(mocker):
    panel, signals = _synthetic(seed=6)
    plan = AllocationPlan(weights=np.zeros((2, 4)), objective=float("nan"), status=SolverStatus.INFEASIBLE)
    mocker.patch("regime_mpc.backtest.MpcSolver.solve", return_value=plan)
    with pytest.raises(InfeasibleError):
        run_mpc_backtest(panel, signals, MpcConfig(), 60, 65, estimator_config=ESTIMATORS)


def test_default_start_warms_the_filter_on_prior_rows():
    panel, signals = _synthetic(seed=5)
    warmed = ReturnEstimator(panel, signals, 2, ESTIMATORS).warm_up(0, 90)
    default = run_mpc_backtest(panel, signals, MpcConfig(), 90, 120, estimator_config=ESTIMATORS)
    explicit = run_mpc_backtest(
        panel, signals, MpcConfig(), 90, 120, estimator_config=ESTIMATORS, kalman_state=warmed
    )
    cold = run_mpc_backtest(
        panel,
        signals,
        MpcConfig(),
        90,
        120,
        estimator_config=ESTIMATORS,
        kalman_state=KalmanState.initial(3, ESTIMATORS),
    )
    np.testing.assert_array_equal(default.weights, explicit.weights)
    assert not np.array_equal(default.weights, cold.weights)


def _poisoned_after(panel, day):
    prices = panel.prices.copy()
    prices.iloc[day + 1 :] *= 5.0
    volume = panel.dollar_volume.copy()
    volume.iloc[day + 1 :] = 1.0
    return AlignedPanel.from_prices(prices, volume, panel.cash_rate)


@pytest.mark.slow
def test_long_run_keeps_constraints_and_accounting():
    panel, signals = _synthetic(seed=9, n_days=582)
    first, last = 81, 581
    result = run_mpc_backtest(panel, signals, MpcConfig(), first, last, estimator_config=ESTIMATORS)
    assert len(result.weights) == 500

    np.testing.assert_allclose(result.weights.sum(axis=1), 1.0, rtol=0, atol=1e-8)
    assert np.all(result.weights[:, :-1] >= 0.01 - 1e-9)
    assert np.all(result.weights[:, -1] >= -1e-9)

    growth = np.column_stack([panel.returns.to_numpy(), panel.cash_rate.to_numpy()])[first + 1 : last + 1]
    expected = result.values[:-1] * (1 + np.einsum("ki,ki->k", result.weights, growth)) - result.costs
    assert np.max(np.abs(result.values[1:] / expected - 1.0)) < 1e-9


@pytest.mark.slow
def test_decisions_ignore_poisoned_future_at_random_dates():
    panel, signals = _synthetic(seed=13, n_days=200)
    first, last = 60, 199
    clean = run_mpc_backtest(panel, signals, MpcConfig(), first, last, estimator_config=ESTIMATORS)
    for day in np.random.default_rng(5).choice(np.arange(first, last - 1), size=10, replace=False):
        dirty = run_mpc_backtest(
            _poisoned_after(panel, day), signals, MpcConfig(), first, last, estimator_config=ESTIMATORS
        )
        decided = day - first + 1
        np.testing.assert_array_equal(clean.weights[:decided], dirty.weights[:decided], err_msg=f"day {day}")
