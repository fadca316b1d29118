"""
Command-line interface.

Commands: backtest, tune, sweep, benchmark and synth. Exit codes are 0 on
success, 1 for input errors and 2 for numerical failures.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .backtest import resolve_range, run_buy_and_hold, run_equal_weight, run_mpc_backtest
from .config import RunConfig, apply_overrides, load_config
from .errors import EXIT_OK, ConfigError, exit_code
from .evaluation import comparison_table, compute_report, format_table, gamma_sigma_sweep
from .market_data import AlignedPanel, align, load_cash_csv, load_price_csv
from .models import BUY_AND_HOLD, EQUAL_WEIGHT
from .regime_signals import SignalPanel, generate_synthetic, load_signals, write_fixture
from .reporting import ReportWriter
from .tuning import make_pgts, tune

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"


def load_inputs(config: RunConfig) -> Tuple[AlignedPanel, SignalPanel]:
    """Load or simulate the market, then drop excluded assets."""
    if config.data is not None:
        series = [load_price_csv(path) for path in config.data.prices]
        panel = align(series, load_cash_csv(config.data.cash_rate), config.data.max_ffill)
        signals = load_signals(config.data.signals, panel)
    else:
        panel, signals, _ = generate_synthetic(config.synthetic, config.seed)
    if config.exclude:
        panel = panel.exclude(config.exclude)
        signals = signals.select(panel.assets)
        logger.info(f"Excluded {config.exclude}; {panel.n_assets} risky assets remain")
    return panel, signals


def _echo(config: RunConfig) -> Dict:
    return config.model_dump(mode="json")


def _test_range(panel: AlignedPanel, config: RunConfig) -> Tuple[int, int]:
    return resolve_range(panel, config.periods.test.start, config.periods.test.end)


def _benchmarks(panel: AlignedPanel, config: RunConfig, first: int, last: int):
    value = config.backtest.initial_value
    return {
        BUY_AND_HOLD: run_buy_and_hold(panel, first, last, value),
        EQUAL_WEIGHT: run_equal_weight(
            panel,
            first,
            last,
            value,
            rebalance=config.backtest.rebalance,
            cost_config=config.costs,
            ema_window=config.estimators.ema_window,
        ),
    }


def _run_mpc(panel: AlignedPanel, signals: SignalPanel, config: RunConfig, first: int, last: int):
    return run_mpc_backtest(
        panel,
        signals,
        config.mpc,
        first,
        last,
        config.backtest.initial_value,
        config.estimators,
        config.costs,
    )


def cmd_backtest(config: RunConfig) -> int:
    panel, signals = load_inputs(config)
    first, last = _test_range(panel, config)
    result = _run_mpc(panel, signals, config, first, last)
    report = compute_report(result, _benchmarks(panel, config, first, last))

    writer = ReportWriter(config.output_dir)
    writer.write_csv("backtest.csv", result.to_frame())
    writer.write_csv("monthly_weights.csv", result.monthly_weights())
    writer.write_json(
        "backtest.json",
        {"summary": result.summary(), "report": report.model_dump(), "config": _echo(config)},
    )
    writer.write_text("report.txt", format_table(comparison_table([report])))
    return EXIT_OK


def cmd_tune(config: RunConfig) -> int:
    if config.periods.tune is None:
        raise ConfigError("the tune command needs periods.tune")
    panel, signals = load_inputs(config)
    first, last = resolve_range(panel, config.periods.tune.start, config.periods.tune.end)
    split = make_pgts(panel.dates[first : last + 1], config.tuning.n_folds, config.tuning.gap)
    result = tune(panel, signals, config.tuning.search_space(), split, config, config.tuning.n_jobs)

    writer = ReportWriter(config.output_dir)
    writer.write_csv("trials.csv", result.trial_frame(), index=False)
    writer.write_json(
        "tuning.json",
        {
            "best": {
                "trial": result.best_trial,
                "gamma_sigma": result.gamma_sigma,
                "gamma_trade": result.gamma_trade,
                "sortino": result.trials[result.best_trial].sortino,
            },
            "folds": [
                {
                    "train": [str(f.train[0].date()), str(f.train[-1].date())],
                    "validation": [str(f.validation[0].date()), str(f.validation[-1].date())],
                }
                for f in split.folds
            ],
            "failed_trials": {t.trial: t.error for t in result.trials if t.error},
            "config": _echo(config),
        },
    )
    return EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    panel, signals = load_inputs(config)
    first, last = _test_range(panel, config)
    table = gamma_sigma_sweep(
        panel,
        signals,
        config.mpc,
        config.sweep.gamma_sigma_grid,
        first,
        last,
        config.backtest.initial_value,
        config.estimators,
        config.costs,
        n_jobs=config.sweep.n_jobs,
    )
    writer = ReportWriter(config.output_dir)
    writer.write_csv("sweep.csv", table, index=False)
    writer.write_json("sweep.json", {"rows": table.to_dict(orient="records"), "config": _echo(config)})
    return EXIT_OK


def cmd_benchmark(config: RunConfig) -> int:
    panel, signals = load_inputs(config)
    first, last = _test_range(panel, config)
    results = {"MPC": _run_mpc(panel, signals, config, first, last)}
    results.update(_benchmarks(panel, config, first, last))
    reports = [
        compute_report(result, {k: v for k, v in results.items() if k != name})
        for name, result in results.items()
    ]
    table = comparison_table(reports)

    writer = ReportWriter(config.output_dir)
    writer.write_csv("benchmark.csv", table)
    writer.write_text("benchmark.txt", format_table(table))
    writer.write_json(
        "benchmark.json",
        {
            "assets": panel.assets,
            "excluded": config.exclude,
            "reports": [r.model_dump() for r in reports],
            "summaries": [r.summary() for r in results.values()],
            "config": _echo(config),
        },
    )
    return EXIT_OK


def cmd_synth(config: RunConfig) -> int:
    if config.synthetic is None:
        raise ConfigError("the synth command needs a 'synthetic' block")
    panel, signals, regimes = generate_synthetic(config.synthetic, config.seed)
    write_fixture(config.output_dir, panel, signals, regimes)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "backtest": cmd_backtest,
    "tune": cmd_tune,
    "sweep": cmd_sweep,
    "benchmark": cmd_benchmark,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regime-mpc", description="Regime-signal MPC portfolio backtests"
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default="config/config.yml", help="YAML configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--gamma-sigma", type=float, dest="gamma_sigma")
    parser.add_argument("--gamma-trade", type=float, dest="gamma_trade")
    parser.add_argument("--horizon", type=int)
    parser.add_argument(
        "--exclude",
        type=lambda text: [item.strip() for item in text.split(",") if item.strip()],
        help="comma-separated asset labels to drop",
    )
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--n-jobs", type=int, dest="n_jobs")
    parser.add_argument("--verbose", action="store_true", default=False)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)

    load_dotenv()

    try:
        config = load_config(args.config)
        config = apply_overrides(
            config,
            seed=args.seed,
            trials=args.trials,
            gamma_sigma=args.gamma_sigma,
            gamma_trade=args.gamma_trade,
            horizon=args.horizon,
            exclude=args.exclude,
            output_dir=args.output_dir,
            n_jobs=args.n_jobs,
        )
        config.check_paths()
        logger.info(f"Running {args.command} with output in {config.output_dir}")
        return COMMANDS[args.command](config)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        logger.debug("Traceback", exc_info=True)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
