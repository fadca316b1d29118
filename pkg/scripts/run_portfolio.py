"""
Main entry point for the regime MPC toolkit.

Usage: python scripts/run_portfolio.py <backtest|tune|sweep|benchmark|synth> --config PATH
"""

import os
import sys

# Add the src directory to the Python path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from regime_mpc.cli import main  # noqa: E402


if __name__ == "__main__":
    sys.exit(main())
