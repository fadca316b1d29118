"""
Artifact writer for backtest, tuning, sweep and benchmark results.

All artifacts land in one output directory: CSV tables, JSON documents
that embed the resolved configuration, and plain-text tables.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import pandas as pd

logger = logging.getLogger(__name__)


class ReportWriter:
    """Writes named artifacts into an output directory."""

    def __init__(self, output_dir: str):
        """
        Initialize the writer, creating the output directory if needed.

        Args:
            output_dir: Directory receiving every artifact.
        """
        self.output_dir = Path(output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.output_dir}: {e}")
            raise

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _write(self, name: str, text: str) -> Path:
        target = self.path(name)
        try:
            target.write_text(text, encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to write {target}: {e}")
            raise
        logger.info(f"Wrote {target}")
        return target

    def write_csv(self, name: str, frame: pd.DataFrame, index: bool = True) -> Path:
        return self._write(name, frame.to_csv(index=index, lineterminator="\n"))

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        return self._write(name, json.dumps(payload, indent=2, default=str) + "\n")

    def write_text(self, name: str, text: str) -> Path:
        return self._write(name, text if text.endswith("\n") else text + "\n")
