"""
Writing experiment results to disk.

A run directory holds::

    trace.csv | trace.json               one row per evaluated round
    summary.json                         final metrics, traffic and provenance
    reliability_<set>.csv | .json        reliability bins plus an ECE footer row
    config.toml                          the resolved configuration

File contents depend only on the bundle, so identical configurations and
seeds produce byte-identical files.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..core import ArgumentError, CompressedBFLError
from ..logging import logger
from ..metrics import ReliabilityReport
from .config import ExperimentConfig

TRACE_COLUMNS = ("round", "acc", "ece", "cum_values_sent")
RELIABILITY_COLUMNS = ("lower", "upper", "count", "accuracy", "confidence")
FORMATS = ("csv", "json")


class ResultsIOError(CompressedBFLError, OSError):
    """Error for results that cannot be written or read"""

    def __init__(self, message: str, path: Path):
        super().__init__(f"{message}: {path}")
        self.path = path


@dataclass
class ResultsBundle:
    """Everything a run produces; :func:`emit_results` turns it into files."""

    config: ExperimentConfig
    trace: list[dict]
    summary: dict
    reliability: dict[str, ReliabilityReport] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def provenance(self) -> dict:
        return self.summary["provenance"]


def _csv_text(rows: list[dict], columns) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise ResultsIOError("Could not write results file", path) from e
    logger.debug(f"Wrote {path}")
    return path


def emit_results(bundle: ResultsBundle, directory, fmt: str = "csv") -> list[Path]:
    """
    Write ``bundle`` into ``directory``.

    Parameters
    ----------
    bundle : ResultsBundle
        Results of one run.
    directory : str or Path
        Run directory, created when missing.
    fmt : str
        ``csv`` or ``json`` for the trace and reliability tables;
        the summary is always JSON.

    Returns
    -------
    list of Path
        The files written, in writing order.
    """
    if fmt not in FORMATS:
        raise ArgumentError(f"Unknown results format {fmt!r}, expected one of {FORMATS}")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Could not create {directory}: {e}")
        raise ResultsIOError("Could not create results directory", directory) from e

    def table(rows, columns) -> str:
        return _csv_text(rows, columns) if fmt == "csv" else _json_text(rows)

    written = [
        _write(directory / f"trace.{fmt}", table(bundle.trace, TRACE_COLUMNS)),
        _write(directory / "summary.json", _json_text(bundle.summary)),
    ]
    for name in sorted(bundle.reliability):
        rows = bundle.reliability[name].to_rows()
        written.append(
            _write(directory / f"reliability_{name}.{fmt}", table(rows, RELIABILITY_COLUMNS))
        )
    written.append(_write(directory / "config.toml", bundle.config.to_toml()))
    logger.info(f"Wrote {len(written)} result files to {directory}")
    return written


def read_summary(directory) -> dict:
    path = Path(directory) / "summary.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ResultsIOError("Could not read summary", path) from e
