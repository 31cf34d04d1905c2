"""
Tabulate the runs found below a results directory.
"""

from pathlib import Path

import duckdb

from ..logging import logger
from .results import ResultsIOError, read_summary

REPORT_COLUMNS = (
    "run",
    "algorithm",
    "rounds",
    "final_acc",
    "final_ece",
    "values_sent",
    "savings_percent",
)

_READERS = {"csv": "read_csv_auto", "json": "read_json_auto"}


def _sql_path(path: Path) -> str:
    return str(path).replace("'", "''")


def _has_rows(path: Path) -> bool:
    text = path.read_text(encoding="utf-8").strip()
    if path.suffix == ".csv":
        return len(text.splitlines()) > 1
    return text not in ("", "[]")


def _query_traces(conn, paths: list[Path], fmt: str) -> list[tuple]:
    files = ", ".join(f"'{_sql_path(p)}'" for p in paths)
    query = f"""
    SELECT
        filename,
        MAX(round) AS rounds,
        arg_max(acc, round) AS final_acc,
        arg_max(ece, round) AS final_ece,
        MAX(cum_values_sent) AS values_sent
    FROM {_READERS[fmt]}([{files}], filename = true, union_by_name = true)
    GROUP BY filename
    ORDER BY filename
    """
    return conn.execute(query).fetchall()


def report(results_dir) -> list[dict]:
    """
    One row per run below ``results_dir``: final round, accuracy and ECE of
    the trace tail and the cumulative number of values sent, joined with the
    algorithm and savings from the run's summary.
    """
    root = Path(results_dir)
    if not root.is_dir():
        raise ResultsIOError("Results directory does not exist", root)

    conn = duckdb.connect()
    rows = []
    try:
        for fmt in _READERS:
            traces = sorted(p for p in root.rglob(f"trace.{fmt}") if _has_rows(p))
            if not traces:
                continue
            try:
                records = _query_traces(conn, traces, fmt)
            except duckdb.Error as e:
                raise ResultsIOError(f"Could not query trace files ({e})", root) from e
            for filename, rounds, final_acc, final_ece, values_sent in records:
                run_dir = Path(filename).parent
                summary = read_summary(run_dir)
                communication = summary.get("communication") or {}
                rows.append(
                    {
                        "run": run_dir.relative_to(root).as_posix() or ".",
                        "algorithm": summary.get("algorithm"),
                        "rounds": int(rounds) if rounds is not None else 0,
                        "final_acc": final_acc,
                        "final_ece": final_ece,
                        "values_sent": int(values_sent) if values_sent is not None else 0,
                        "savings_percent": communication.get("savings_percent"),
                    }
                )
    finally:
        conn.close()

    if not rows:
        raise ResultsIOError("No trace files found", root)
    logger.debug(f"Collected {len(rows)} run(s) below {root}")
    return sorted(rows, key=lambda row: row["run"])


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_report(rows: list[dict]) -> str:
    """Render report rows as an aligned plain-text table."""
    table = [list(REPORT_COLUMNS)] + [[_cell(row[c]) for c in REPORT_COLUMNS] for row in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(REPORT_COLUMNS))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
        for line in table
    )
