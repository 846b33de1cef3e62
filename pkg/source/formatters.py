#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Output formatters for latentprobit.
CSV tables (results, fit traces, test scores, bound trials), a JSON summary,
a colored console table, and the AUC-versus-labeled-count SVG plot.

Every writer is deterministic: floats are written with repr and the SVG
carries no timestamp and a fixed id salt, so identical tables give
byte-identical files.
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bound import BoundReport  # noqa: E402
from .em import FitTrace  # noqa: E402
from .exceptions import ValidationError  # noqa: E402
from .experiments import ResultTable  # noqa: E402
from .logger import Colors, get_logger  # noqa: E402
from .utils import ensure_directory, sanitize_filename  # noqa: E402

PLOT_FILE = "auc_vs_labeled.svg"
RESULTS_FILE = "results.csv"
SVG_HASH_SALT = "latentprobit"


def format_cell(value: Any) -> str:
    """Text for one CSV cell: repr for floats, lowercase booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


class OutputFormatter:
    """Base class for output formatters."""

    def format(self, header: Sequence[str], rows: Sequence[Sequence[Any]], metadata: Dict = None) -> str:
        """
        Format a table for output.

        Args:
            header: Column names
            rows: Table rows
            metadata: Optional key/value pairs describing the run

        Returns:
            Formatted string
        """
        raise NotImplementedError


class CSVFormatter(OutputFormatter):
    """Comma-delimited table with a header row, '.' decimals and '\\n' line ends."""

    def format(self, header: Sequence[str], rows: Sequence[Sequence[Any]], metadata: Dict = None) -> str:
        output = io.StringIO()
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
        return output.getvalue()


class JSONFormatter(OutputFormatter):
    """Rows as a list of objects; non-finite floats become null."""

    def format(self, header: Sequence[str], rows: Sequence[Sequence[Any]], metadata: Dict = None) -> str:
        records = [{key: _json_value(v) for key, v in zip(header, row)} for row in rows]
        output = {"rows": records}
        if metadata:
            output["metadata"] = {key: _json_value(v) for key, v in metadata.items()}
        return json.dumps(output, indent=2, sort_keys=False, allow_nan=False)


def _json_value(value: Any) -> Any:
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ColoredConsoleFormatter(OutputFormatter):
    """Aligned text table for a terminal."""

    def __init__(self, use_color: bool = True):
        self.use_color = use_color

    def format(self, header: Sequence[str], rows: Sequence[Sequence[Any]], metadata: Dict = None) -> str:
        cells = [[self._short(v) for v in row] for row in rows]
        widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(header)]
        parts = []
        if metadata:
            for key, value in metadata.items():
                parts.append(f"{self._colorize(f'{key}:', Colors.BRIGHT_YELLOW)} {value}")
            parts.append("")
        parts.append(self._colorize("  ".join(h.ljust(w) for h, w in zip(header, widths)), Colors.CYAN, bold=True))
        for row in cells:
            parts.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(parts)

    @staticmethod
    def _short(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.4f}" if math.isfinite(value) else str(value)
        return format_cell(value)

    def _colorize(self, text: str, color: str, bold: bool = False) -> str:
        if not self.use_color:
            return text
        prefix = Colors.BOLD + color if bold else color
        return f"{prefix}{text}{Colors.RESET}"


def get_formatter(format_type: str, **kwargs) -> OutputFormatter:
    """
    Get formatter instance by type.

    Args:
        format_type: csv, json or console
        **kwargs: Additional arguments for formatter

    Raises:
        ValidationError: If format type is unknown
    """
    formatters = {
        'csv': CSVFormatter,
        'json': JSONFormatter,
        'console': ColoredConsoleFormatter,
    }
    formatter_class = formatters.get(format_type.lower())
    if not formatter_class:
        raise ValidationError(f"Unknown format type: {format_type}. "
                              f"Available: {', '.join(formatters.keys())}", field="format")
    return formatter_class(**kwargs)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """
    Write a CSV table.

    Raises:
        ValidationError: If the file cannot be written
    """
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(CSVFormatter().format(header, rows))
    except OSError as e:
        raise ValidationError(f"cannot write {path}: {e}", field="out")
    return path


def render_plot(series: Dict[str, List[Tuple[int, float]]], title: str = "Test AUC") -> Optional[bytes]:
    """
    SVG line plot of mean AUC against labeled count, one line per method.
    Returns None when there is nothing finite to draw.
    """
    drawable = {name: [(x, y) for x, y in points if math.isfinite(y)] for name, points in series.items()}
    drawable = {name: points for name, points in drawable.items() if points}
    if not drawable:
        return None

    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            for name, points in sorted(drawable.items()):
                xs, ys = zip(*sorted(points))
                ax.plot(xs, ys, marker="o", label=name)
            ax.set_xlabel("labeled examples per task")
            ax.set_ylabel("mean AUC")
            ax.set_title(title)
            ax.grid(True, alpha=0.3)
            ax.legend(loc="lower right", fontsize="small")
            fig.tight_layout()
            buffer = io.BytesIO()
            fig.savefig(buffer, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buffer.getvalue()


def emit_outputs(table: ResultTable, out_dir, traces: bool = True, scores: bool = False, plot: bool = True) -> List[Path]:
    """
    Write results.csv, per-fit trace CSVs, optional score CSVs and the plot.

    An empty table gives a header-only results.csv and no plot.

    Args:
        out_dir: Output directory (created if needed)

    Returns:
        Paths written, in writing order

    Raises:
        ValidationError: If the directory cannot be created or written
    """
    logger = get_logger()
    out = ensure_directory(out_dir)

    written = [write_csv(out / RESULTS_FILE, ResultTable.COLUMNS, table.to_rows())]
    if traces:
        for label in sorted(table.traces):
            written.append(write_csv(ensure_directory(out / "traces") / f"{sanitize_filename(label)}.csv",
                                     FitTrace.header(), table.traces[label].to_rows()))
    if scores:
        for label in sorted(table.scores):
            written.append(write_csv(ensure_directory(out / "scores") / f"{sanitize_filename(label)}.csv",
                                     ["task", "example", "score", "label"], table.scores[label]))
    if plot and table.rows:
        svg = render_plot(table.series())
        if svg is not None:
            path = out / PLOT_FILE
            path.write_bytes(svg)
            written.append(path)
    logger.info(f"Wrote {len(written)} file(s) to {out}")
    return written


def emit_bound_outputs(reports: Sequence[BoundReport], summary, out_dir) -> List[Path]:
    """Per-trial CSV and a one-line summary file for the bound check."""
    out = ensure_directory(out_dir)
    trials = write_csv(out / "bound_trials.csv", BoundReport.CSV_FIELDS, [rep.to_row() for rep in reports])
    summary_path = out / "bound_summary.txt"
    try:
        summary_path.write_text(summary.summary_line() + "\n", encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"cannot write {summary_path}: {e}", field="out")
    return [trials, summary_path]
