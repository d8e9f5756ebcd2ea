"""
Report Export Utilities
Bit-stable JSON/CSV output for check reports, convergence tables and solutions
"""
import logging
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from models.errors import ReportExportError
from models.reports import CheckReport, ConvergenceTable

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["check_id", "reference", "lhs", "rhs", "margin", "pass", "seed"]
FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    """17 significant digits; non-finite values as JSON-style literals"""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, FLOAT_FORMAT)


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return _quote(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_quote(str(k))}: {_encode(obj[k], indent, level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise ReportExportError(f"cannot serialize {type(obj).__name__}")


def _quote(text: str) -> str:
    escaped = (text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
               .replace("\r", "\\r").replace("\t", "\\t"))
    return f'"{escaped}"'


def to_json(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON text: sorted keys, fixed float formatting"""
    return _encode(obj, indent, 0) + "\n"


def _write(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        raise ReportExportError(f"cannot write {path}: {e}") from e


def reports_frame(reports: Iterable[CheckReport]) -> pd.DataFrame:
    """Tabular view of reports in the CSV column order"""
    rows = [{
        "check_id": r.check_id,
        "reference": r.reference,
        "lhs": format_float(r.lhs),
        "rhs": format_float(r.rhs),
        "margin": format_float(r.margin),
        "pass": "true" if r.passed else "false",
        "seed": "" if r.seed is None else str(r.seed),
    } for r in reports]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_report(reports: Iterable[CheckReport], fmt: str, path) -> None:
    """Write reports sorted by check_id as JSON (array of objects) or CSV"""
    reports = sorted(reports, key=lambda r: r.check_id)
    if fmt == "json":
        _write(path, to_json([r.to_dict() for r in reports]))
    elif fmt == "csv":
        _write(path, reports_frame(reports).to_csv(index=False, lineterminator="\n"))
    else:
        raise ReportExportError(f"unknown report format '{fmt}', expected json or csv")
    logger.info("wrote %d reports to %s", len(reports), path)


def emit_json(obj: Any, path) -> None:
    _write(path, to_json(obj))


def emit_table(table: ConvergenceTable, path) -> None:
    """Convergence table as CSV, with the fitted rate and notes as comment lines"""
    frame = table.to_frame()
    body = frame.to_csv(index=False, lineterminator="\n", float_format="%.17g")
    rate = "undefined" if table.fitted_rate is None else format_float(table.fitted_rate)
    header = f"# fitted_rate={rate}\n"
    if table.notes:
        header += f"# notes={table.notes}\n"
    _write(path, header + body)


def plot_convergence(table: ConvergenceTable, path) -> None:
    """Log-log plot of a convergence table"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = np.asarray(table.values)
    errors = np.asarray(table.errors)
    positive = errors > 0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(values[positive], errors[positive], "o-", label="error")
    if table.fitted_rate is not None:
        ref = errors[positive][0] * (values[positive] / values[positive][0]) ** table.fitted_rate
        ax.loglog(values[positive], ref, "--", label=f"rate {table.fitted_rate:.3f}")
    ax.set_xlabel(table.parameter)
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    try:
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as e:
        raise ReportExportError(f"cannot write plot {path}: {e}") from e
    finally:
        plt.close(fig)
