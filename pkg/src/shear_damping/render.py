from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

CSV_FORMAT = "%.16e"

# Rates the decay fits are compared against in summary.csv.
REFERENCE_RATES: dict[str, float] = {
    "psi": -2.0,
    "ux": -1.0,
    "uy": -2.0,
    "scattering": -1.0,
    "tnorm": -1.0 / 3.0,
}

SUMMARY_COLUMNS = ("experiment", "quantity", "fitted", "reference")


@dataclass(frozen=True, eq=False)
class Table:
    """Numeric table written as ``<name>.csv``; the first column is the plot abscissa."""

    name: str
    columns: tuple[str, ...]
    rows: np.ndarray
    logscale: bool = False

    @classmethod
    def from_columns(cls, name: str, columns: dict[str, Any], *, logscale: bool = False) -> "Table":
        arrays = [np.asarray(values, dtype=float).ravel() for values in columns.values()]
        sizes = {a.size for a in arrays}
        if len(sizes) > 1:
            raise ValueError(f"table {name} has ragged columns: {sorted(sizes)}")
        rows = np.column_stack(arrays) if arrays and arrays[0].size else np.empty((0, len(arrays)))
        return cls(name=name, columns=tuple(columns), rows=rows, logscale=logscale)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, columns: Sequence[str], rows: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(rows, dtype=float)
    header = ",".join(columns)
    if data.size == 0:
        path.write_text(header + "\n", encoding="utf-8")
        return
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        np.savetxt(handle, np.atleast_2d(data), fmt=CSV_FORMAT, delimiter=",", header=header, comments="")


def write_table(directory: Path, table: Table) -> Path:
    path = directory / f"{table.name}.csv"
    write_csv(path, table.columns, table.rows)
    return path


def write_plot_script(directory: Path, table: Table) -> Path:
    """Gnuplot script that reads only ``<name>.csv`` and renders ``<name>.png`` next to it."""
    lines = [
        'set datafile separator ","',
        "set terminal pngcairo size 900,600",
        f'set output "{table.name}.png"',
        "set key autotitle columnhead",
        f'set xlabel "{table.columns[0]}"',
        f'set title "{table.name}"',
    ]
    if table.logscale:
        lines.append("set logscale xy")
    last = len(table.columns)
    lines.append(f'plot for [i=2:{last}] "{table.name}.csv" using 1:i with linespoints')
    path = directory / f"{table.name}.gp"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _cell(value: float | None) -> str:
    if value is None or not math.isfinite(float(value)):
        return "nan"
    return CSV_FORMAT % float(value)


def write_summary(path: Path, rows: Sequence[tuple[str, str, float | None]]) -> None:
    """``experiment,quantity,fitted,reference`` with the reference rate filled in where one exists."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SUMMARY_COLUMNS)]
    for experiment, quantity, fitted in rows:
        reference = REFERENCE_RATES.get(quantity)
        lines.append(f"{experiment},{quantity},{_cell(fitted)},{_cell(reference)}")
    if len(lines) > 1:
        for quantity, reference in REFERENCE_RATES.items():
            lines.append(f"reference,{quantity},nan,{_cell(reference)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
