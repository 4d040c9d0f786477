from pathlib import Path

import numpy as np
import pytest

from shear_damping.render import (
    REFERENCE_RATES,
    Table,
    write_csv,
    write_json,
    write_plot_script,
    write_summary,
    write_table,
)


def test_table_rejects_ragged_columns():
    with pytest.raises(ValueError, match="ragged"):
        Table.from_columns("bad", {"t": [0.0, 1.0], "psi": [1.0]})


def test_table_column_lookup():
    table = Table.from_columns("decay", {"t": [0.0, 1.0], "psi": [2.0, 3.0]})
    assert table.column("psi").tolist() == [2.0, 3.0]
    assert Table.from_columns("empty", {"t": []}).column("t").size == 0
    with pytest.raises(ValueError):
        table.column("ux")


def test_empty_table_writes_header_only(tmp_path: Path):
    table = Table.from_columns("empty", {"t": [], "psi": []})
    path = write_table(tmp_path, table)
    assert path.read_text(encoding="utf-8") == "t,psi\n"


def test_csv_uses_full_precision(tmp_path: Path):
    path = tmp_path / "decay.csv"
    write_csv(path, ("t", "psi"), np.array([[1.0, 0.1], [2.0, 1.0 / 3.0]]))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,psi"
    assert lines[2] == "2.0000000000000000e+00,3.3333333333333331e-01"


def test_plot_script_reads_only_its_csv(tmp_path: Path):
    table = Table.from_columns("decay_k1", {"t": [1.0, 2.0], "psi": [1.0, 0.5], "ux": [1.0, 0.7]}, logscale=True)
    script = write_plot_script(tmp_path, table).read_text(encoding="utf-8")
    assert 'set output "decay_k1.png"' in script
    assert "set logscale xy" in script
    assert 'plot for [i=2:3] "decay_k1.csv" using 1:i with linespoints' in script
    assert script.count(".csv") == 1


def test_summary_without_fits_is_header_only(tmp_path: Path):
    path = tmp_path / "summary.csv"
    write_summary(path, [])
    assert path.read_text(encoding="utf-8") == "experiment,quantity,fitted,reference\n"


def test_summary_fills_reference_rates(tmp_path: Path):
    path = tmp_path / "summary.csv"
    write_summary(path, [("orr:k1", "psi", -2.5), ("growth", "gevrey_growth", None)])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[1] == "orr:k1,psi,-2.5000000000000000e+00,-2.0000000000000000e+00"
    assert lines[2] == "growth,gevrey_growth,nan,nan"
    assert len(lines) == 3 + len(REFERENCE_RATES)
    assert lines[-1].startswith("reference,tnorm,nan,")


def test_write_json_is_sorted_with_trailing_newline(tmp_path: Path):
    path = tmp_path / "nested" / "result.json"
    write_json(path, {"b": 1, "a": [1, 2]})
    text = path.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
