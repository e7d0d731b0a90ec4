"""CSV loading with upfront schema checks."""

from __future__ import annotations

import csv

import numpy as np

from .errors import EmptyInputError, SchemaError


def read_table(path) -> dict[str, list[str]]:
    """Read a CSV into column lists; raises on empty data."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise EmptyInputError(f"{path}: no header row")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return {name: [row[name] for row in rows] for name in reader.fieldnames}


def check_columns(tables: dict[str, dict[str, list[str]]], required: list[str]) -> None:
    """Verify every table carries the required columns; reports all misses
    in one error."""
    missing: dict[str, list[str]] = {}
    for path, table in tables.items():
        absent = [c for c in required if c not in table]
        if absent:
            missing[path] = absent
    if missing:
        raise SchemaError(missing)


def numeric_column(table: dict[str, list[str]], name: str) -> np.ndarray:
    return np.array([float(v) for v in table[name]], dtype=float)
