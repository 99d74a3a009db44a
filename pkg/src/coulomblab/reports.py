"""Experiment reports: named result tables plus a JSON-ready manifest.

Numeric cells are written with 17 significant digits, so rerunning an
experiment with the same configuration and seed reproduces the CSV output
byte for byte.  Wall time lives in the manifest, never in the tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


def format_cell(value) -> str:
    """One CSV cell: strings pass through, numbers get 17 significant digits.

    Non-finite values use the same tokens the config format understands, so
    a scan row that reports no level stays round-trippable.
    """
    if isinstance(value, str):
        return value
    x = float(value)
    if math.isnan(x):
        return "NAN"
    if math.isinf(x):
        return "INFINITE" if x > 0 else "-INFINITE"
    return format(x, ".17g")


@dataclass(frozen=True)
class Table:
    name: str
    header: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        object.__setattr__(self, "header", tuple(self.header))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        for row in self.rows:
            if len(row) != len(self.header):
                raise ValidationError(
                    f"table {self.name!r}: row has {len(row)} cells, "
                    f"header has {len(self.header)}"
                )

    def csv_lines(self) -> list[str]:
        lines = [",".join(self.header)]
        lines.extend(",".join(format_cell(c) for c in row) for row in self.rows)
        return lines

    def column(self, name: str) -> list:
        return [row[self.header.index(name)] for row in self.rows]


@dataclass(frozen=True)
class ExperimentReport:
    """Everything one experiment produced, inputs echoed for reproducibility."""

    experiment: str
    config: dict
    version: str
    wall_time: float
    tables: tuple[Table, ...]
    summary: dict

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def manifest(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": jsonable(self.config),
            "version": self.version,
            "wall_time_seconds": self.wall_time,
            "tables": [t.name for t in self.tables],
            "summary": jsonable(self.summary),
        }


def jsonable(value):
    """Recursively convert to JSON-safe values; non-finite floats to tokens."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, float):
        if math.isinf(value):
            return "INFINITE" if value > 0 else "-INFINITE"
        if math.isnan(value):
            return "NAN"
        return value
    if getattr(value, "ndim", 0) > 0:  # numpy array
        return jsonable(list(value))
    if hasattr(value, "item"):  # numpy scalar
        return jsonable(value.item())
    return value
