"""Delimited text tables with a metadata header block.

Format: '#'-prefixed header lines ('# key = value', then '# columns:' and
'# units:'), followed by space-delimited rows of numbers serialized with 12
significant digits. Emission is deterministic, so identical data yields
byte-identical files, and every emitted table reparses losslessly.
"""

from dataclasses import dataclass, field

import numpy as np

FLOAT_FMT = "{:.12g}"


class TableError(ValueError):
    """Raised for malformed table input."""


def format_number(x) -> str:
    return FLOAT_FMT.format(float(x))


@dataclass
class DataTable:
    """Rectangular numeric table with mandatory per-column units."""

    columns: list
    units: list
    rows: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if len(self.columns) != len(self.units):
            raise TableError("columns and units must have the same length")
        if self.rows.size and self.rows.shape[1] != len(self.columns):
            raise TableError(
                f"rows have {self.rows.shape[1]} fields for {len(self.columns)} columns"
            )

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise TableError(f"no such column: {name!r}") from None
        return self.rows[:, idx]

    def emit(self) -> str:
        lines = []
        for key, value in self.metadata.items():
            lines.append(f"# {key} = {value}")
        lines.append("# columns: " + " ".join(self.columns))
        lines.append("# units: " + " ".join(self.units))
        for row in self.rows:
            lines.append(" ".join(format_number(v) for v in row))
        return "\n".join(lines) + "\n"


def parse_table(text: str) -> DataTable:
    """Parse the emitted format back into a DataTable."""
    metadata = {}
    columns = units = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("columns:"):
                columns = body[len("columns:"):].split()
            elif body.startswith("units:"):
                units = body[len("units:"):].split()
            elif "=" in body:
                key, _, value = body.partition("=")
                metadata[key.strip()] = value.strip()
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise TableError(f"line {lineno}: non-numeric field ({exc})") from None
    if columns is None:
        raise TableError("missing '# columns:' header line")
    if units is None:
        raise TableError("missing '# units:' header line (units are mandatory)")
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise TableError(f"ragged rows: field counts {sorted(widths)}")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(columns)))
    return DataTable(columns=columns, units=units, rows=data, metadata=metadata)
