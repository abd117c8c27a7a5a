"""Reading and validating the solver CSV schema.

Only the documented result-CSV layout is consumed: a mandatory header row
followed by one row per solver-grid cell.  Errors carry the filename and,
for row-level problems, the 1-based line number.
"""

from __future__ import annotations

import csv


class CsvError(Exception):
    pass


# columns that must parse as numbers when a figure uses them
NUMERIC = ("dt", "N", "iterations_mean", "wall_time_mean", "inner_iter_mean", "converged_fraction")


def read_rows(path: str, needed: list[str]) -> list[dict]:
    """Load the CSV and check every needed column exists and parses.

    Numeric columns among needed are converted to float in place.
    """
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise CsvError(f"{path}: {e.strerror}") from e
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CsvError(f"{path}: empty file, expected a header row")
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise CsvError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise CsvError(f"{path}: line {line}: wrong number of fields")
            for col in needed:
                if col in NUMERIC:
                    if row[col] == "":
                        # empty cell: no realization produced data; becomes
                        # a gap rather than an error
                        row[col] = float("nan")
                        continue
                    try:
                        row[col] = float(row[col])
                    except ValueError:
                        raise CsvError(
                            f"{path}: line {line}: column {col!r}: "
                            f"not a number: {row[col]!r}"
                        ) from None
            rows.append(row)
    if not rows:
        raise CsvError(f"{path}: no data rows")
    return rows
