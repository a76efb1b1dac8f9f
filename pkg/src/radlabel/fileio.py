"""Minimal TSV read/write helpers shared by the pipeline stages.

Files carry optional ``#``-prefixed header lines (used to embed config
hashes and seeds), then a column-name row, then data rows. Readers skip
comments and blanks; all values come back as strings.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from radlabel.errors import DataError


def write_tsv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    header_lines: Sequence[str] = (),
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
            fh.write("\t".join(str(cell) for cell in row) + "\n")


def read_tsv(path: str | Path, expected_columns: Sequence[str] | None = None) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() and not ln.startswith("#")]
    if not body:
        raise DataError(f"{path}: no rows")
    _, header = body[0]
    columns = header.split("\t")
    if expected_columns is not None and list(columns) != list(expected_columns):
        raise DataError(
            f"{path}: expected columns {list(expected_columns)}, found {columns}"
        )
    rows = []
    for lineno, line in body[1:]:
        cells = line.split("\t")
        if len(cells) != len(columns):
            raise DataError(f"{path}:{lineno}: {len(cells)} cells, expected {len(columns)}")
        rows.append(dict(zip(columns, cells)))
    return rows
