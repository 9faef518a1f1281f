"""CSV parsing against the documented output schemas.

This package never touches the producing library's internals: the CSV
files are the component boundary.  Columns are floats unless every
token in the column is an integer literal.  The check mode re-emits a
parsed table with the same canonical formatting the producer uses
(shortest round-trip repr for floats, plain digits for integers), so a
re-emission of a well-formed input is byte-identical.
"""

from __future__ import annotations

import re

import numpy as np

__all__ = ["SchemaError", "Table", "read_table"]

_INT_RE = re.compile(r"^-?\d+$")


class SchemaError(ValueError):
    """The input file does not match the expected column schema."""


class Table:
    """Ordered named columns parsed from a CSV file."""

    def __init__(self, names: list[str], columns: dict[str, np.ndarray]):
        self.names = names
        self.columns = columns

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise SchemaError(f"missing column {name!r}; file has {self.names}")
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        return self.columns[self.names[0]].size

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise SchemaError(f"missing column(s) {missing}; file has {self.names}")

    def matching(self, pattern: str) -> list[str]:
        rx = re.compile(pattern)
        return [n for n in self.names if rx.fullmatch(n)]

    def emit(self) -> str:
        """Canonical re-emission used by the check mode."""
        lines = [",".join(self.names)]
        cols = [self.columns[n] for n in self.names]
        for i in range(self.n_rows):
            lines.append(",".join(_fmt(col[i]) for col in cols))
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return repr(float(value))


def read_table(path: str) -> Table:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise SchemaError(f"{path}: empty file")
        names = header.split(",")
        raw: list[list[str]] = [[] for _ in names]
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            tokens = line.split(",")
            if len(tokens) != len(names):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(names)} fields, got {len(tokens)}"
                )
            for slot, token in zip(raw, tokens):
                slot.append(token)
    columns: dict[str, np.ndarray] = {}
    for name, tokens in zip(names, raw):
        if tokens and all(_INT_RE.match(t) for t in tokens):
            columns[name] = np.array([int(t) for t in tokens], dtype=np.int64)
        else:
            try:
                columns[name] = np.array([float(t) for t in tokens], dtype=float)
            except ValueError as exc:
                raise SchemaError(f"{path}: column {name!r} is not numeric: {exc}") from exc
    if not columns:
        raise SchemaError(f"{path}: no columns")
    return Table(names, columns)
