"""In-memory tabular model shared by every other module.

A cell is a plain Python value: ``None`` for empty, ``str`` for text, and
``int`` / ``float`` / ``bool`` / ``datetime.date`` / ``datetime.datetime`` /
``tuple`` only once a schema coercion or a transform action has explicitly
produced one. Freshly ingested data is never anything other than
empty-or-text. Lists of values are tuples of scalars, one level deep.

Tables are immutable. Operations return new tables that share unchanged
column tuples with their parent, which keeps copies cheap and makes tables
safe to hand across threads. Each row carries a stable integer label
assigned at ingest; rows can be dropped but labels are never renumbered,
so a label still identifies the same source row after filtering.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

Cell = Union[None, str, float, int, bool, dt.date, dt.datetime, tuple]

#: Scalar types a cell (or list element) may hold.
SCALAR_TYPES = (str, float, int, bool, dt.date, dt.datetime)


class TabularError(Exception):
    """Base class for table construction and lookup failures."""


class UnknownColumnError(TabularError):
    """A column was requested that the table does not have."""

    def __init__(self, name: str, available: Sequence[str]):
        self.name = name
        self.available = list(available)
        shown = ", ".join(repr(c) for c in self.available) or "(no columns)"
        super().__init__(f"unknown column {name!r}; table has: {shown}")


def is_empty(cell: Cell) -> bool:
    return cell is None


def is_blank(cell: Cell) -> bool:
    """True for empty cells and for text that trims to nothing."""
    if cell is None:
        return True
    return isinstance(cell, str) and cell.strip() == ""


def quote_text(text: str) -> str:
    """Wrap text in single quotes, doubling any internal quote."""
    return "'" + text.replace("'", "''") + "'"


def cell_text(cell: Cell) -> str:
    """Canonical text for a non-empty cell.

    This is the single stringification rule used everywhere a value has to
    become text: joins, comparisons against category terms, and file
    export. Booleans render ``true``/``false``, dates render ISO-8601,
    floats use ``repr`` (shortest round-trip), and lists render in the
    same bracketed form transform scripts use, with ``~`` for empty
    elements.
    """
    if cell is None:
        raise ValueError("empty cells have no canonical text")
    # bool before int: bool is an int subclass.
    if isinstance(cell, bool):
        return "true" if cell else "false"
    if isinstance(cell, str):
        return cell
    if isinstance(cell, int):
        return str(cell)
    if isinstance(cell, float):
        return repr(cell)
    # datetime before date: datetime is a date subclass.
    if isinstance(cell, dt.datetime):
        return cell.isoformat()
    if isinstance(cell, dt.date):
        return cell.isoformat()
    if isinstance(cell, tuple):
        parts = []
        for element in cell:
            if element is None:
                parts.append("~")
            elif isinstance(element, bool):
                parts.append("True" if element else "False")
            elif isinstance(element, int):
                parts.append(str(element))
            else:
                parts.append(quote_text(cell_text(element)))
        return "[" + ", ".join(parts) + "]"
    raise TypeError(f"not a cell value: {type(cell).__name__}")


def check_cell(cell: Cell) -> None:
    """Raise TypeError if a value is not a legal cell."""
    if cell is None:
        return
    if isinstance(cell, tuple):
        for element in cell:
            if isinstance(element, tuple):
                raise TypeError("list cells cannot nest")
            if element is not None and not isinstance(element, SCALAR_TYPES):
                raise TypeError(
                    f"list cells hold scalars only, got {type(element).__name__}"
                )
        return
    if not isinstance(cell, SCALAR_TYPES):
        raise TypeError(f"not a cell value: {type(cell).__name__}")


@dataclass(frozen=True)
class Column:
    """A named, ordered sequence of cells."""

    name: str
    cells: tuple

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise TabularError("column names must be non-empty strings")
        if not isinstance(self.cells, tuple):
            object.__setattr__(self, "cells", tuple(self.cells))

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class Table:
    """An immutable table: ordered named columns plus stable row labels.

    ``row_labels`` are non-negative, strictly ascending integers assigned
    from ingest order. Operations that drop rows keep the surviving
    labels untouched.
    """

    columns: tuple[Column, ...]
    row_labels: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.columns, tuple):
            object.__setattr__(self, "columns", tuple(self.columns))
        if not isinstance(self.row_labels, tuple):
            object.__setattr__(self, "row_labels", tuple(self.row_labels))
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise TabularError(f"duplicate column name {col.name!r}")
            seen.add(col.name)
        n = len(self.row_labels)
        for col in self.columns:
            if len(col.cells) != n:
                raise TabularError(
                    f"column {col.name!r} has {len(col.cells)} cells "
                    f"but the table has {n} rows"
                )
        previous = -1
        for label in self.row_labels:
            if not isinstance(label, int) or isinstance(label, bool) or label < 0:
                raise TabularError(f"row labels must be non-negative ints, got {label!r}")
            if label <= previous:
                raise TabularError("row labels must be strictly ascending")
            previous = label

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def build(
        cls,
        pairs: Iterable[tuple[str, Iterable[Cell]]],
        row_labels: Sequence[int] | None = None,
    ) -> "Table":
        """Build a table from (name, cells) pairs; labels default to 0..n-1."""
        columns = tuple(Column(name, tuple(cells)) for name, cells in pairs)
        if row_labels is None:
            n = len(columns[0].cells) if columns else 0
            row_labels = tuple(range(n))
        return cls(columns, tuple(row_labels))

    @classmethod
    def from_rows(
        cls, names: Sequence[str], rows: Iterable[Sequence[Cell]]
    ) -> "Table":
        rows = list(rows)
        for i, row in enumerate(rows):
            if len(row) != len(names):
                raise TabularError(
                    f"row {i} has {len(row)} cells, expected {len(names)}"
                )
        cells_by_col = list(zip(*rows)) if rows else [()] * len(names)
        return cls.build(zip(names, cells_by_col))

    # ------------------------------------------------------------------
    # inspection

    @property
    def row_count(self) -> int:
        return len(self.row_labels)

    @property
    def column_names(self) -> list[str]:
        return [col.name for col in self.columns]

    def has_column(self, name: str) -> bool:
        return any(col.name == name for col in self.columns)

    def get_column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise UnknownColumnError(name, self.column_names)

    def cells(self, name: str) -> tuple:
        return self.get_column(name).cells

    def rows(self) -> Iterator[tuple]:
        if not self.columns:
            return iter(() for _ in self.row_labels)
        return zip(*(col.cells for col in self.columns))

    def row_at(self, position: int) -> tuple:
        return tuple(col.cells[position] for col in self.columns)

    # ------------------------------------------------------------------
    # derivation

    def preview(self, n: int) -> "Table":
        """The first n rows (labels preserved); n must be >= 0."""
        if n < 0:
            raise ValueError("preview size must be >= 0")
        if n >= self.row_count:
            return self
        return Table(
            tuple(Column(c.name, c.cells[:n]) for c in self.columns),
            self.row_labels[:n],
        )

    def slice_rows(self, start: int, stop: int) -> "Table":
        """Rows by position in [start, stop), labels preserved."""
        return Table(
            tuple(Column(c.name, c.cells[start:stop]) for c in self.columns),
            self.row_labels[start:stop],
        )

    def with_column(self, name: str, cells: Iterable[Cell]) -> "Table":
        """Replace the named column, or append it if absent."""
        new = Column(name, tuple(cells))
        if self.has_column(name):
            cols = tuple(new if c.name == name else c for c in self.columns)
        else:
            cols = self.columns + (new,)
        return Table(cols, self.row_labels)

    def without_columns(self, names: Iterable[str]) -> "Table":
        drop = set(names)
        for name in drop:
            if not self.has_column(name):
                raise UnknownColumnError(name, self.column_names)
        return Table(
            tuple(c for c in self.columns if c.name not in drop), self.row_labels
        )

    def select_positions(self, positions: Sequence[int]) -> "Table":
        """Keep rows at the given positions, in the order given."""
        cols = tuple(
            Column(c.name, tuple(c.cells[i] for i in positions))
            for c in self.columns
        )
        labels = tuple(self.row_labels[i] for i in positions)
        return Table(cols, labels)

    def reorder_columns(self, names: Sequence[str]) -> "Table":
        return Table(tuple(self.get_column(n) for n in names), self.row_labels)
