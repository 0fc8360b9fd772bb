"""Executors for the fifteen transform actions.

Execution works over an :class:`ActionContext`: the working source table
(kept verbatim from ingest except where a whole-table action reshapes
it) and the destination accumulation table, which starts with every
destination field empty and fills up as actions run. Field-level actions
write destination columns row-by-row and are independent per row, which
is what makes chunked parallel execution legal. Whole-table actions —
DEBLANK, DEDUPE, DELETE_ROWS and the two pivots — may drop or multiply
rows and always run on the full table, keeping source and destination
row-aligned.

Cells here are still mostly ingest text; typing happens when the engine
coerces the finished table against the destination schema.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Sequence

from .schema import FieldType, SchemaModel, parse_day_first_date
from .scripts import (
    BooleanItem,
    DatedField,
    FieldRef,
    ParsedAction,
    SignedField,
)
from .tabular import Cell, Column, Table, cell_text, is_blank

__all__ = [
    "ActionContext",
    "BARRIER_ACTIONS",
    "ExecutionError",
    "init_context",
    "run_action",
]

#: Actions that may drop, multiply or reorder rows; never chunked.
BARRIER_ACTIONS = frozenset(
    {"DEBLANK", "DEDUPE", "DELETE_ROWS", "PIVOT_CATEGORIES", "PIVOT_LONGER"}
)


class ExecutionError(Exception):
    """An action that cannot run against the working tables."""


@dataclass
class ActionContext:
    """Mutable state threaded through a crosswalk run."""

    source: Table
    dest: Table
    source_schema: SchemaModel
    dest_schema: SchemaModel
    warnings: list[str] = dataclass_field(default_factory=list)
    written: set[str] = dataclass_field(default_factory=set)


def init_context(table: Table, source_schema: SchemaModel,
                 dest_schema: SchemaModel) -> ActionContext:
    """Start a run: destination has every schema field, all cells empty."""
    empty = (None,) * table.row_count
    dest = Table(
        tuple(Column(f.name, empty) for f in dest_schema.fields),
        table.row_labels,
    )
    return ActionContext(
        source=table, dest=dest,
        source_schema=source_schema, dest_schema=dest_schema,
    )


# ----------------------------------------------------------------------
# field-level executors
#
# Each takes the context plus the pieces of the parsed script it needs,
# writes one or more destination columns, and touches nothing else.

def act_new(ctx: ActionContext, dest: str, value: str) -> None:
    ctx.dest = ctx.dest.with_column(dest, (value,) * ctx.source.row_count)


def act_rename(ctx: ActionContext, dest: str, source: str) -> None:
    ctx.dest = ctx.dest.with_column(dest, ctx.source.cells(source))


def act_select(ctx: ActionContext, dest: str, sources: Sequence[str]) -> None:
    """First non-empty value across the source columns, in order."""
    columns = [ctx.source.cells(name) for name in sources]
    cells = tuple(
        next((c for c in row if c is not None), None)
        for row in zip(*columns)
    )
    ctx.dest = ctx.dest.with_column(dest, cells)


def _ranking_date(cell: Cell) -> dt.datetime | None:
    """A sortable instant from a date-ish cell; None if it isn't one."""
    if cell is None:
        return None
    if isinstance(cell, dt.datetime):
        return cell if cell.tzinfo else cell.replace(tzinfo=dt.timezone.utc)
    if isinstance(cell, dt.date):
        return dt.datetime.combine(cell, dt.time(), dt.timezone.utc)
    if isinstance(cell, str):
        value, _ = parse_day_first_date(cell)
        if value is not None:
            return dt.datetime.combine(value, dt.time(), dt.timezone.utc)
    return None


def act_select_by_date(ctx: ActionContext, dest: str,
                       pairs: Sequence[tuple[str, str]], newest: bool) -> None:
    """Pick each row's value from the pair whose date ranks first.

    Pairs whose date cell is empty or unreadable are passed over; ties
    keep the earliest pair in script order.
    """
    value_columns = [ctx.source.cells(v) for v, _ in pairs]
    date_columns = [ctx.source.cells(d) for _, d in pairs]
    n = ctx.source.row_count
    out: list[Cell] = []
    for i in range(n):
        best: Cell = None
        best_key: dt.datetime | None = None
        for values, dates in zip(value_columns, date_columns):
            key = _ranking_date(dates[i])
            if key is None:
                continue
            if best_key is None or (key > best_key if newest else key < best_key):
                best_key = key
                best = values[i]
        out.append(best)
    ctx.dest = ctx.dest.with_column(dest, tuple(out))


def act_calculate(ctx: ActionContext, dest: str,
                  terms: Sequence[tuple[str, str]]) -> None:
    """Sum signed columns; cells that don't read as numbers add nothing."""
    signed = [
        (1.0 if sign == "+" else -1.0, ctx.source.cells(name))
        for sign, name in terms
    ]
    n = ctx.source.row_count
    out = []
    for i in range(n):
        total = 0.0
        for factor, cells in signed:
            cell = cells[i]
            if cell is None:
                continue
            try:
                total += factor * float(cell if isinstance(cell, str) else cell_text(cell))
            except (TypeError, ValueError):
                continue
        out.append(total)
    ctx.dest = ctx.dest.with_column(dest, tuple(out))


def act_unite(ctx: ActionContext, dest: str, separator: str,
              sources: Sequence[str]) -> None:
    """Join non-empty cells left to right; all-empty rows stay empty."""
    columns = [ctx.source.cells(name) for name in sources]
    out = []
    for row in zip(*columns):
        parts = [cell_text(c) for c in row if c is not None]
        out.append(separator.join(parts) if parts else None)
    ctx.dest = ctx.dest.with_column(dest, tuple(out))


def act_separate(ctx: ActionContext, dests: Sequence[str], separator: str,
                 source: str) -> None:
    """Split a column into the destinations; the last keeps any remainder."""
    k = len(dests)
    cells = ctx.source.cells(source)
    split_rows = []
    for cell in cells:
        if cell is None:
            split_rows.append(())
        else:
            text = cell if isinstance(cell, str) else cell_text(cell)
            split_rows.append(tuple(text.split(separator, k - 1)))
    for j, dest in enumerate(dests):
        ctx.dest = ctx.dest.with_column(
            dest, tuple(parts[j] if j < len(parts) else None for parts in split_rows)
        )


def act_categorise(ctx: ActionContext, dest: str, term: str | bool,
                   source: str, values: list[str] | None,
                   presence: bool | None) -> None:
    """Assign ``term`` to rows whose source cell matches.

    Matching is either exact text membership in ``values`` or, with the
    boolean form, presence (non-blank) / absence of any value. Array
    destinations accumulate terms; scalar destinations take the term
    outright.
    """
    cells = ctx.source.cells(source)
    if presence is not None:
        matches = [is_blank(c) != presence for c in cells]
    else:
        wanted = set(values or ())
        matches = [
            c is not None and (c if isinstance(c, str) else cell_text(c)) in wanted
            for c in cells
        ]
    old = ctx.dest.cells(dest)
    ftype = ctx.dest_schema.field(dest).type
    if ftype is FieldType.ARRAY:
        new = []
        for matched, cell in zip(matches, old):
            if not matched:
                new.append(cell)
            elif cell is None:
                new.append((term,))
            elif isinstance(cell, tuple):
                new.append(cell + (term,))
            else:
                new.append((cell, term))
    else:
        new = [term if matched else cell for matched, cell in zip(matches, old)]
    ctx.dest = ctx.dest.with_column(dest, tuple(new))


def act_collate(ctx: ActionContext, dest: str,
                sources: Sequence[str | None]) -> None:
    """Pack columns into fixed-length list cells; ``None`` marks a skip."""
    n = ctx.source.row_count
    columns = [
        ctx.source.cells(name) if name is not None else (None,) * n
        for name in sources
    ]
    cells = tuple(zip(*columns)) if columns else ((),) * n
    ctx.dest = ctx.dest.with_column(dest, cells)


# ----------------------------------------------------------------------
# whole-table executors

def _keep_positions(ctx: ActionContext, positions: Sequence[int]) -> None:
    ctx.source = ctx.source.select_positions(positions)
    ctx.dest = ctx.dest.select_positions(positions)


def act_deblank(ctx: ActionContext) -> None:
    """Drop rows blank in every source column."""
    columns = [c.cells for c in ctx.source.columns]
    keep = [
        i for i, row in enumerate(zip(*columns))
        if not all(is_blank(c) for c in row)
    ] if columns else []
    if len(keep) != ctx.source.row_count:
        _keep_positions(ctx, keep)


def act_dedupe(ctx: ActionContext) -> None:
    """Drop any row identical to an earlier one across all source columns."""
    seen: set = set()
    keep: list[int] = []
    for i, row in enumerate(ctx.source.rows()):
        if row not in seen:
            seen.add(row)
            keep.append(i)
    if len(keep) != ctx.source.row_count:
        _keep_positions(ctx, keep)


def act_delete_rows(ctx: ActionContext, labels: Sequence[int]) -> None:
    """Drop rows by stable label; unknown labels warn and are ignored."""
    wanted = set(labels)
    present = set(ctx.source.row_labels)
    missing = sorted(wanted - present)
    if missing:
        ctx.warnings.append(
            "DELETE_ROWS: no such row label(s): " + ", ".join(map(str, missing))
        )
    keep = [i for i, lab in enumerate(ctx.source.row_labels) if lab not in wanted]
    if len(keep) != ctx.source.row_count:
        _keep_positions(ctx, keep)


def act_pivot_longer(ctx: ActionContext, name_dest: str, value_dest: str,
                     sources: Sequence[str]) -> None:
    """Unpivot: one output row per (source row, pivoted column).

    The working source keeps its other columns, repeated per output row,
    and both tables get fresh row labels — the original rows no longer
    exist. Anything already accumulated in the destination is discarded,
    with a warning naming the casualties.
    """
    pivot = list(sources)
    for name in pivot:
        ctx.source.get_column(name)  # raise early on unknown columns
    k = len(pivot)
    n = ctx.source.row_count
    kept = [c for c in ctx.source.columns if c.name not in set(pivot)]
    labels = tuple(range(n * k))

    new_source = Table(
        tuple(
            Column(c.name, tuple(cell for cell in c.cells for _ in range(k)))
            for c in kept
        ),
        labels,
    )
    names_cells = tuple(name for _ in range(n) for name in pivot)
    pivot_columns = [ctx.source.cells(name) for name in pivot]
    value_cells = tuple(
        column[i] for i in range(n) for column in pivot_columns
    )

    lost = sorted(ctx.written - {name_dest, value_dest})
    if lost:
        ctx.warnings.append(
            "PIVOT_LONGER rebuilds the row set; discarding previously "
            "written destination field(s): " + ", ".join(lost)
        )
    empty = (None,) * (n * k)
    dest_columns = []
    for f in ctx.dest_schema.fields:
        if f.name == name_dest:
            dest_columns.append(Column(f.name, names_cells))
        elif f.name == value_dest:
            dest_columns.append(Column(f.name, value_cells))
        else:
            dest_columns.append(Column(f.name, empty))
    ctx.source = new_source
    ctx.dest = Table(tuple(dest_columns), labels)
    ctx.written = {name_dest, value_dest}


def act_pivot_categories(ctx: ActionContext, dest: str, source: str,
                         header_labels: Sequence[int]) -> None:
    """Spread in-column header rows down onto the rows beneath them.

    The rows named by label hold headers in the source column; each
    header's text applies to every following row until the next header.
    Header rows are removed. Rows above the first header get an empty
    cell and a warning.
    """
    headers = set(header_labels)
    missing = sorted(headers - set(ctx.source.row_labels))
    if missing:
        raise ExecutionError(
            "PIVOT_CATEGORIES: no such row label(s): " + ", ".join(map(str, missing))
        )
    cells = ctx.source.cells(source)
    current: Cell = None
    seen_header = False
    orphans = 0
    keep: list[int] = []
    spread: list[Cell] = []
    for i, label in enumerate(ctx.source.row_labels):
        if label in headers:
            cell = cells[i]
            current = None if cell is None else (
                cell if isinstance(cell, str) else cell_text(cell)
            )
            seen_header = True
            continue
        if not seen_header:
            orphans += 1
        keep.append(i)
        spread.append(current)
    if orphans:
        ctx.warnings.append(
            f"PIVOT_CATEGORIES: {orphans} row(s) precede the first header "
            "row and take no category"
        )
    _keep_positions(ctx, keep)
    ctx.dest = ctx.dest.with_column(dest, tuple(spread))


# ----------------------------------------------------------------------
# dispatch

def _collate_names(action: ParsedAction) -> list[str | None]:
    return [
        item.name if isinstance(item, FieldRef) else None
        for item in action.source_items
    ]


def _execute(ctx: ActionContext, action: ParsedAction) -> None:
    name = action.action
    if name == "NEW":
        act_new(ctx, action.dest_fields[0], action.source_items[0].text)
    elif name == "RENAME":
        act_rename(ctx, action.dest_fields[0], action.source_items[0].name)
    elif name == "SELECT":
        act_select(ctx, action.dest_fields[0],
                   [i.name for i in action.source_items])
    elif name in ("SELECT_NEWEST", "SELECT_OLDEST"):
        pairs = [
            (i.value_field, i.date_field)
            for i in action.source_items if isinstance(i, DatedField)
        ]
        act_select_by_date(ctx, action.dest_fields[0], pairs,
                           newest=name == "SELECT_NEWEST")
    elif name == "CALCULATE":
        terms = [
            (i.sign, i.name)
            for i in action.source_items if isinstance(i, SignedField)
        ]
        act_calculate(ctx, action.dest_fields[0], terms)
    elif name == "UNITE":
        act_unite(ctx, action.dest_fields[0], action.source_term or "",
                  [i.name for i in action.source_items])
    elif name == "SEPARATE":
        act_separate(ctx, action.dest_fields, action.source_term or "",
                     action.source_items[0].name)
    elif name == "CATEGORISE":
        items = action.source_items
        if len(items) == 1 and isinstance(items[0], BooleanItem):
            presence: bool | None = items[0].value
            values = None
        else:
            presence = None
            values = [i.text for i in items]
        act_categorise(ctx, action.dest_fields[0], action.dest_term,
                       action.source_term or "", values, presence)
    elif name == "COLLATE":
        act_collate(ctx, action.dest_fields[0], _collate_names(action))
    elif name == "DEBLANK":
        act_deblank(ctx)
    elif name == "DEDUPE":
        act_dedupe(ctx)
    elif name == "DELETE_ROWS":
        act_delete_rows(ctx, [i.value for i in action.source_items])
    elif name == "PIVOT_LONGER":
        act_pivot_longer(ctx, action.dest_fields[0], action.dest_fields[1],
                         [i.name for i in action.source_items])
    elif name == "PIVOT_CATEGORIES":
        act_pivot_categories(ctx, action.dest_fields[0],
                             action.source_term or "",
                             [i.value for i in action.source_items])
    else:  # pragma: no cover
        raise ExecutionError(f"no executor for {name}")


def run_action(ctx: ActionContext, action: ParsedAction,
               threads: int = 1) -> None:
    """Execute one action, chunking row-independent work across threads.

    Chunked execution is bit-identical to sequential: chunks cover the
    row range in order, results and warnings merge in chunk order, and
    whole-table actions never chunk.
    """
    overwrite = [
        f for f in action.dest_fields
        if f in ctx.written and not (
            action.action == "CATEGORISE"
            and ctx.dest_schema.field(f).type is FieldType.ARRAY
        )
    ]
    for f in overwrite:
        ctx.warnings.append(
            f"{action.action} overwrites destination field {f!r}, "
            "already written by an earlier action"
        )

    n = ctx.source.row_count
    if (threads > 1 and action.action not in BARRIER_ACTIONS
            and n >= threads * 2):
        size = -(-n // threads)  # ceil
        bounds = [(i, min(i + size, n)) for i in range(0, n, size)]
        chunks = []
        for start, stop in bounds:
            sub = ActionContext(
                source=ctx.source.slice_rows(start, stop),
                dest=ctx.dest.slice_rows(start, stop),
                source_schema=ctx.source_schema,
                dest_schema=ctx.dest_schema,
                written=ctx.written,
            )
            chunks.append(sub)
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda sub: _execute(sub, action), chunks))
        stitched = []
        for f in ctx.dest.column_names:
            cells: list[Cell] = []
            for sub in chunks:
                cells.extend(sub.dest.cells(f))
            stitched.append(Column(f, tuple(cells)))
        ctx.dest = Table(tuple(stitched), ctx.dest.row_labels)
        for sub in chunks:
            ctx.warnings.extend(sub.warnings)
    else:
        _execute(ctx, action)

    if action.action not in ("PIVOT_LONGER",):
        ctx.written.update(action.dest_fields)
