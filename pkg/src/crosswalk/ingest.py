"""Source-file ingestion: bytes in, text-or-empty tables out.

Ingestion is deliberately lossless and dumb. Cells come out as ``None``
(empty) or ``str`` (the delimited text, or the canonical text of a typed
Parquet value) and nothing else — no type guessing, no trimming, no
dropped rows unless the caller explicitly asked to skip them. Every file
is hashed with BLAKE2b-512 before parsing so the import can be proven
against the original bytes later.

The CSV reader is written here rather than taken from ``csv`` because the
standard library cannot preserve the distinction between an unquoted
empty field (no value) and a quoted ``\"\"`` (a present, zero-length
text), and that distinction is load-bearing for empty-cell semantics.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import io
import os
import re
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence
from xml.etree import ElementTree

from .tabular import Table, cell_text

__all__ = [
    "DataSourceRecord",
    "DuplicateHeaderError",
    "EmptyFileError",
    "IngestError",
    "IngestOptions",
    "ParseFailure",
    "generate_field_names",
    "hash_bytes",
    "hash_file",
    "ingest_source",
    "read_csv_text",
    "supported_formats",
    "write_csv_text",
]

FORMATS = ("csv", "parquet", "xlsx")


def supported_formats() -> set[str]:
    """Formats this build can ingest.

    XLSX is an optional capability; it can be switched off with the
    CROSSWALK_DISABLE_XLSX environment variable to exercise builds
    without it.
    """
    formats = {"csv", "parquet"}
    if not os.environ.get("CROSSWALK_DISABLE_XLSX"):
        formats.add("xlsx")
    return formats


# ----------------------------------------------------------------------
# hashing

def hash_bytes(data: bytes) -> str:
    """BLAKE2b-512 digest of the bytes, as 128 lowercase hex characters."""
    return hashlib.blake2b(data).hexdigest()


def hash_file(path: str | Path) -> str:
    digest = hashlib.blake2b()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ----------------------------------------------------------------------
# errors and records

class IngestError(Exception):
    """Base class for ingestion failures."""


class EmptyFileError(IngestError):
    pass


class DuplicateHeaderError(IngestError):
    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        dupes = sorted({n for n in names if self.names.count(n) > 1})
        super().__init__(f"duplicate header names: {', '.join(map(repr, dupes))}")


class ParseFailure(IngestError):
    """A malformed source file, located as precisely as we can manage."""

    def __init__(self, message: str, *, row: int | None = None,
                 byte_offset: int | None = None):
        self.row = row
        self.byte_offset = byte_offset
        where = []
        if row is not None:
            where.append(f"row {row}")
        if byte_offset is not None:
            where.append(f"byte {byte_offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


@dataclass(frozen=True)
class DataSourceRecord:
    """Provenance for one imported table."""

    source_path: str
    format: str
    digest: str
    imported_at: dt.datetime
    row_count: int
    column_count: int
    sheet_name: str | None = None
    citation: str | None = None

    def to_dict(self) -> dict:
        return {
            "source_path": self.source_path,
            "format": self.format,
            "digest": self.digest,
            "imported_at": self.imported_at.isoformat(),
            "row_count": self.row_count,
            "column_count": self.column_count,
            "sheet_name": self.sheet_name,
            "citation": self.citation,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DataSourceRecord":
        return cls(
            source_path=raw["source_path"],
            format=raw["format"],
            digest=raw["digest"],
            imported_at=dt.datetime.fromisoformat(raw["imported_at"]),
            row_count=raw["row_count"],
            column_count=raw["column_count"],
            sheet_name=raw.get("sheet_name"),
            citation=raw.get("citation"),
        )


@dataclass(frozen=True)
class IngestOptions:
    """How to read a source file.

    ``header_row`` names the raw row (0-based) holding the column names.
    Setting it above zero discards the rows before it, so to keep imports
    lossless-by-default the same number of rows must also be declared in
    ``skip_rows`` — refusing to silently eat data is the point.
    """

    header_row: int | None = None
    no_header: bool = False
    skip_rows: int = 0
    generated_name_prefix: str = "column"
    delimiter: str = ","
    encoding: str = "utf-8"
    sheet_name: str | None = None
    citation: str | None = None

    def __post_init__(self):
        if self.no_header and self.header_row is not None:
            raise IngestError("header_row and no_header are mutually exclusive")
        if self.header_row is not None and self.header_row < 0:
            raise IngestError("header_row must be >= 0")
        if self.skip_rows < 0:
            raise IngestError("skip_rows must be >= 0")
        if len(self.delimiter) != 1 or self.delimiter in ('"', "\n", "\r"):
            raise ValueError(f"bad delimiter: {self.delimiter!r}")

    def to_dict(self) -> dict:
        return {
            "header_row": self.header_row,
            "no_header": self.no_header,
            "skip_rows": self.skip_rows,
            "generated_name_prefix": self.generated_name_prefix,
            "delimiter": self.delimiter,
            "encoding": self.encoding,
            "sheet_name": self.sheet_name,
            "citation": self.citation,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "IngestOptions":
        return cls(**{
            k: raw.get(k, getattr(cls, k, None))
            for k in (
                "header_row", "no_header", "skip_rows",
                "generated_name_prefix", "delimiter", "encoding",
                "sheet_name", "citation",
            )
        })


def generate_field_names(count: int, prefix: str = "column") -> list[str]:
    """Positional names column_0 .. column_{n-1} for headerless files."""
    if count < 1:
        raise ValueError("need at least one column")
    return [f"{prefix}_{i}" for i in range(count)]


# ----------------------------------------------------------------------
# CSV

def read_csv_text(text: str, delimiter: str = ",") -> list[list[str | None]]:
    """Parse RFC-4180 text into rows of empty-or-text cells.

    An unquoted zero-length field is ``None``; a quoted ``\"\"`` is the
    empty string. Quotes inside unquoted fields are taken literally
    (lenient, as real exports demand), but a field that *opens* with a
    quote must close it and be followed by a delimiter or row end.
    """
    rows: list[list[str | None]] = []
    current: list[str | None] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    row_number = 0
    quoted_field = False

    def fail(message: str, at: int):
        raise ParseFailure(
            message, row=row_number, byte_offset=len(text[:at].encode("utf-8"))
        )

    def end_field():
        nonlocal quoted_field
        if quoted_field:
            current.append("".join(buf))
        else:
            current.append("".join(buf) if buf else None)
        buf.clear()
        quoted_field = False

    def end_row():
        nonlocal row_number
        end_field()
        rows.append(list(current))
        current.clear()
        row_number += 1

    while i < n:
        ch = text[i]
        if ch == '"' and not buf and not quoted_field:
            # Opening quote: consume until the closing quote.
            quoted_field = True
            i += 1
            start = i
            while True:
                j = text.find('"', i)
                if j < 0:
                    fail("unterminated quoted field", start - 1)
                if j + 1 < n and text[j + 1] == '"':
                    buf.append(text[i:j] + '"')
                    i = j + 2
                    continue
                buf.append(text[i:j])
                i = j + 1
                break
            if i < n and text[i] not in (delimiter, "\n", "\r"):
                fail("text after closing quote", i)
            # Mark the field present even when zero-length ("").
            if not buf:
                buf.append("")
            continue
        if ch == delimiter:
            end_field()
            i += 1
            continue
        if ch == "\n":
            end_row()
            i += 1
            continue
        if ch == "\r":
            end_row()
            i += 2 if i + 1 < n and text[i + 1] == "\n" else 1
            continue
        buf.append(ch)
        i += 1

    if buf or current or quoted_field:
        end_row()
    return rows


def write_csv_text(table: Table) -> str:
    """Render a table as RFC-4180 CSV with a header row.

    Empty cells render as nothing; zero-length text renders as ``\"\"`` so
    the reader can tell them apart. Values are canonical cell text.
    """
    def render(cell) -> str:
        if cell is None:
            return ""
        text = cell_text(cell)
        if text == "":
            return '""'
        if any(c in text for c in (',', '"', '\n', '\r')):
            return '"' + text.replace('"', '""') + '"'
        return text

    lines = []
    header = ",".join(render(name) for name in table.column_names)
    lines.append(header)
    columns = [col.cells for col in table.columns]
    for row in zip(*columns) if columns else ():
        lines.append(",".join(render(cell) for cell in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Parquet

def _read_parquet(data: bytes) -> list[tuple[str, list[str | None]]]:
    import pyarrow as pa
    import pyarrow.parquet as pq

    arrow = pq.read_table(io.BytesIO(data))
    out: list[tuple[str, list[str | None]]] = []
    for name in arrow.column_names:
        column = arrow.column(name)
        if pa.types.is_nested(column.type):
            raise ParseFailure(
                f"column {name!r} has nested type {column.type}; "
                "only top-level scalar columns can be imported"
            )
        cells: list[str | None] = []
        for value in column.to_pylist():
            if value is None:
                cells.append(None)
            else:
                cells.append(cell_text(value))
        out.append((name, cells))
    return out


# ----------------------------------------------------------------------
# XLSX (optional capability)
#
# A read-only parser over the OOXML zip using the standard library. It
# understands shared strings, inline strings, booleans and numbers, which
# covers spreadsheet extracts from billing systems. Formatted dates are a
# documented gap: they arrive as their underlying serial numbers.

_NS = "{http://schemas.openxmlformats.org/spreadsheetml/2006/main}"
_REL_NS = "{http://schemas.openxmlformats.org/officeDocument/2006/relationships}"
_PKG_REL_NS = "{http://schemas.openxmlformats.org/package/2006/relationships}"
_CELL_REF = re.compile(r"([A-Z]+)(\d+)$")


def _column_index(ref: str) -> int:
    """Spreadsheet column letters to 0-based index (A -> 0, AA -> 26)."""
    value = 0
    for ch in ref:
        value = value * 26 + (ord(ch) - ord("A") + 1)
    return value - 1


def _xlsx_sheets(data: bytes) -> list[tuple[str, list[list[str | None]]]]:
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise ParseFailure(f"not an xlsx package: {exc}") from exc
    with archive:
        try:
            workbook = ElementTree.fromstring(archive.read("xl/workbook.xml"))
            rels = ElementTree.fromstring(archive.read("xl/_rels/workbook.xml.rels"))
        except KeyError as exc:
            raise ParseFailure(f"xlsx package missing {exc.args[0]}") from exc

        targets = {}
        for rel in rels.iter(f"{_PKG_REL_NS}Relationship"):
            target = rel.get("Target", "")
            if target.startswith("/"):
                target = target[1:]
            elif not target.startswith("xl/"):
                target = "xl/" + target
            targets[rel.get("Id")] = target

        shared: list[str] = []
        if "xl/sharedStrings.xml" in archive.namelist():
            strings = ElementTree.fromstring(archive.read("xl/sharedStrings.xml"))
            for item in strings.iter(f"{_NS}si"):
                shared.append("".join(t.text or "" for t in item.iter(f"{_NS}t")))

        sheets: list[tuple[str, list[list[str | None]]]] = []
        for sheet in workbook.iter(f"{_NS}sheet"):
            name = sheet.get("name", "")
            rid = sheet.get(f"{_REL_NS}id")
            path = targets.get(rid)
            if path is None or path not in archive.namelist():
                raise ParseFailure(f"worksheet for sheet {name!r} not found")
            sheets.append((name, _xlsx_rows(archive.read(path), shared, name)))
        if not sheets:
            raise ParseFailure("workbook has no sheets")
        return sheets


def _xlsx_rows(sheet_xml: bytes, shared: list[str], sheet: str) -> list[list[str | None]]:
    root = ElementTree.fromstring(sheet_xml)
    rows: list[list[str | None]] = []
    max_row = 0
    for row_el in root.iter(f"{_NS}row"):
        row_index = int(row_el.get("r", len(rows) + 1)) - 1
        cells: dict[int, str | None] = {}
        fallback_col = 0
        for cell_el in row_el.iter(f"{_NS}c"):
            ref = cell_el.get("r")
            if ref:
                match = _CELL_REF.match(ref)
                if not match:
                    raise ParseFailure(f"bad cell reference {ref!r}", row=row_index)
                col = _column_index(match.group(1))
            else:
                col = fallback_col
            fallback_col = col + 1
            cells[col] = _xlsx_cell_value(cell_el, shared, sheet, row_index)
        while max_row < row_index:
            rows.append([])
            max_row += 1
        width = max(cells) + 1 if cells else 0
        rows.append([cells.get(i) for i in range(width)])
        max_row = row_index + 1
    # Rectangularise: pad every row to the sheet's widest row.
    width = max((len(r) for r in rows), default=0)
    return [row + [None] * (width - len(row)) for row in rows]


def _xlsx_cell_value(cell_el, shared: list[str], sheet: str, row: int) -> str | None:
    kind = cell_el.get("t", "n")
    if kind == "inlineStr":
        inline = cell_el.find(f"{_NS}is")
        if inline is None:
            return None
        return "".join(t.text or "" for t in inline.iter(f"{_NS}t"))
    v = cell_el.find(f"{_NS}v")
    if v is None or v.text is None:
        return None
    if kind == "s":
        try:
            return shared[int(v.text)]
        except (ValueError, IndexError) as exc:
            raise ParseFailure(
                f"bad shared string index {v.text!r} in sheet {sheet!r}", row=row
            ) from exc
    if kind == "b":
        return "true" if v.text.strip() == "1" else "false"
    # "n" (number) and "str" (formula result): the stored text verbatim.
    return v.text


# ----------------------------------------------------------------------
# entry point

def detect_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in FORMATS:
        return suffix
    raise IngestError(
        f"cannot ingest {Path(path).name!r}: expected one of "
        + ", ".join(f".{f}" for f in FORMATS)
    )


def ingest_source(
    path: str | Path,
    options: IngestOptions | None = None,
    *,
    format: str | None = None,
) -> list[tuple[Table, DataSourceRecord]]:
    """Read a source file into one table per sheet (one for flat formats).

    Returns ``[(table, record)]`` pairs. All sheets of a workbook share
    the file digest but carry their own sheet name. Cells are
    empty-or-text, rows keep file order, and row labels count from 0.
    """
    options = options or IngestOptions()
    path = Path(path)
    fmt = format or detect_format(path)
    if fmt not in supported_formats():
        raise IngestError(f"{fmt} support is not enabled in this build")

    data = path.read_bytes()
    if not data:
        raise EmptyFileError(f"{path.name} is empty")
    digest = hash_bytes(data)
    imported_at = dt.datetime.now(dt.timezone.utc)

    if fmt == "csv":
        try:
            text = data.decode(options.encoding)
        except UnicodeDecodeError as exc:
            raise ParseFailure(
                f"cannot decode as {options.encoding}", byte_offset=exc.start
            ) from exc
        if text.startswith("﻿"):
            text = text[1:]
        sheet_rows = [(None, read_csv_text(text, options.delimiter))]
    elif fmt == "parquet":
        columns = _read_parquet(data)
        names = [name for name, _ in columns]
        if len(set(names)) != len(names):
            raise DuplicateHeaderError(names)
        n = len(columns[0][1]) if columns else 0
        table = Table.build((name, cells) for name, cells in columns)
        record = DataSourceRecord(
            source_path=str(path), format=fmt, digest=digest,
            imported_at=imported_at, row_count=n, column_count=len(names),
            citation=options.citation,
        )
        return [(table, record)]
    else:
        sheets = _xlsx_sheets(data)
        if options.sheet_name is not None:
            sheets = [s for s in sheets if s[0] == options.sheet_name]
            if not sheets:
                raise IngestError(f"no sheet named {options.sheet_name!r}")
        sheet_rows = sheets

    results = []
    for sheet_name, rows in sheet_rows:
        table = _assemble(rows, options, source=path.name)
        record = DataSourceRecord(
            source_path=str(path), format=fmt, digest=digest,
            imported_at=imported_at, row_count=table.row_count,
            column_count=len(table.columns), sheet_name=sheet_name,
            citation=options.citation,
        )
        results.append((table, record))
    return results


def _assemble(rows: list[list[str | None]], options: IngestOptions,
              source: str) -> Table:
    """Apply header and skip options to raw rows of empty-or-text cells."""
    if not rows:
        raise EmptyFileError(f"{source} has no rows")

    if options.no_header:
        data = rows[options.skip_rows:]
        width = max((len(r) for r in data), default=0)
        if width == 0:
            raise EmptyFileError(f"{source} has no data rows")
        names = generate_field_names(width, options.generated_name_prefix)
    else:
        header_at = options.header_row if options.header_row is not None else options.skip_rows
        if header_at != options.skip_rows:
            raise IngestError(
                f"header_row={header_at} would discard {header_at} leading "
                f"rows; pass skip_rows={header_at} to make that explicit"
            )
        if header_at >= len(rows):
            raise IngestError(
                f"header_row={header_at} but {source} has only {len(rows)} rows"
            )
        header = rows[header_at]
        names = [cell if cell is not None else "" for cell in header]
        if any(name == "" for name in names):
            raise IngestError("header row has empty names")
        if len(set(names)) != len(names):
            raise DuplicateHeaderError(names)
        data = rows[header_at + 1:]
        width = len(names)

    fixed: list[list[str | None]] = []
    for i, row in enumerate(data):
        if len(row) > width:
            raise ParseFailure(
                f"row has {len(row)} fields, expected {width}",
                row=i + (0 if options.no_header else 1) + options.skip_rows,
            )
        fixed.append(row + [None] * (width - len(row)))
    return Table.from_rows(names, fixed)
