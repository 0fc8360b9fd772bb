"""Table schemas: field definitions, derivation, coercion and validation.

A schema is the destination-side contract a crosswalk transforms data
into, and also the minimal description derived from a freshly ingested
source (every column a string field, nothing guessed). Coercion turns
text cells into typed cells and never throws: a cell that will not
coerce becomes empty and is reported, because a thousand good rows
should not be hostage to one bad one. Validation happens after coercion
and reports constraint violations without touching the data.
"""
from __future__ import annotations

import datetime as dt
import enum
import hashlib
import json
import re
import unicodedata
import uuid as uuid_module
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .tabular import Cell, Table, cell_text

__all__ = [
    "CategoryTerm",
    "CoercionFailure",
    "CoercionReport",
    "FieldConstraints",
    "FieldDefinition",
    "FieldType",
    "SchemaError",
    "SchemaModel",
    "UnknownFieldError",
    "ValidationReport",
    "Violation",
    "coerce_cell",
    "coerce_table",
    "derive_categories",
    "derive_schema",
    "fingerprint",
    "parse_day_first_date",
    "validate_table",
]


class SchemaError(Exception):
    """A schema that breaks its own rules, or an operation that would."""


class UnknownFieldError(SchemaError):
    def __init__(self, name: str, available: Sequence[str]):
        self.name = name
        self.available = list(available)
        shown = ", ".join(repr(f) for f in self.available) or "(no fields)"
        super().__init__(f"unknown field {name!r}; schema has: {shown}")


class FieldType(str, enum.Enum):
    STRING = "string"
    INTEGER = "integer"
    NUMBER = "number"
    BOOLEAN = "boolean"
    DATE = "date"
    DATETIME = "datetime"
    ARRAY = "array"
    CATEGORY = "category"


@dataclass(frozen=True)
class CategoryTerm:
    """One permitted term of a categorical field."""

    name: str
    description: str | None = None

    def __post_init__(self):
        if not self.name:
            raise SchemaError("category terms must be non-empty")


@dataclass(frozen=True)
class FieldConstraints:
    required: bool = False
    unique: bool = False
    minimum: float | None = None
    maximum: float | None = None
    categories: tuple[CategoryTerm, ...] = ()
    default: Cell = None

    def __post_init__(self):
        if not isinstance(self.categories, tuple):
            object.__setattr__(self, "categories", tuple(self.categories))
        if (self.minimum is not None and self.maximum is not None
                and self.minimum > self.maximum):
            raise SchemaError(
                f"minimum {self.minimum} exceeds maximum {self.maximum}"
            )
        names = [t.name for t in self.categories]
        if len(set(names)) != len(names):
            raise SchemaError("category terms must be unique")

    def to_dict(self) -> dict:
        out: dict = {}
        if self.required:
            out["required"] = True
        if self.unique:
            out["unique"] = True
        if self.minimum is not None:
            out["minimum"] = self.minimum
        if self.maximum is not None:
            out["maximum"] = self.maximum
        if self.categories:
            out["categories"] = [
                {"name": t.name, "description": t.description}
                if t.description else {"name": t.name}
                for t in self.categories
            ]
        if self.default is not None:
            out["default"] = _cell_to_json(self.default)
        return out

    @classmethod
    def from_dict(cls, raw: dict, field_type: "FieldType") -> "FieldConstraints":
        terms = tuple(
            CategoryTerm(t["name"], t.get("description"))
            for t in raw.get("categories", ())
        )
        default = raw.get("default")
        if default is not None:
            default = _cell_from_json(default, field_type)
        return cls(
            required=raw.get("required", False),
            unique=raw.get("unique", False),
            minimum=raw.get("minimum"),
            maximum=raw.get("maximum"),
            categories=terms,
            default=default,
        )


@dataclass(frozen=True)
class FieldDefinition:
    name: str
    type: FieldType = FieldType.STRING
    title: str | None = None
    description: str | None = None
    constraints: FieldConstraints = field(default_factory=FieldConstraints)

    def __post_init__(self):
        if not self.name:
            raise SchemaError("field names must be non-empty")
        if isinstance(self.type, str) and not isinstance(self.type, FieldType):
            object.__setattr__(self, "type", FieldType(self.type))
        if self.type is FieldType.CATEGORY and not self.constraints.categories:
            raise SchemaError(
                f"field {self.name!r} is categorical but has no category terms"
            )
        if self.constraints.default is not None:
            value, failure, _ = coerce_cell(self.constraints.default, self.type)
            if failure:
                raise SchemaError(
                    f"default for {self.name!r} does not fit type {self.type.value}"
                )
            object.__setattr__(
                self, "constraints", replace(self.constraints, default=value)
            )

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "type": self.type.value}
        if self.title:
            out["title"] = self.title
        if self.description:
            out["description"] = self.description
        constraints = self.constraints.to_dict()
        if constraints:
            out["constraints"] = constraints
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "FieldDefinition":
        ftype = FieldType(raw.get("type", "string"))
        return cls(
            name=raw["name"],
            type=ftype,
            title=raw.get("title"),
            description=raw.get("description"),
            constraints=FieldConstraints.from_dict(raw.get("constraints", {}), ftype),
        )


@dataclass(frozen=True)
class SchemaModel:
    """A named, versioned, ordered collection of field definitions."""

    name: str
    fields: tuple[FieldDefinition, ...]
    uuid: str = field(default_factory=lambda: str(uuid_module.uuid4()))
    description: str | None = None
    version: int = 1
    derived_from: str | None = None  # digest of the source that produced it

    def __post_init__(self):
        if not isinstance(self.fields, tuple):
            object.__setattr__(self, "fields", tuple(self.fields))
        if not self.name:
            raise SchemaError("schema names must be non-empty")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("field names must be unique within a schema")

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    def field(self, name: str) -> FieldDefinition:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownFieldError(name, self.field_names)

    def has_field(self, name: str) -> bool:
        return any(f.name == name for f in self.fields)

    def with_field(self, fd: FieldDefinition) -> "SchemaModel":
        """Replace the named field (or append) and bump the version."""
        if self.has_field(fd.name):
            fields = tuple(fd if f.name == fd.name else f for f in self.fields)
        else:
            fields = self.fields + (fd,)
        return replace(self, fields=fields, version=self.version + 1)

    def to_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "name": self.name,
            "description": self.description,
            "version": self.version,
            "derived_from": self.derived_from,
            "fields": [f.to_dict() for f in self.fields],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SchemaModel":
        return cls(
            uuid=raw["uuid"],
            name=raw["name"],
            description=raw.get("description"),
            version=raw.get("version", 1),
            derived_from=raw.get("derived_from"),
            fields=tuple(FieldDefinition.from_dict(f) for f in raw["fields"]),
        )


def _cell_to_json(cell: Cell):
    if isinstance(cell, (dt.datetime, dt.date)):
        return cell.isoformat()
    if isinstance(cell, tuple):
        return [_cell_to_json(e) for e in cell]
    return cell


def _cell_from_json(raw, field_type: FieldType) -> Cell:
    if isinstance(raw, list):
        return tuple(raw)
    if isinstance(raw, str) and field_type is FieldType.DATE:
        return dt.date.fromisoformat(raw)
    if isinstance(raw, str) and field_type is FieldType.DATETIME:
        return dt.datetime.fromisoformat(raw)
    return raw


# ----------------------------------------------------------------------
# derivation

def derive_schema(table: Table, *, name: str = "derived",
                  source_digest: str | None = None) -> SchemaModel:
    """The minimal schema that makes a table transformable.

    One string field per column, same names, same order. No types are
    guessed; declaring types is a curatorial act, not a statistical one.
    """
    fields = tuple(FieldDefinition(name=c) for c in table.column_names)
    return SchemaModel(name=name, fields=fields, derived_from=source_digest)


def derive_categories(table: Table, field_name: str,
                      mode: str = "unique") -> tuple[CategoryTerm, ...]:
    """Candidate category terms for a column.

    ``unique`` collects distinct non-empty cell texts in first-appearance
    order; ``boolean`` yields the two presence terms.
    """
    if mode == "boolean":
        return (CategoryTerm("true"), CategoryTerm("false"))
    if mode != "unique":
        raise ValueError(f"unknown mode {mode!r}; use 'unique' or 'boolean'")
    seen: dict[str, None] = {}
    for cell in table.cells(field_name):
        if cell is None:
            continue
        seen.setdefault(cell_text(cell))
    return tuple(CategoryTerm(t) for t in seen)


# ----------------------------------------------------------------------
# coercion

@dataclass(frozen=True)
class CoercionFailure:
    field: str
    row_label: int
    original: str


@dataclass
class CoercionReport:
    failures: list[CoercionFailure] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for f in self.failures:
            out[f.field] = out.get(f.field, 0) + 1
        return out


_DAY_FIRST = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")


def parse_day_first_date(text: str) -> tuple[dt.date | None, bool]:
    """Parse ISO-8601 or day-first DD/MM/YYYY text.

    Returns (date, ambiguous). A slashed date where the first number
    could also plausibly be a month is parsed day-first — the convention
    of the data this tool grew up on — and flagged ambiguous unless both
    readings land on the same day.
    """
    try:
        return dt.date.fromisoformat(text), False
    except ValueError:
        pass
    match = _DAY_FIRST.match(text)
    if not match:
        return None, False
    day, month, year = int(match.group(1)), int(match.group(2)), int(match.group(3))
    try:
        value = dt.date(year, month, day)
    except ValueError:
        return None, False
    ambiguous = day <= 12 and day != month
    return value, ambiguous


def _parse_datetime(text: str) -> dt.datetime | None:
    candidate = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        value = dt.datetime.fromisoformat(candidate)
    except ValueError:
        try:
            return dt.datetime.combine(
                dt.date.fromisoformat(text), dt.time(), dt.timezone.utc
            )
        except ValueError:
            return None
    if value.tzinfo is None:
        value = value.replace(tzinfo=dt.timezone.utc)
    return value.astimezone(dt.timezone.utc)


def coerce_cell(cell: Cell, ftype: FieldType) -> tuple[Cell, bool, str | None]:
    """Coerce one cell to a field type.

    Returns (value, failed, warning). ``failed`` means the original was
    non-empty but would not coerce, in which case the value is ``None``.
    """
    if cell is None:
        return None, False, None

    if ftype is FieldType.STRING:
        return (cell if isinstance(cell, str) else cell_text(cell)), False, None

    if ftype is FieldType.ARRAY:
        if isinstance(cell, tuple):
            return cell, False, None
        return (cell,), False, None

    if ftype is FieldType.CATEGORY:
        # Membership is a validation concern; coercion just normalises to text.
        return (cell if isinstance(cell, str) else cell_text(cell)), False, None

    if ftype is FieldType.BOOLEAN:
        if isinstance(cell, bool):
            return cell, False, None
        if isinstance(cell, str):
            lowered = cell.lower()
            if lowered == "true":
                return True, False, None
            if lowered == "false":
                return False, False, None
        return None, True, None

    if ftype is FieldType.INTEGER:
        if isinstance(cell, bool):
            return None, True, None
        if isinstance(cell, int):
            return cell, False, None
        if isinstance(cell, float):
            return (int(cell), False, None) if cell.is_integer() else (None, True, None)
        if isinstance(cell, str):
            try:
                return int(cell), False, None
            except ValueError:
                try:
                    as_float = float(cell)
                except ValueError:
                    return None, True, None
                if as_float.is_integer():
                    return int(as_float), False, None
        return None, True, None

    if ftype is FieldType.NUMBER:
        if isinstance(cell, bool):
            return None, True, None
        if isinstance(cell, (int, float)):
            return float(cell), False, None
        if isinstance(cell, str):
            try:
                return float(cell), False, None
            except ValueError:
                return None, True, None
        return None, True, None

    if ftype is FieldType.DATE:
        if isinstance(cell, dt.datetime):
            return cell.date(), False, None
        if isinstance(cell, dt.date):
            return cell, False, None
        if isinstance(cell, str):
            value, ambiguous = parse_day_first_date(cell)
            if value is None:
                return None, True, None
            warning = f"ambiguous day-first date {cell!r}" if ambiguous else None
            return value, False, warning
        return None, True, None

    if ftype is FieldType.DATETIME:
        if isinstance(cell, dt.datetime):
            value = cell if cell.tzinfo else cell.replace(tzinfo=dt.timezone.utc)
            return value.astimezone(dt.timezone.utc), False, None
        if isinstance(cell, dt.date):
            return dt.datetime.combine(cell, dt.time(), dt.timezone.utc), False, None
        if isinstance(cell, str):
            value = _parse_datetime(cell)
            return (value, False, None) if value else (None, True, None)
        return None, True, None

    raise SchemaError(f"unhandled field type {ftype!r}")


def coerce_table(table: Table, schema: SchemaModel) -> tuple[Table, CoercionReport]:
    """Coerce every schema field's column; uncoercible cells become empty.

    Columns the schema does not mention pass through untouched. Row count
    and order never change.
    """
    report = CoercionReport()
    out = table
    for fd in schema.fields:
        column = table.get_column(fd.name)
        new_cells = []
        for label, cell in zip(table.row_labels, column.cells):
            value, failed, warning = coerce_cell(cell, fd.type)
            if failed:
                original = cell if isinstance(cell, str) else cell_text(cell)
                report.failures.append(CoercionFailure(fd.name, label, original))
            if warning:
                report.warnings.append(f"{fd.name}[{label}]: {warning}")
            new_cells.append(value)
        out = out.with_column(fd.name, new_cells)
    return out, report


def fill_defaults(table: Table, schema: SchemaModel) -> Table:
    """Replace empty cells with each field's declared default, if any."""
    out = table
    for fd in schema.fields:
        default = fd.constraints.default
        if default is None or not table.has_column(fd.name):
            continue
        cells = out.cells(fd.name)
        if any(c is None for c in cells):
            out = out.with_column(
                fd.name, tuple(default if c is None else c for c in cells)
            )
    return out


# ----------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    field: str
    kind: str  # required | unique | minimum | maximum | category
    row_labels: tuple[int, ...]
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {
                    "field": v.field,
                    "kind": v.kind,
                    "row_labels": list(v.row_labels),
                    "message": v.message,
                }
                for v in self.violations
            ],
        }


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def validate_table(table: Table, schema: SchemaModel) -> ValidationReport:
    """Check constraints after coercion. Reports; never mutates."""
    report = ValidationReport()
    for fd in schema.fields:
        cells = table.cells(fd.name)
        labels = table.row_labels
        constraints = fd.constraints

        if constraints.required:
            for label, cell in zip(labels, cells):
                if cell is None:
                    report.violations.append(Violation(
                        fd.name, "required", (label,),
                        f"{fd.name} is required but row {label} is empty",
                    ))

        if constraints.unique:
            positions: dict[str, list[int]] = {}
            for label, cell in zip(labels, cells):
                if cell is None:
                    continue
                positions.setdefault(cell_text(cell), []).append(label)
            for text, rows in positions.items():
                if len(rows) > 1:
                    report.violations.append(Violation(
                        fd.name, "unique", tuple(rows),
                        f"{fd.name} repeats {text!r} in rows "
                        + ", ".join(map(str, rows)),
                    ))

        if constraints.minimum is not None or constraints.maximum is not None:
            for label, cell in zip(labels, cells):
                if isinstance(cell, bool) or not isinstance(cell, (int, float)):
                    continue
                if constraints.minimum is not None and cell < constraints.minimum:
                    report.violations.append(Violation(
                        fd.name, "minimum", (label,),
                        f"{fd.name} row {label}: {cell} < {constraints.minimum}",
                    ))
                if constraints.maximum is not None and cell > constraints.maximum:
                    report.violations.append(Violation(
                        fd.name, "maximum", (label,),
                        f"{fd.name} row {label}: {cell} > {constraints.maximum}",
                    ))

        if constraints.categories:
            terms = {_nfc(t.name) for t in constraints.categories}
            for label, cell in zip(labels, cells):
                if cell is None:
                    continue
                elements = cell if isinstance(cell, tuple) else (cell,)
                for element in elements:
                    if element is None:
                        continue
                    if _nfc(cell_text(element)) not in terms:
                        report.violations.append(Violation(
                            fd.name, "category", (label,),
                            f"{fd.name} row {label}: {cell_text(element)!r} "
                            "is not a permitted term",
                        ))
    return report


# ----------------------------------------------------------------------
# identity

def fingerprint(schema: SchemaModel) -> str:
    """BLAKE2b-512 over the ordered (name, type) pairs and nothing else.

    Constraints, titles, descriptions, uuid and version are all excluded:
    two schemas that name and type their columns identically describe
    the same table shape, which is what crosswalk reuse keys on.
    """
    payload = json.dumps(
        [[f.name, f.type.value] for f in schema.fields],
        ensure_ascii=False, separators=(",", ":"),
    )
    return hashlib.blake2b(payload.encode("utf-8")).hexdigest()
