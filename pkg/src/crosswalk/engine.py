"""Crosswalk lifecycle and execution.

A crosswalk is an ordered list of parsed actions bound to a source
schema *fingerprint* and a destination schema. Binding to the
fingerprint rather than a schema instance is what makes crosswalks
reusable: next quarter's extract with the same columns and types matches
the same fingerprint, and the same crosswalk applies unchanged.

Execution is deterministic — same crosswalk, same input bytes, same
output table — which is what makes the probity chain checkable. The
audit trail records wall-clock durations for operators, but durations
are explicitly outside the determinism contract.
"""
from __future__ import annotations

import datetime as dt
import time
import uuid as uuid_module
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import actions as actions_module
from .actions import ActionContext, init_context, run_action
from .ingest import DataSourceRecord, hash_file, write_csv_text
from .schema import (
    CoercionReport,
    SchemaModel,
    ValidationReport,
    coerce_table,
    fill_defaults,
    fingerprint,
    validate_table,
)
from .scripts import (
    ParsedAction,
    parse_script,
    serialize_action,
    validate_against_schemas,
    validate_structure,
)
from .tabular import Table

__all__ = [
    "AuditRecord",
    "Crosswalk",
    "CrosswalkStateError",
    "CrosswalkValidationError",
    "ProbityError",
    "TransformResult",
    "add_action",
    "apply_crosswalk",
    "export_table",
    "new_crosswalk",
    "validate_crosswalk",
]

DRAFT = "draft"
VALIDATED = "validated"


class CrosswalkStateError(Exception):
    """An operation that the crosswalk's status forbids."""


class CrosswalkValidationError(Exception):
    """One or more scripts failed structural or schema validation."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ProbityError(Exception):
    """The provenance chain does not hold."""


@dataclass(frozen=True)
class Crosswalk:
    name: str
    source_fingerprint: str
    dest_schema_uuid: str
    actions: tuple[ParsedAction, ...] = ()
    uuid: str = field(default_factory=lambda: str(uuid_module.uuid4()))
    status: str = DRAFT
    version: int = 1

    def scripts(self) -> list[str]:
        """Canonical text of every action, in order."""
        return [serialize_action(a) for a in self.actions]

    def to_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "name": self.name,
            "source_fingerprint": self.source_fingerprint,
            "dest_schema_uuid": self.dest_schema_uuid,
            "status": self.status,
            "version": self.version,
            "scripts": self.scripts(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Crosswalk":
        return cls(
            uuid=raw["uuid"],
            name=raw["name"],
            source_fingerprint=raw["source_fingerprint"],
            dest_schema_uuid=raw["dest_schema_uuid"],
            status=raw.get("status", DRAFT),
            version=raw.get("version", 1),
            actions=tuple(parse_script(s) for s in raw.get("scripts", ())),
        )


def new_crosswalk(name: str, source_schema: SchemaModel,
                  dest_schema: SchemaModel) -> Crosswalk:
    return Crosswalk(
        name=name,
        source_fingerprint=fingerprint(source_schema),
        dest_schema_uuid=dest_schema.uuid,
    )


def _check_action(action: ParsedAction, source_schema: SchemaModel,
                  dest_schema: SchemaModel) -> list[str]:
    problems = [v.message for v in validate_structure(action)]
    if not problems:
        problems = [
            v.message
            for v in validate_against_schemas(action, source_schema, dest_schema)
        ]
    return problems


def add_action(crosswalk: Crosswalk, script: str, source_schema: SchemaModel,
               dest_schema: SchemaModel) -> Crosswalk:
    """Parse, validate and append one script. Any edit re-drafts."""
    action = parse_script(script)
    problems = _check_action(action, source_schema, dest_schema)
    if problems:
        raise CrosswalkValidationError(problems)
    return replace(
        crosswalk, actions=crosswalk.actions + (action,), status=DRAFT
    )


def remove_action(crosswalk: Crosswalk, index: int) -> Crosswalk:
    actions = list(crosswalk.actions)
    del actions[index]
    return replace(crosswalk, actions=tuple(actions), status=DRAFT)


def move_action(crosswalk: Crosswalk, index: int, to: int) -> Crosswalk:
    actions = list(crosswalk.actions)
    action = actions.pop(index)
    actions.insert(to, action)
    return replace(crosswalk, actions=tuple(actions), status=DRAFT)


def validate_crosswalk(crosswalk: Crosswalk, source_schema: SchemaModel,
                       dest_schema: SchemaModel) -> tuple[Crosswalk, list[str]]:
    """Check every script and destination coverage; mark validated.

    Destination fields no action writes are warnings — they will simply
    come out empty — except required fields, which nothing could ever
    fill downstream, so going unmapped is an error.
    """
    if fingerprint(source_schema) != crosswalk.source_fingerprint:
        raise ProbityError(
            "crosswalk was authored against a different source shape "
            f"(fingerprint {crosswalk.source_fingerprint[:16]}…)"
        )
    problems: list[str] = []
    for i, action in enumerate(crosswalk.actions):
        for message in _check_action(action, source_schema, dest_schema):
            problems.append(f"script {i}: {message}")
    written = {name for a in crosswalk.actions for name in a.dest_fields}
    warnings: list[str] = []
    for f in dest_schema.fields:
        if f.name in written:
            continue
        if f.constraints.required:
            problems.append(
                f"required destination field {f.name!r} is not written by any script"
            )
        else:
            warnings.append(
                f"destination field {f.name!r} is not written by any script"
            )
    if problems:
        raise CrosswalkValidationError(problems)
    return replace(crosswalk, status=VALIDATED), warnings


# ----------------------------------------------------------------------
# execution

@dataclass(frozen=True)
class AuditRecord:
    """What one step did: the script as written, and its row effect."""

    step: int
    action: str
    script: str
    rows_before: int
    rows_after: int
    warnings: int
    duration_ms: float  # operator information; outside determinism

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "action": self.action,
            "script": self.script,
            "rows_before": self.rows_before,
            "rows_after": self.rows_after,
            "warnings": self.warnings,
            "duration_ms": self.duration_ms,
        }


@dataclass(frozen=True)
class TransformResult:
    table: Table
    audit: tuple[AuditRecord, ...]
    warnings: tuple[str, ...]
    coercion: CoercionReport
    validation: ValidationReport

    @property
    def ok(self) -> bool:
        return self.validation.ok


def apply_crosswalk(crosswalk: Crosswalk, table: Table,
                    source_schema: SchemaModel, dest_schema: SchemaModel,
                    *, threads: int = 1,
                    allow_draft: bool = False) -> TransformResult:
    """Run every action, then coerce, fill defaults and validate.

    The output table has exactly the destination schema's columns in
    schema order. Raises ProbityError if the source schema does not
    match the crosswalk's bound fingerprint, and CrosswalkStateError
    when asked to run a draft without ``allow_draft``.
    """
    if crosswalk.status != VALIDATED and not allow_draft:
        raise CrosswalkStateError(
            f"crosswalk {crosswalk.name!r} is {crosswalk.status}; validate it first"
        )
    if fingerprint(source_schema) != crosswalk.source_fingerprint:
        raise ProbityError(
            "source schema fingerprint does not match the crosswalk binding"
        )
    if dest_schema.uuid != crosswalk.dest_schema_uuid:
        raise ProbityError(
            "destination schema is not the one the crosswalk was authored for"
        )
    if table.column_names != source_schema.field_names:
        raise ProbityError(
            "table columns do not match the source schema; re-ingest or re-derive"
        )
    if threads < 1:
        raise ValueError("threads must be >= 1")

    ctx = init_context(table, source_schema, dest_schema)
    audit: list[AuditRecord] = []
    for step, action in enumerate(crosswalk.actions):
        before_rows = ctx.source.row_count
        before_warnings = len(ctx.warnings)
        started = time.perf_counter()
        run_action(ctx, action, threads=threads)
        audit.append(AuditRecord(
            step=step,
            action=action.action,
            script=action.raw or serialize_action(action),
            rows_before=before_rows,
            rows_after=ctx.source.row_count,
            warnings=len(ctx.warnings) - before_warnings,
            duration_ms=(time.perf_counter() - started) * 1000.0,
        ))

    out = ctx.dest.reorder_columns(dest_schema.field_names)
    out, coercion = coerce_table(out, dest_schema)
    out = fill_defaults(out, dest_schema)
    validation = validate_table(out, dest_schema)
    warnings = list(ctx.warnings)
    warnings.extend(coercion.warnings)
    return TransformResult(
        table=out,
        audit=tuple(audit),
        warnings=tuple(warnings),
        coercion=coercion,
        validation=validation,
    )


# ----------------------------------------------------------------------
# export

def export_table(table: Table, schema: SchemaModel, path: str | Path,
                 format: str = "csv") -> DataSourceRecord:
    """Write the table to disk and return its provenance record."""
    path = Path(path)
    if format == "csv":
        data = write_csv_text(table).encode("utf-8")
        path.write_bytes(data)
    elif format == "parquet":
        _write_parquet(table, schema, path)
    else:
        raise ValueError(f"unsupported export format {format!r}")
    return DataSourceRecord(
        source_path=str(path),
        format=format,
        digest=hash_file(path),
        imported_at=dt.datetime.now(dt.timezone.utc),
        row_count=table.row_count,
        column_count=len(table.columns),
    )


def _write_parquet(table: Table, schema: SchemaModel, path: Path) -> None:
    import pyarrow as pa
    import pyarrow.parquet as pq

    from .schema import FieldType
    from .tabular import cell_text

    types = {
        FieldType.STRING: pa.string(),
        FieldType.INTEGER: pa.int64(),
        FieldType.NUMBER: pa.float64(),
        FieldType.BOOLEAN: pa.bool_(),
        FieldType.DATE: pa.date32(),
        FieldType.DATETIME: pa.timestamp("us", tz="UTC"),
        FieldType.ARRAY: pa.list_(pa.string()),
        FieldType.CATEGORY: pa.string(),
    }
    arrays = []
    fields = []
    for name in table.column_names:
        fd = schema.field(name) if schema.has_field(name) else None
        ftype = fd.type if fd else FieldType.STRING
        cells = table.cells(name)
        if ftype is FieldType.ARRAY:
            values = [
                None if c is None else [
                    None if e is None else cell_text(e) for e in c
                ]
                for c in cells
            ]
        elif ftype in (FieldType.STRING, FieldType.CATEGORY):
            values = [None if c is None else cell_text(c) for c in cells]
        else:
            values = list(cells)
        arrays.append(pa.array(values, type=types[ftype]))
        fields.append(pa.field(name, types[ftype]))
    pq.write_table(pa.table(arrays, schema=pa.schema(fields)), path)
