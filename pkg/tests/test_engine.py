"""Crosswalk lifecycle, execution, audit trail and export."""
import datetime as dt

import pytest

from crosswalk.engine import (
    DRAFT,
    VALIDATED,
    Crosswalk,
    CrosswalkStateError,
    CrosswalkValidationError,
    ProbityError,
    add_action,
    apply_crosswalk,
    export_table,
    move_action,
    new_crosswalk,
    remove_action,
    validate_crosswalk,
)
from crosswalk.ingest import hash_file, ingest_source
from crosswalk.schema import (
    FieldConstraints,
    FieldDefinition,
    FieldType,
    SchemaModel,
    derive_schema,
    fingerprint,
)
from crosswalk.tabular import Table

from conftest import CASE_STUDY_SCRIPTS, build_dest_schema, build_source_table


def simple_schemas():
    source = SchemaModel(name="in", fields=(
        FieldDefinition("a"), FieldDefinition("b"),
    ))
    dest = SchemaModel(name="out", fields=(
        FieldDefinition("x", constraints=FieldConstraints(required=True)),
        FieldDefinition("y"),
    ))
    return source, dest


def build(scripts, source, dest, name="cw"):
    cw = new_crosswalk(name, source, dest)
    for script in scripts:
        cw = add_action(cw, script, source, dest)
    return cw


# ----------------------------------------------------------------------
# lifecycle

def test_new_crosswalk_starts_as_an_empty_draft():
    source, dest = simple_schemas()
    cw = new_crosswalk("cw", source, dest)
    assert cw.status == DRAFT
    assert cw.actions == ()
    assert cw.source_fingerprint == fingerprint(source)
    assert cw.dest_schema_uuid == dest.uuid


def test_add_action_checks_and_appends():
    source, dest = simple_schemas()
    cw = build(["RENAME > 'x' < ['a']"], source, dest)
    assert cw.scripts() == ["RENAME > 'x' < ['a']"]

    with pytest.raises(CrosswalkValidationError) as err:
        add_action(cw, "RENAME > 'nope' < ['a']", source, dest)
    assert any("'nope'" in p for p in err.value.problems)

    # structural problems win over schema lookups
    with pytest.raises(CrosswalkValidationError) as err:
        add_action(cw, "RENAME > 'ghost' < ['a', 'b']", source, dest)
    assert "at most 1" in err.value.problems[0]


def test_any_edit_returns_to_draft():
    source, dest = simple_schemas()
    cw = build(["RENAME > 'x' < ['a']", "RENAME > 'y' < ['b']"], source, dest)
    cw, _ = validate_crosswalk(cw, source, dest)
    assert cw.status == VALIDATED

    assert add_action(cw, "DEBLANK", source, dest).status == DRAFT
    assert remove_action(cw, 1).status == DRAFT
    assert move_action(cw, 0, 1).status == DRAFT
    assert move_action(cw, 0, 1).scripts() == [
        "RENAME > 'y' < ['b']", "RENAME > 'x' < ['a']",
    ]


def test_validate_reports_unmapped_fields():
    source, dest = simple_schemas()
    validated, warnings = validate_crosswalk(
        build(["RENAME > 'x' < ['a']"], source, dest), source, dest)
    assert validated.status == VALIDATED
    assert warnings == ["destination field 'y' is not written by any script"]

    with pytest.raises(CrosswalkValidationError) as err:
        validate_crosswalk(build(["RENAME > 'y' < ['b']"], source, dest),
                           source, dest)
    assert err.value.problems == [
        "required destination field 'x' is not written by any script"
    ]


def test_validate_prefixes_problems_with_script_index():
    source, dest = simple_schemas()
    cw = build(["RENAME > 'x' < ['a']"], source, dest)
    # sneak a stale action past add_action by renaming the schema field
    shrunk = SchemaModel(name="in", fields=(FieldDefinition("z"),))
    cw = Crosswalk(
        name=cw.name, source_fingerprint=fingerprint(shrunk),
        dest_schema_uuid=cw.dest_schema_uuid, actions=cw.actions,
    )
    with pytest.raises(CrosswalkValidationError) as err:
        validate_crosswalk(cw, shrunk, dest)
    assert err.value.problems[0].startswith("script 0: ")


def test_validate_refuses_fingerprint_mismatch():
    source, dest = simple_schemas()
    cw = build(["RENAME > 'x' < ['a']"], source, dest)
    other = SchemaModel(name="in", fields=(FieldDefinition("a"),))
    with pytest.raises(ProbityError, match="different source shape"):
        validate_crosswalk(cw, other, dest)


def test_crosswalk_round_trips_through_dict():
    source, dest = simple_schemas()
    cw = build(["RENAME > 'x' < ['a']", "DEBLANK"], source, dest)
    cw, _ = validate_crosswalk(cw, source, dest)
    again = Crosswalk.from_dict(cw.to_dict())
    assert again.uuid == cw.uuid
    assert again.status == VALIDATED
    assert again.scripts() == cw.scripts()
    assert [a.structure() for a in again.actions] \
        == [a.structure() for a in cw.actions]


# ----------------------------------------------------------------------
# execution guard-rails

def test_apply_refuses_drafts_unless_told_otherwise():
    source, dest = simple_schemas()
    table = Table.build([("a", ["1"]), ("b", ["2"])])
    cw = build(["RENAME > 'x' < ['a']"], source, dest)
    with pytest.raises(CrosswalkStateError, match="draft"):
        apply_crosswalk(cw, table, source, dest)
    result = apply_crosswalk(cw, table, source, dest, allow_draft=True)
    assert result.table.cells("x") == ("1",)


def test_apply_checks_the_whole_binding():
    source, dest = simple_schemas()
    table = Table.build([("a", ["1"]), ("b", ["2"])])
    cw = build(["RENAME > 'x' < ['a']"], source, dest)
    cw, _ = validate_crosswalk(cw, source, dest)

    other_source = SchemaModel(name="in", fields=(FieldDefinition("q"),))
    with pytest.raises(ProbityError, match="fingerprint"):
        apply_crosswalk(cw, Table.build([("q", ["1"])]), other_source, dest)

    other_dest = SchemaModel(name="out", fields=dest.fields)
    with pytest.raises(ProbityError, match="destination schema"):
        apply_crosswalk(cw, table, source, other_dest)

    twisted = table.reorder_columns(["b", "a"])
    with pytest.raises(ProbityError, match="columns do not match"):
        apply_crosswalk(cw, twisted, source, dest)

    with pytest.raises(ValueError, match="threads"):
        apply_crosswalk(cw, table, source, dest, threads=0)


# ----------------------------------------------------------------------
# results and audit

def test_output_columns_follow_destination_schema_order():
    source, dest = simple_schemas()
    table = Table.build([("a", ["1"]), ("b", ["2"])])
    cw = build(["RENAME > 'y' < ['b']", "RENAME > 'x' < ['a']"], source, dest)
    result = apply_crosswalk(cw, table, source, dest, allow_draft=True)
    assert result.table.column_names == ["x", "y"]


def test_audit_trail_tracks_rows_and_warning_counts():
    source, dest = simple_schemas()
    table = Table.build([
        ("a", ["1", "2", "3", "3"]),
        ("b", ["x", "y", "z", "z"]),
    ])
    scripts = [
        "DEDUPE",
        "DELETE_ROWS < [0, 9]",          # 9 does not exist: one warning
        "RENAME>'x'<'a'",                # kept exactly as written
    ]
    cw = build(scripts, source, dest)
    result = apply_crosswalk(cw, table, source, dest, allow_draft=True)

    assert [a.step for a in result.audit] == [0, 1, 2]
    assert [(a.rows_before, a.rows_after) for a in result.audit] \
        == [(4, 3), (3, 2), (2, 2)]
    assert [a.warnings for a in result.audit] == [0, 1, 0]
    assert result.audit[2].script == "RENAME>'x'<'a'"
    assert result.audit[2].action == "RENAME"
    assert all(a.duration_ms >= 0 for a in result.audit)
    payload = result.audit[1].to_dict()
    assert payload["rows_after"] == 2 and payload["action"] == "DELETE_ROWS"


def test_coercion_and_validation_reports_ride_along():
    source = SchemaModel(name="in", fields=(FieldDefinition("a"),))
    dest = SchemaModel(name="out", fields=(
        FieldDefinition("n", FieldType.INTEGER,
                        constraints=FieldConstraints(required=True)),
    ))
    table = Table.build([("a", ["1", "oops", "3"])])
    cw = build(["RENAME > 'n' < ['a']"], source, dest)
    result = apply_crosswalk(cw, table, source, dest, allow_draft=True)

    assert result.table.cells("n") == (1, None, 3)
    assert [f.row_label for f in result.coercion.failures] == [1]
    # the failed cell is now empty, so the required check names it too
    assert not result.ok
    assert [v.kind for v in result.validation.violations] == ["required"]


def test_defaults_fill_the_holes_coercion_leaves():
    source = SchemaModel(name="in", fields=(FieldDefinition("a"),))
    dest = SchemaModel(name="out", fields=(
        FieldDefinition("n", FieldType.INTEGER,
                        constraints=FieldConstraints(default=0, required=True)),
    ))
    table = Table.build([("a", ["1", "oops", None])])
    cw = build(["RENAME > 'n' < ['a']"], source, dest)
    result = apply_crosswalk(cw, table, source, dest, allow_draft=True)
    assert result.table.cells("n") == (1, 0, 0)
    assert result.ok
    assert len(result.coercion.failures) == 1   # still reported


# ----------------------------------------------------------------------
# the reference pipeline end to end

def case_study():
    table = build_source_table()
    source = derive_schema(table, name="extract")
    dest = build_dest_schema()
    cw = build(CASE_STUDY_SCRIPTS, source, dest, name="reliefs")
    cw, warnings = validate_crosswalk(cw, source, dest)
    return table, source, dest, cw, warnings


def test_case_study_crosswalk_validates_cleanly():
    *_, warnings = case_study()
    assert warnings == []


def test_case_study_produces_typed_columns():
    table, source, dest, cw, _ = case_study()
    result = apply_crosswalk(cw, table, source, dest)

    assert result.ok
    assert result.table.row_count == 6
    assert result.table.cells("occupierOccupationState") == (
        None, None, "Vacant", None, None, "Vacant",
    )
    assert result.table.cells("occupierOccupationDate") == (
        None, None, dt.date(2021, 6, 15), None, None, dt.date(2022, 1, 1),
    )
    assert result.table.cells("occupierAccountStartDate")[2] \
        == dt.date(2018, 4, 20)
    # four LiableFrom cells are day/month-ambiguous; none land wrong
    ambiguous = [w for w in result.warnings if "ambiguous" in w]
    assert len(ambiguous) == 4


def test_case_study_parallel_run_is_identical():
    table, source, dest, cw, _ = case_study()
    one = apply_crosswalk(cw, table, source, dest, threads=1)
    four = apply_crosswalk(cw, table, source, dest, threads=4)
    assert four.table == one.table
    assert four.warnings == one.warnings
    assert [a.script for a in four.audit] == [a.script for a in one.audit]


# ----------------------------------------------------------------------
# export

def typed_table_and_schema():
    schema = SchemaModel(name="out", fields=(
        FieldDefinition("s"),
        FieldDefinition("n", FieldType.NUMBER),
        FieldDefinition("i", FieldType.INTEGER),
        FieldDefinition("b", FieldType.BOOLEAN),
        FieldDefinition("d", FieldType.DATE),
        FieldDefinition("ts", FieldType.DATETIME),
        FieldDefinition("arr", FieldType.ARRAY),
    ))
    table = Table.build([
        ("s", ["plain", None]),
        ("n", [1.5, None]),
        ("i", [42, None]),
        ("b", [True, False]),
        ("d", [dt.date(2020, 5, 4), None]),
        ("ts", [dt.datetime(2020, 5, 4, 12, 30, tzinfo=dt.timezone.utc), None]),
        ("arr", [("a", None, "c"), None]),
    ])
    return table, schema


def test_export_csv_writes_canonical_text(tmp_path):
    table, schema = typed_table_and_schema()
    path = tmp_path / "out.csv"
    record = export_table(table, schema, path, "csv")
    assert record.digest == hash_file(path)
    assert record.row_count == 2 and record.column_count == 7
    text = path.read_text("utf-8")
    assert "2020-05-04" in text
    assert "true" in text
    assert "['a', ~, 'c']" in text


def test_export_csv_is_deterministic(tmp_path):
    table, schema = typed_table_and_schema()
    first = export_table(table, schema, tmp_path / "a.csv", "csv")
    second = export_table(table, schema, tmp_path / "b.csv", "csv")
    assert first.digest == second.digest


def test_export_parquet_reingests_as_canonical_text(tmp_path):
    # ingest always lands as empty-or-text: typed values come back in
    # their canonical text forms, ready for re-coercion
    table, schema = typed_table_and_schema()
    scalars = table.without_columns(["arr"])
    path = tmp_path / "out.parquet"
    export_table(scalars, schema, path, "parquet")
    (back, record), = ingest_source(path)
    assert record.format == "parquet"
    assert back.cells("d") == ("2020-05-04", None)
    assert back.cells("b") == ("true", "false")
    assert back.cells("i") == ("42", None)
    assert back.cells("ts")[0] == "2020-05-04T12:30:00+00:00"


def test_export_parquet_stringifies_array_elements(tmp_path):
    import pyarrow.parquet as pq
    table, schema = typed_table_and_schema()
    path = tmp_path / "arr.parquet"
    export_table(table, schema, path, "parquet")
    raw = pq.read_table(path)
    assert raw.column("arr").to_pylist() == [["a", None, "c"], None]


def test_export_parquet_is_deterministic(tmp_path):
    table, schema = typed_table_and_schema()
    first = export_table(table, schema, tmp_path / "a.parquet", "parquet")
    second = export_table(table, schema, tmp_path / "b.parquet", "parquet")
    assert first.digest == second.digest


def test_export_rejects_unknown_formats(tmp_path):
    table, schema = typed_table_and_schema()
    with pytest.raises(ValueError, match="format"):
        export_table(table, schema, tmp_path / "x.bin", "xlsx")
