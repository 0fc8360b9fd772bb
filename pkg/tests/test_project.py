"""Project store: registry, blobs, versioned writes, transform probity."""
import json

import pytest

from crosswalk.engine import (
    ProbityError,
    add_action,
    new_crosswalk,
    validate_crosswalk,
)
from crosswalk.ingest import IngestOptions, hash_bytes, ingest_source
from crosswalk.project import (
    ASSIGNED,
    IMPORTED,
    TRANSFORMED,
    ConflictError,
    ProjectError,
    ProjectStore,
    TransformRecord,
    run_transform,
    verify_transform,
)
from crosswalk.schema import FieldDefinition, SchemaModel, fingerprint

CSV_A = "name,qty\nalpha,1\nbeta,2\n"
CSV_B = "name,qty\ngamma,3\ndelta,\n"


def new_store(tmp_path):
    return ProjectStore.create(tmp_path / "proj", "test-project")


def register(store, tmp_path, text, filename, task="default", name=None):
    path = tmp_path / filename
    path.write_text(text, "utf-8")
    (table, record), = ingest_source(path)
    return store.add_resource(
        path, table, record, IngestOptions(), task=task, name=name
    )


def author_crosswalk(store, resource, scripts):
    source = store.load_schema(resource.schema_uuid)
    dest = SchemaModel(name="out", fields=(
        FieldDefinition("label"), FieldDefinition("amount"),
    ))
    dest = store.save_schema(dest)
    cw = new_crosswalk("map", source, dest)
    for script in scripts:
        cw = add_action(cw, script, source, dest)
    cw, _ = validate_crosswalk(cw, source, dest)
    return store.save_crosswalk(cw)


DEFAULT_SCRIPTS = ["RENAME > 'label' < ['name']", "RENAME > 'amount' < ['qty']"]


# ----------------------------------------------------------------------
# store basics

def test_create_then_open(tmp_path):
    store = new_store(tmp_path)
    assert store.name == "test-project"
    again = ProjectStore(store.root)
    assert again.name == "test-project"
    assert again.tasks() == []


def test_open_requires_an_initialised_directory(tmp_path):
    with pytest.raises(ProjectError, match="project"):
        _ = ProjectStore(tmp_path / "nowhere")._project()


def test_blobs_are_content_addressed(tmp_path):
    store = new_store(tmp_path)
    digest = store.store_blob(b"hello")
    assert digest == hash_bytes(b"hello")
    assert store.blob_path(digest).exists()
    assert store.load_blob(digest) == b"hello"
    # storing the same bytes twice is a no-op, not an error
    assert store.store_blob(b"hello") == digest


def test_load_blob_rejects_corruption(tmp_path):
    store = new_store(tmp_path)
    digest = store.store_blob(b"hello")
    store.blob_path(digest).write_bytes(b"tampered")
    with pytest.raises(ProbityError):
        store.load_blob(digest)


# ----------------------------------------------------------------------
# resources

def test_add_resource_registers_everything(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv", task="reliefs")

    assert resource.state == IMPORTED
    assert resource.task == "reliefs"
    assert store.tasks() == ["reliefs"]
    schema = store.load_schema(resource.schema_uuid)
    assert schema.field_names == ["name", "qty"]
    assert store.load_blob(resource.source.digest).decode() == CSV_A
    assert store.get_resource(resource.uuid).uuid == resource.uuid
    assert [r.uuid for r in store.resources("reliefs")] == [resource.uuid]
    assert store.resources("elsewhere") == []


def test_add_resource_catches_files_changing_underfoot(tmp_path):
    store = new_store(tmp_path)
    path = tmp_path / "mut.csv"
    path.write_text(CSV_A, "utf-8")
    (table, record), = ingest_source(path)
    path.write_text(CSV_B, "utf-8")
    with pytest.raises(ProbityError, match="changed between"):
        store.add_resource(path, table, record, IngestOptions())


def test_resource_table_replays_the_exact_import(tmp_path):
    store = new_store(tmp_path)
    path = tmp_path / "a.csv"
    path.write_text(CSV_A, "utf-8")
    (table, record), = ingest_source(path)
    resource = store.add_resource(path, table, record, IngestOptions())
    replayed = store.resource_table(resource)
    assert replayed == table


def test_resource_table_honours_ingest_options(tmp_path):
    store = new_store(tmp_path)
    path = tmp_path / "b.csv"
    path.write_text("junk line\nname;qty\nalpha;1\n", "utf-8")
    options = IngestOptions(skip_rows=1, delimiter=";")
    (table, record), = ingest_source(path, options)
    resource = store.add_resource(path, table, record, options)
    replayed = store.resource_table(resource)
    assert replayed.column_names == ["name", "qty"]
    assert replayed.cells("name") == ("alpha",)


def test_update_resource_bumps_the_registry(tmp_path):
    from dataclasses import replace
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    before = store._project()["version"]
    store.update_resource(replace(resource, state="ready"))
    assert store.get_resource(resource.uuid).state == "ready"
    assert store._project()["version"] == before + 1


# ----------------------------------------------------------------------
# optimistic versioning

def test_schema_conflicts_are_detected(tmp_path):
    store = new_store(tmp_path)
    schema = store.save_schema(
        SchemaModel(name="s", fields=(FieldDefinition("a"),)))
    edit_one = schema.with_field(FieldDefinition("a", title="first"))
    edit_two = schema.with_field(FieldDefinition("a", title="second"))
    store.save_schema(edit_one, expected_version=1)
    with pytest.raises(ConflictError) as err:
        store.save_schema(edit_two, expected_version=1)
    assert (err.value.kind, err.value.stored, err.value.expected) \
        == ("schema", 2, 1)


def test_schema_identical_retry_is_not_a_conflict(tmp_path):
    store = new_store(tmp_path)
    schema = store.save_schema(
        SchemaModel(name="s", fields=(FieldDefinition("a"),)))
    edit = schema.with_field(FieldDefinition("a", title="t"))
    first = store.save_schema(edit, expected_version=1)
    assert first.version == 2
    # the client never saw the ack and sends the same write again
    second = store.save_schema(edit, expected_version=1)
    assert second.version == 2
    assert second.to_dict() == first.to_dict()


def test_crosswalk_conflicts_and_retries(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    source = store.load_schema(resource.schema_uuid)
    dest = store.save_schema(
        SchemaModel(name="out", fields=(FieldDefinition("label"),)))
    cw = store.save_crosswalk(new_crosswalk("map", source, dest))

    edited = add_action(cw, "RENAME > 'label' < ['name']", source, dest)
    saved = store.save_crosswalk(edited, expected_version=1)
    assert saved.version == 2
    # identical retry passes, a different edit at the same version loses
    assert store.save_crosswalk(edited, expected_version=1).version == 2
    other = add_action(cw, "DEBLANK", source, dest)
    with pytest.raises(ConflictError, match="reload before writing"):
        store.save_crosswalk(other, expected_version=1)


# ----------------------------------------------------------------------
# matching and auto-assignment

def test_match_finds_validated_crosswalks_only(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    source = store.load_schema(resource.schema_uuid)
    dest = store.save_schema(
        SchemaModel(name="out", fields=(FieldDefinition("label"),)))
    draft = new_crosswalk("draft", source, dest)
    draft = add_action(draft, "RENAME > 'label' < ['name']", source, dest)
    store.save_crosswalk(draft)
    assert store.match_crosswalks(fingerprint(source)) == []

    validated, _ = validate_crosswalk(draft, source, dest)
    store.save_crosswalk(validated)
    matches = store.match_crosswalks(fingerprint(source))
    assert [c.uuid for c in matches] == [validated.uuid]
    assert store.match_crosswalks(fingerprint(source), "not-that-dest") == []
    assert store.match_crosswalks("0" * 128) == []


def test_new_resource_with_known_shape_is_auto_assigned(tmp_path):
    store = new_store(tmp_path)
    first = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, first, DEFAULT_SCRIPTS)

    second = register(store, tmp_path, CSV_B, "b.csv")
    assert second.state == ASSIGNED
    assert second.crosswalk_uuid == cw.uuid
    # the first resource predates the crosswalk and stays unassigned
    assert store.get_resource(first.uuid).state == IMPORTED


# ----------------------------------------------------------------------
# transforms and verification

def test_run_transform_records_the_probity_chain(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, resource, DEFAULT_SCRIPTS)

    record, result = run_transform(store, resource.uuid, cw.uuid)
    assert result.ok
    assert record.input_digest == resource.source.digest
    assert record.row_count == 2 and record.column_count == 2
    assert record.format == "csv"
    out = store.root / "transforms" / "data" / f"{record.uuid}.csv"
    assert str(out) == record.output_path and out.exists()
    assert record.output_digest == hash_bytes(out.read_bytes())
    assert [a.action for a in record.audit] == ["RENAME", "RENAME"]
    assert store.get_resource(resource.uuid).state == TRANSFORMED
    assert store.load_transform(record.uuid).output_digest == record.output_digest


def test_run_transform_uses_the_assignment_when_unspecified(tmp_path):
    store = new_store(tmp_path)
    seed = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, seed, DEFAULT_SCRIPTS)
    assigned = register(store, tmp_path, CSV_B, "b.csv")
    record, result = run_transform(store, assigned.uuid)
    assert record.crosswalk_uuid == cw.uuid
    assert result.table.cells("label") == ("gamma", "delta")


def test_run_transform_with_nothing_to_match_fails_clearly(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    with pytest.raises(ProjectError, match="no validated crosswalk"):
        run_transform(store, resource.uuid)


def test_verify_passes_on_an_untouched_transform(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, resource, DEFAULT_SCRIPTS)
    record, _ = run_transform(store, resource.uuid, cw.uuid)

    outcome = verify_transform(store, record.uuid)
    assert outcome.ok
    assert outcome.to_dict() == {
        "transform_uuid": record.uuid,
        "ok": True, "input_ok": True,
        "output_file_ok": True, "replay_ok": True,
        "details": [],
    }


def test_verify_flags_a_tampered_output_file(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, resource, DEFAULT_SCRIPTS)
    record, _ = run_transform(store, resource.uuid, cw.uuid)

    path = store.root / "transforms" / "data" / f"{record.uuid}.csv"
    path.write_text(path.read_text("utf-8") + "extra,row\n", "utf-8")
    outcome = verify_transform(store, record.uuid)
    assert not outcome.ok
    assert outcome.input_ok and outcome.replay_ok
    assert not outcome.output_file_ok
    assert any("no longer matches" in d for d in outcome.details)


def test_verify_flags_missing_output_and_tampered_source(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, resource, DEFAULT_SCRIPTS)
    record, _ = run_transform(store, resource.uuid, cw.uuid)

    (store.root / "transforms" / "data" / f"{record.uuid}.csv").unlink()
    store.blob_path(record.input_digest).write_bytes(b"evil")
    outcome = verify_transform(store, record.uuid)
    assert not outcome.input_ok
    assert not outcome.output_file_ok
    assert not outcome.replay_ok          # replay cannot run on bad input
    assert len(outcome.details) == 2


def test_transform_record_round_trips(tmp_path):
    store = new_store(tmp_path)
    resource = register(store, tmp_path, CSV_A, "a.csv")
    cw = author_crosswalk(store, resource, DEFAULT_SCRIPTS)
    record, _ = run_transform(store, resource.uuid, cw.uuid)
    again = TransformRecord.from_dict(
        json.loads(json.dumps(record.to_dict()))
    )
    assert again == record
