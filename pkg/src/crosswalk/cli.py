"""Command-line workflow: ingest, schema, crosswalk, match, verify, serve.

Exit codes are part of the contract — scripts and schedulers branch on
them:

* 0 — success
* 1 — the work ran but validation found problems (or a version conflict)
* 2 — usage errors (click's own)
* 3 — files that cannot be read or parsed
* 4 — a probity check failed

Errors go to stderr as one machine-parseable JSON line followed by a
human sentence. ``--json`` asks any command for its result as JSON on
stdout. The project directory comes from ``--project`` or the
CROSSWALK_PROJECT environment variable.
"""
from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import engine, project as project_module, schema as schema_module
from .engine import (
    Crosswalk,
    CrosswalkStateError,
    CrosswalkValidationError,
    ProbityError,
)
from .ingest import (
    DuplicateHeaderError,
    EmptyFileError,
    IngestError,
    IngestOptions,
    ParseFailure,
    ingest_source,
)
from .project import ConflictError, ProjectError, ProjectStore
from .schema import (
    FieldConstraints,
    FieldDefinition,
    FieldType,
    SchemaError,
    SchemaModel,
    derive_categories,
    fingerprint,
)
from .scripts import ScriptError, parse_script, serialize_action
from .tabular import TabularError, cell_text

EXIT_VALIDATION = 1
EXIT_IO = 3
EXIT_PROBITY = 4


def _fail(code: int, kind: str, message: str, **extra):
    record = {"error": kind, "message": message}
    record.update(extra)
    click.echo(json.dumps(record, ensure_ascii=False), err=True)
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProbityError as exc:
            _fail(EXIT_PROBITY, "probity", str(exc))
        except (ConflictError, CrosswalkValidationError, CrosswalkStateError,
                SchemaError) as exc:
            _fail(EXIT_VALIDATION, "validation", str(exc))
        except ScriptError as exc:
            extra = {}
            if hasattr(exc, "offset"):
                extra["byte_offset"] = exc.offset
            if getattr(exc, "expected", None):
                extra["expected"] = list(exc.expected)
            _fail(EXIT_IO, "script", str(exc), **extra)
        except (IngestError, TabularError) as exc:
            extra = {}
            if isinstance(exc, ParseFailure):
                extra = {"row": exc.row, "byte_offset": exc.byte_offset}
            _fail(EXIT_IO, "parse", str(exc), **extra)
        except ProjectError as exc:
            _fail(EXIT_IO, "project", str(exc))
        except OSError as exc:
            _fail(EXIT_IO, "io", str(exc))
    return wrapper


def _store(project_dir: str | None) -> ProjectStore:
    root = project_dir or os.environ.get("CROSSWALK_PROJECT")
    if not root:
        _fail(EXIT_IO, "project",
              "no project directory; pass --project or set CROSSWALK_PROJECT")
    try:
        return ProjectStore(root)
    except ProjectError as exc:
        _fail(EXIT_IO, "project", str(exc))


project_option = click.option(
    "--project", "project_dir", default=None,
    help="Project directory (default: $CROSSWALK_PROJECT).",
)
json_option = click.option(
    "--json", "as_json", is_flag=True, help="Emit the result as JSON."
)


@click.group()
def cli():
    """Crosswalk tabular data from source schemas to curated ones."""


@cli.command()
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--name", default=None, help="Project name (default: directory name).")
@json_option
@handle_errors
def init(directory, name, as_json):
    """Create a project directory."""
    store = ProjectStore.create(directory, name or Path(directory).name)
    if as_json:
        click.echo(json.dumps({"project": str(store.root), "name": store.name}))
    else:
        click.echo(f"created project {store.name!r} at {store.root}")


@cli.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@project_option
@click.option("--task", default="default", help="Task to file the resource under.")
@click.option("--name", default=None, help="Resource name (default: file name).")
@click.option("--no-header", is_flag=True, help="Generate positional column names.")
@click.option("--header-row", type=int, default=None,
              help="Row holding column names (0-based).")
@click.option("--skip-rows", type=int, default=0,
              help="Leading rows to discard, declared explicitly.")
@click.option("--delimiter", default=",", help="CSV delimiter (default ',').")
@click.option("--encoding", default="utf-8", help="Text encoding (default utf-8).")
@click.option("--sheet", default=None, help="Workbook sheet to ingest (default: all).")
@click.option("--citation", default=None, help="Provenance note for the source.")
@json_option
@handle_errors
def ingest(file, project_dir, task, name, no_header, header_row, skip_rows,
           delimiter, encoding, sheet, citation, as_json):
    """Import a CSV, Parquet or XLSX source into the project."""
    store = _store(project_dir)
    options = IngestOptions(
        header_row=header_row, no_header=no_header, skip_rows=skip_rows,
        delimiter=delimiter, encoding=encoding, sheet_name=sheet,
        citation=citation,
    )
    created = []
    for table, record in ingest_source(file, options):
        suffix = f" [{record.sheet_name}]" if record.sheet_name else ""
        resource = store.add_resource(
            file, table, record, options, task=task,
            name=(name + suffix) if name else None,
        )
        created.append(resource)
    if as_json:
        click.echo(json.dumps(
            {"resources": [r.to_dict() for r in created]}, ensure_ascii=False
        ))
        return
    for r in created:
        click.echo(f"imported {r.name} as {r.uuid}")
        click.echo(f"  digest {r.source.digest}")
        click.echo(f"  {r.source.row_count} rows x {r.source.column_count} columns"
                   + (f", sheet {r.source.sheet_name!r}" if r.source.sheet_name else ""))
        click.echo(f"  schema {r.schema_uuid}")
        if r.crosswalk_uuid:
            click.echo(f"  matched existing crosswalk {r.crosswalk_uuid}")


# ----------------------------------------------------------------------
# schema

@cli.group()
def schema():
    """Inspect and edit schemas."""


@schema.command("list")
@project_option
@json_option
@handle_errors
def schema_list(project_dir, as_json):
    store = _store(project_dir)
    schemas = store.list_schemas()
    if as_json:
        click.echo(json.dumps([s.to_dict() for s in schemas], ensure_ascii=False))
        return
    for s in schemas:
        click.echo(f"{s.uuid}  v{s.version}  {s.name} ({len(s.fields)} fields)")


@schema.command("show")
@click.argument("uuid")
@project_option
@json_option
@handle_errors
def schema_show(uuid, project_dir, as_json):
    store = _store(project_dir)
    model = store.load_schema(uuid)
    if as_json:
        click.echo(json.dumps(model.to_dict(), ensure_ascii=False))
        return
    click.echo(f"{model.name} v{model.version} ({model.uuid})")
    click.echo(f"fingerprint {fingerprint(model)}")
    for f in model.fields:
        bits = [f.type.value]
        if f.constraints.required:
            bits.append("required")
        if f.constraints.unique:
            bits.append("unique")
        if f.constraints.categories:
            bits.append("terms: " + ", ".join(t.name for t in f.constraints.categories))
        click.echo(f"  {f.name}: {'; '.join(bits)}")


def _parse_field_spec(spec: str) -> FieldDefinition:
    """name:type plus optional :required / :unique flags."""
    parts = spec.split(":")
    name = parts[0]
    ftype = FieldType(parts[1]) if len(parts) > 1 and parts[1] else FieldType.STRING
    flags = set(parts[2:])
    unknown = flags - {"required", "unique", ""}
    if unknown:
        raise SchemaError(f"unknown field flag(s) {sorted(unknown)} in {spec!r}")
    return FieldDefinition(
        name=name, type=ftype,
        constraints=FieldConstraints(
            required="required" in flags, unique="unique" in flags
        ),
    )


@schema.command("new")
@click.argument("name")
@click.option("--field", "fields", multiple=True,
              help="Field as name:type[:required][:unique]; repeatable.")
@click.option("--from-json", "from_json", type=click.Path(exists=True),
              default=None, help="Full schema document to load instead.")
@project_option
@json_option
@handle_errors
def schema_new(name, fields, from_json, project_dir, as_json):
    """Create a destination schema."""
    store = _store(project_dir)
    if from_json:
        raw = json.loads(Path(from_json).read_text("utf-8"))
        raw.setdefault("name", name)
        model = SchemaModel.from_dict(raw)
    else:
        if not fields:
            raise SchemaError("give at least one --field or --from-json")
        model = SchemaModel(
            name=name, fields=tuple(_parse_field_spec(s) for s in fields)
        )
    store.save_schema(model)
    if as_json:
        click.echo(json.dumps(model.to_dict(), ensure_ascii=False))
    else:
        click.echo(f"created schema {model.name!r} as {model.uuid}")


@schema.command("set-type")
@click.argument("uuid")
@click.argument("field_name")
@click.argument("new_type")
@project_option
@json_option
@handle_errors
def schema_set_type(uuid, field_name, new_type, project_dir, as_json):
    """Change a field's declared type (a curatorial act, versioned)."""
    store = _store(project_dir)
    model = store.load_schema(uuid)
    fd = model.field(field_name)
    updated = model.with_field(FieldDefinition(
        name=fd.name, type=FieldType(new_type), title=fd.title,
        description=fd.description, constraints=fd.constraints,
    ))
    stored = store.save_schema(updated, expected_version=model.version)
    if as_json:
        click.echo(json.dumps(stored.to_dict(), ensure_ascii=False))
    else:
        click.echo(f"{field_name} is now {new_type} (schema v{stored.version})")


@schema.command("categorise")
@click.argument("uuid")
@click.argument("field_name")
@click.option("--resource", "resource_uuid", required=True,
              help="Resource whose data supplies the terms.")
@click.option("--boolean", is_flag=True,
              help="Use presence/absence terms instead of unique values.")
@project_option
@json_option
@handle_errors
def schema_categorise(uuid, field_name, resource_uuid, boolean, project_dir,
                      as_json):
    """Fill a field's category terms from the values seen in a resource."""
    store = _store(project_dir)
    model = store.load_schema(uuid)
    resource = store.get_resource(resource_uuid)
    table = store.resource_table(resource)
    terms = derive_categories(
        table, field_name, mode="boolean" if boolean else "unique"
    )
    fd = model.field(field_name)
    updated = model.with_field(FieldDefinition(
        name=fd.name, type=fd.type, title=fd.title, description=fd.description,
        constraints=FieldConstraints(
            required=fd.constraints.required, unique=fd.constraints.unique,
            minimum=fd.constraints.minimum, maximum=fd.constraints.maximum,
            categories=terms, default=fd.constraints.default,
        ),
    ))
    stored = store.save_schema(updated, expected_version=model.version)
    if as_json:
        click.echo(json.dumps(stored.to_dict(), ensure_ascii=False))
    else:
        click.echo(f"{field_name} takes {len(terms)} term(s): "
                   + ", ".join(t.name for t in terms))


# ----------------------------------------------------------------------
# crosswalk

@cli.group()
def crosswalk():
    """Author, validate and run crosswalks."""


@crosswalk.command("new")
@click.option("--resource", "resource_uuid", required=True)
@click.option("--dest", "dest_uuid", required=True, help="Destination schema uuid.")
@click.option("--name", default=None)
@project_option
@json_option
@handle_errors
def crosswalk_new(resource_uuid, dest_uuid, name, project_dir, as_json):
    store = _store(project_dir)
    resource = store.get_resource(resource_uuid)
    source_schema = store.load_schema(resource.schema_uuid)
    dest_schema = store.load_schema(dest_uuid)
    cw = engine.new_crosswalk(
        name or f"{resource.name} -> {dest_schema.name}", source_schema, dest_schema
    )
    store.save_crosswalk(cw)
    if as_json:
        click.echo(json.dumps(cw.to_dict(), ensure_ascii=False))
    else:
        click.echo(f"created crosswalk {cw.uuid} (draft)")


def _load_context(store: ProjectStore, cw: Crosswalk):
    """Source/dest schemas for a crosswalk, via any matching resource."""
    dest_schema = store.load_schema(cw.dest_schema_uuid)
    for resource in store.resources():
        source_schema = store.load_schema(resource.schema_uuid)
        if fingerprint(source_schema) == cw.source_fingerprint:
            return resource, source_schema, dest_schema
    raise ProjectError(
        f"no resource in this project matches crosswalk {cw.name!r}"
    )


@crosswalk.command("add")
@click.argument("uuid")
@click.argument("script", required=False)
@click.option("--file", "script_file", type=click.Path(exists=True), default=None,
              help="Read scripts from a file: one per line, # comments allowed.")
@project_option
@json_option
@handle_errors
def crosswalk_add(uuid, script, script_file, project_dir, as_json):
    """Append script(s) to a crosswalk."""
    if (script is None) == (script_file is None):
        raise click.UsageError("give one script argument or --file, not both")
    store = _store(project_dir)
    cw = store.load_crosswalk(uuid)
    _, source_schema, dest_schema = _load_context(store, cw)
    texts = []
    if script is not None:
        texts.append(script)
    else:
        for line in Path(script_file).read_text("utf-8").splitlines():
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            texts.append(stripped)
    for text in texts:
        cw = engine.add_action(cw, text, source_schema, dest_schema)
    stored = store.save_crosswalk(cw, expected_version=cw.version)
    if as_json:
        click.echo(json.dumps(stored.to_dict(), ensure_ascii=False))
    else:
        for text in texts:
            click.echo(f"added: {serialize_action(parse_script(text))}")
        click.echo(f"{len(stored.actions)} script(s), status {stored.status}")


@crosswalk.command("show")
@click.argument("uuid")
@project_option
@json_option
@handle_errors
def crosswalk_show(uuid, project_dir, as_json):
    store = _store(project_dir)
    cw = store.load_crosswalk(uuid)
    if as_json:
        click.echo(json.dumps(cw.to_dict(), ensure_ascii=False))
        return
    click.echo(f"{cw.name} ({cw.uuid}) — {cw.status}, v{cw.version}")
    click.echo(f"source fingerprint {cw.source_fingerprint}")
    click.echo(f"destination schema {cw.dest_schema_uuid}")
    for i, text in enumerate(cw.scripts()):
        click.echo(f"  {i:2}  {text}")


@crosswalk.command("validate")
@click.argument("uuid")
@project_option
@json_option
@handle_errors
def crosswalk_validate(uuid, project_dir, as_json):
    """Validate every script and destination coverage; mark validated."""
    store = _store(project_dir)
    cw = store.load_crosswalk(uuid)
    _, source_schema, dest_schema = _load_context(store, cw)
    validated, warnings = engine.validate_crosswalk(cw, source_schema, dest_schema)
    stored = store.save_crosswalk(validated, expected_version=validated.version)
    if as_json:
        click.echo(json.dumps(
            {"uuid": stored.uuid, "status": stored.status, "warnings": warnings},
            ensure_ascii=False,
        ))
        return
    click.echo(f"crosswalk {stored.name!r} validated")
    for w in warnings:
        click.echo(f"  warning: {w}")


@crosswalk.command("run")
@click.argument("uuid")
@click.option("--resource", "resource_uuid", default=None,
              help="Resource to transform (default: any matching one).")
@click.option("--format", "out_format", default="csv",
              type=click.Choice(["csv", "parquet"]))
@click.option("--threads", type=int, default=1)
@project_option
@json_option
@handle_errors
def crosswalk_run(uuid, resource_uuid, out_format, threads, project_dir, as_json):
    """Transform a resource and store the output with its audit trail."""
    store = _store(project_dir)
    cw = store.load_crosswalk(uuid)
    if resource_uuid is None:
        resource, _, _ = _load_context(store, cw)
        resource_uuid = resource.uuid
    record, result = project_module.run_transform(
        store, resource_uuid, cw.uuid, format=out_format, threads=threads
    )
    payload = {
        "transform": record.to_dict(),
        "warnings": list(result.warnings),
        "coercion_failures": len(result.coercion.failures),
        "validation": result.validation.to_dict(),
    }
    if as_json:
        click.echo(json.dumps(payload, ensure_ascii=False))
    else:
        click.echo(f"transform {record.uuid}")
        click.echo(f"  output {record.output_path}")
        click.echo(f"  digest {record.output_digest}")
        click.echo(f"  {record.row_count} rows x {record.column_count} columns")
        for w in result.warnings:
            click.echo(f"  warning: {w}")
        if not result.validation.ok:
            for v in result.validation.violations:
                click.echo(f"  violation: {v.message}")
    if not result.validation.ok:
        sys.exit(EXIT_VALIDATION)


# ----------------------------------------------------------------------

@cli.command()
@click.argument("resource_uuid")
@project_option
@json_option
@handle_errors
def match(resource_uuid, project_dir, as_json):
    """List validated crosswalks whose source shape fits a resource."""
    store = _store(project_dir)
    resource = store.get_resource(resource_uuid)
    source_schema = store.load_schema(resource.schema_uuid)
    matches = store.match_crosswalks(fingerprint(source_schema))
    if as_json:
        click.echo(json.dumps([c.to_dict() for c in matches], ensure_ascii=False))
        return
    if not matches:
        click.echo("no matching crosswalks")
        return
    for c in matches:
        click.echo(f"{c.uuid}  {c.name} ({len(c.actions)} scripts)")


@cli.command()
@click.argument("transform_uuid")
@click.option("--threads", type=int, default=1)
@project_option
@json_option
@handle_errors
def verify(transform_uuid, threads, project_dir, as_json):
    """Replay a transform and prove its input and output digests."""
    store = _store(project_dir)
    outcome = project_module.verify_transform(
        store, transform_uuid, threads=threads
    )
    if as_json:
        click.echo(json.dumps(outcome.to_dict(), ensure_ascii=False))
    else:
        click.echo(f"input bytes     : {'ok' if outcome.input_ok else 'FAILED'}")
        click.echo(f"output file     : {'ok' if outcome.output_file_ok else 'FAILED'}")
        click.echo(f"replay digest   : {'ok' if outcome.replay_ok else 'FAILED'}")
        for d in outcome.details:
            click.echo(f"  {d}")
    if not outcome.ok:
        sys.exit(EXIT_PROBITY)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8445)
@project_option
@handle_errors
def serve(host, port, project_dir):
    """Serve the project over HTTP for the browser workspace."""
    store = _store(project_dir)
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(store.root), host=host, port=port)


def main():
    cli(prog_name="xwalk")


if __name__ == "__main__":
    main()
