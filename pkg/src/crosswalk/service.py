"""HTTP service over a project store, for the browser workspace.

The API hands the workspace everything it needs to build a crosswalk:
action shapes for the palette, row previews, schemas for the mapping
panes, draft persistence with optimistic versioning, dry-runs, full
transforms and the probity verification. Errors follow one shape —
``{"error": kind, "message": ...}`` — with 400 for unreadable uploads,
404 for unknown ids, 409 for version conflicts and probity breaks, and
422 for scripts or schemas that do not validate.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, File, Form, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response

from . import engine, project as project_module
from .engine import (
    Crosswalk,
    CrosswalkStateError,
    CrosswalkValidationError,
    ProbityError,
    apply_crosswalk,
)
from .ingest import IngestError, IngestOptions, ParseFailure, ingest_source
from .project import ConflictError, ProjectError, ProjectStore
from .schema import SchemaError, SchemaModel, fingerprint
from .scripts import (
    ScriptError,
    all_action_shapes,
    parse_script,
    validate_structure,
)
from .tabular import Cell, Table, cell_text

__all__ = ["create_app"]


def _json_cell(cell: Cell) -> Any:
    """Cells for the wire: empty stays null, text stays text, the typed
    values render as their canonical text so the UI never guesses."""
    if cell is None:
        return None
    if isinstance(cell, str):
        return cell
    if isinstance(cell, tuple):
        return [_json_cell(e) for e in cell]
    return cell_text(cell)


def _table_payload(table: Table, rows: int) -> dict:
    preview = table.preview(rows)
    return {
        "columns": preview.column_names,
        "row_labels": list(preview.row_labels),
        "rows": [[_json_cell(c) for c in row] for row in preview.rows()],
        "total_rows": table.row_count,
    }


def _error(status: int, kind: str, message: str, **extra) -> JSONResponse:
    payload = {"error": kind, "message": message}
    payload.update(extra)
    return JSONResponse(payload, status_code=status)


def create_app(project_root: str | Path) -> FastAPI:
    store = ProjectStore(project_root)
    app = FastAPI(title="crosswalk workspace API")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    # ------------------------------------------------------------------
    # error translation

    @app.exception_handler(ConflictError)
    async def _conflict(request, exc: ConflictError):
        return _error(409, "conflict", str(exc),
                      stored_version=exc.stored, expected_version=exc.expected)

    @app.exception_handler(ProbityError)
    async def _probity(request, exc: ProbityError):
        return _error(409, "probity", str(exc))

    @app.exception_handler(ProjectError)
    async def _project(request, exc: ProjectError):
        missing = str(exc).startswith("no ")
        return _error(404 if missing else 400, "project", str(exc))

    @app.exception_handler(ScriptError)
    async def _script(request, exc: ScriptError):
        extra = {}
        if hasattr(exc, "offset"):
            extra["byte_offset"] = exc.offset
        if getattr(exc, "expected", None):
            extra["expected"] = list(exc.expected)
        return _error(422, "script", str(exc), **extra)

    @app.exception_handler(CrosswalkValidationError)
    async def _cw_invalid(request, exc: CrosswalkValidationError):
        return _error(422, "validation", str(exc), problems=exc.problems)

    @app.exception_handler(CrosswalkStateError)
    async def _cw_state(request, exc: CrosswalkStateError):
        return _error(409, "state", str(exc))

    @app.exception_handler(SchemaError)
    async def _schema_error(request, exc: SchemaError):
        return _error(422, "schema", str(exc))

    @app.exception_handler(IngestError)
    async def _ingest_error(request, exc: IngestError):
        extra = {}
        if isinstance(exc, ParseFailure):
            extra = {"row": exc.row, "byte_offset": exc.byte_offset}
        return _error(400, "parse", str(exc), **extra)

    # ------------------------------------------------------------------
    # metadata

    @app.get("/actions")
    def actions():
        return {"actions": [s.to_dict() for s in all_action_shapes()]}

    @app.get("/project")
    def project_info():
        return {
            "name": store.name,
            "tasks": store.tasks(),
            "resources": [r.to_dict() for r in store.resources()],
        }

    # ------------------------------------------------------------------
    # resources

    @app.post("/resources", status_code=201)
    async def upload_resource(
        file: UploadFile = File(...),
        task: str = Form("default"),
        name: str = Form(None),
        no_header: bool = Form(False),
        header_row: int = Form(None),
        skip_rows: int = Form(0),
        delimiter: str = Form(","),
        encoding: str = Form("utf-8"),
        sheet: str = Form(None),
        citation: str = Form(None),
    ):
        data = await file.read()
        if not data:
            return _error(400, "parse", "uploaded file is empty")
        options = IngestOptions(
            header_row=header_row, no_header=no_header, skip_rows=skip_rows,
            delimiter=delimiter, encoding=encoding, sheet_name=sheet,
            citation=citation,
        )
        # Land the upload next to the store so ingest can hash the bytes.
        upload_dir = store.root / "sources"
        base = Path(file.filename or "data.csv").name
        tmp = upload_dir / f"upload-{_fresh_uuid()[:8]}-{base}"
        tmp.write_bytes(data)
        try:
            created = []
            for table, record in ingest_source(tmp, options):
                suffix = f" [{record.sheet_name}]" if record.sheet_name else ""
                resource = store.add_resource(
                    tmp, table, record, options, task=task,
                    name=((name or file.filename or "upload") + suffix)
                    if record.sheet_name else (name or file.filename or "upload"),
                )
                created.append(resource)
        finally:
            tmp.unlink(missing_ok=True)
        return {"resources": [r.to_dict() for r in created]}

    @app.get("/resources")
    def list_resources(task: str | None = None):
        return {"resources": [r.to_dict() for r in store.resources(task)]}

    @app.get("/resources/{uuid}")
    def get_resource(uuid: str):
        return store.get_resource(uuid).to_dict()

    @app.get("/resources/{uuid}/preview")
    def preview_resource(uuid: str, rows: int = Query(50, ge=0, le=1000)):
        resource = store.get_resource(uuid)
        table = store.resource_table(resource)
        return _table_payload(table, rows)

    @app.get("/resources/{uuid}/schema")
    def get_resource_schema(uuid: str):
        resource = store.get_resource(uuid)
        model = store.load_schema(resource.schema_uuid)
        payload = model.to_dict()
        payload["fingerprint"] = fingerprint(model)
        return payload

    @app.put("/resources/{uuid}/schema")
    def put_resource_schema(uuid: str, body: dict = Body(...)):
        resource = store.get_resource(uuid)
        expected = body.get("version")
        if expected is None:
            return _error(422, "schema", "body must carry the version you edited")
        model = SchemaModel.from_dict({**body, "uuid": resource.schema_uuid})
        stored = store.save_schema(model, expected_version=expected)
        payload = stored.to_dict()
        payload["fingerprint"] = fingerprint(stored)
        return payload

    # ------------------------------------------------------------------
    # schemas (destination)

    @app.post("/schemas", status_code=201)
    def create_schema(body: dict = Body(...)):
        body.setdefault("uuid", None)
        if body["uuid"] is None:
            del body["uuid"]
            model = SchemaModel.from_dict({**body, "uuid": _fresh_uuid()})
        else:
            model = SchemaModel.from_dict(body)
        store.save_schema(model)
        return model.to_dict()

    @app.get("/schemas")
    def list_schemas():
        return {"schemas": [s.to_dict() for s in store.list_schemas()]}

    @app.get("/schemas/{uuid}")
    def get_schema(uuid: str):
        payload = store.load_schema(uuid).to_dict()
        payload["fingerprint"] = fingerprint(store.load_schema(uuid))
        return payload

    # ------------------------------------------------------------------
    # crosswalks

    @app.get("/crosswalks")
    def list_crosswalks(fingerprint_query: str | None = Query(None, alias="fingerprint"),
                        dest: str | None = None):
        if fingerprint_query:
            found = store.match_crosswalks(fingerprint_query, dest)
            return {"crosswalks": [c.to_dict() for c in found]}
        return {"crosswalks": [c.to_dict() for c, _ in store.list_crosswalks()]}

    @app.get("/crosswalks/{uuid}")
    def get_crosswalk(uuid: str):
        return store.load_crosswalk(uuid).to_dict()

    def _schemas_for(cw: Crosswalk) -> tuple[SchemaModel, SchemaModel]:
        dest_schema = store.load_schema(cw.dest_schema_uuid)
        for resource in store.resources():
            source_schema = store.load_schema(resource.schema_uuid)
            if fingerprint(source_schema) == cw.source_fingerprint:
                return source_schema, dest_schema
        raise ProjectError("no resource matches this crosswalk's source shape")

    @app.put("/crosswalks/{uuid}")
    def put_crosswalk(uuid: str, body: dict = Body(...)):
        """Create or update a draft. The body carries the version the
        client edited; a stale version earns a 409 and a reload."""
        exists = True
        try:
            store.load_crosswalk(uuid)
        except ProjectError:
            exists = False
        expected = body.get("version")
        if exists and expected is None:
            return _error(422, "validation",
                          "body must carry the version you edited")

        if "resource_uuid" in body and "source_fingerprint" not in body:
            resource = store.get_resource(body["resource_uuid"])
            body["source_fingerprint"] = fingerprint(
                store.load_schema(resource.schema_uuid)
            )
        for key in ("source_fingerprint", "dest_schema_uuid"):
            if key not in body:
                return _error(422, "validation", f"body is missing {key!r}")
        raw = {
            "uuid": uuid,
            "name": body.get("name", "untitled"),
            "source_fingerprint": body["source_fingerprint"],
            "dest_schema_uuid": body["dest_schema_uuid"],
            "status": "draft",
            "version": expected or 1,
            "scripts": body.get("scripts", []),
        }
        cw = Crosswalk.from_dict(raw)  # parses every script; 422 on bad ones
        source_schema, dest_schema = _schemas_for(cw)
        problems = []
        for i, action in enumerate(cw.actions):
            for v in engine._check_action(action, source_schema, dest_schema):
                problems.append(f"script {i}: {v}")
        if problems:
            raise CrosswalkValidationError(problems)
        stored = store.save_crosswalk(
            cw, expected_version=expected if exists else None
        )
        return stored.to_dict()

    @app.post("/crosswalks/{uuid}/validate")
    def validate_crosswalk_route(uuid: str):
        cw = store.load_crosswalk(uuid)
        source_schema, dest_schema = _schemas_for(cw)
        validated, warnings = engine.validate_crosswalk(
            cw, source_schema, dest_schema
        )
        stored = store.save_crosswalk(validated, expected_version=validated.version)
        return {"uuid": stored.uuid, "status": stored.status,
                "version": stored.version, "warnings": warnings}

    @app.post("/crosswalks/{uuid}/dry-run")
    def dry_run(uuid: str, rows: int = Query(50, ge=1, le=1000),
                resource: str | None = None):
        """Run the draft against the first rows of a matching resource.

        Whole-table actions see only the preview slice, so row drops and
        pivots are approximate; the response says so.
        """
        cw = store.load_crosswalk(uuid)
        source_schema, dest_schema = _schemas_for(cw)
        candidates = store.resources()
        if resource is not None:
            candidates = [store.get_resource(resource)]
        chosen = None
        for r in candidates:
            if fingerprint(store.load_schema(r.schema_uuid)) == cw.source_fingerprint:
                chosen = r
                break
        if chosen is None:
            raise ProjectError("no resource matches this crosswalk's source shape")
        table = store.resource_table(chosen).preview(rows)
        result = apply_crosswalk(
            cw, table, source_schema, dest_schema, allow_draft=True
        )
        approximate = any(
            a.action in ("DEBLANK", "DEDUPE", "DELETE_ROWS",
                         "PIVOT_CATEGORIES", "PIVOT_LONGER")
            for a in cw.actions
        )
        payload = _table_payload(result.table, rows)
        payload["warnings"] = list(result.warnings)
        payload["approximate"] = approximate
        payload["validation"] = result.validation.to_dict()
        return payload

    # ------------------------------------------------------------------
    # transforms

    @app.post("/resources/{uuid}/transform", status_code=201)
    def transform_resource(uuid: str, body: dict = Body(default={})):
        record, result = project_module.run_transform(
            store, uuid,
            body.get("crosswalk_uuid"),
            format=body.get("format", "csv"),
            threads=int(body.get("threads", 1)),
        )
        payload = record.to_dict()
        payload["warnings"] = list(result.warnings)
        payload["validation"] = result.validation.to_dict()
        payload["coercion_failures"] = len(result.coercion.failures)
        return payload

    @app.get("/transforms")
    def list_transforms():
        return {"transforms": [t.to_dict() for t in store.list_transforms()]}

    @app.get("/transforms/{uuid}")
    def get_transform(uuid: str):
        return store.load_transform(uuid).to_dict()

    @app.get("/transforms/{uuid}/download")
    def download_transform(uuid: str):
        record = store.load_transform(uuid)
        path = Path(record.output_path)
        if not path.exists():
            return _error(404, "project", f"no output file for {uuid}")
        media = "text/csv" if record.format == "csv" else "application/octet-stream"
        return FileResponse(path, media_type=media,
                            filename=f"{uuid}.{record.format}")

    @app.post("/transforms/{uuid}/verify")
    def verify_transform_route(uuid: str):
        return project_module.verify_transform(store, uuid).to_dict()

    @app.get("/export/bulk")
    def export_bulk():
        """Everything needed to audit the project, as one zip."""
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
            archive.writestr("project.json",
                             (store.root / "project.json").read_text("utf-8"))
            for sub in ("schemas", "crosswalks", "transforms"):
                for path in sorted((store.root / sub).glob("*.json")):
                    archive.writestr(f"{sub}/{path.name}", path.read_text("utf-8"))
            data_dir = store.root / "transforms" / "data"
            for path in sorted(data_dir.iterdir()) if data_dir.exists() else []:
                if path.is_file():
                    archive.writestr(f"transforms/data/{path.name}",
                                     path.read_bytes())
        return Response(
            buffer.getvalue(), media_type="application/zip",
            headers={"Content-Disposition":
                     'attachment; filename="project-export.zip"'},
        )

    return app


def _fresh_uuid() -> str:
    import uuid as uuid_module
    return str(uuid_module.uuid4())
