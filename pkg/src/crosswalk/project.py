"""On-disk project store and the run/verify orchestration.

A project is a directory a team can keep in sync however they like::

    project.json          name, task/resource registry, store version
    schemas/<uuid>.json
    crosswalks/<uuid>.json
    sources/<digest>      raw imported bytes, content-addressed
    transforms/<uuid>.json
    transforms/data/      exported outputs

Everything is UTF-8 JSON with a fixed key order, written atomically.
Mutations of versioned documents take the version the caller believes
is current and refuse to clobber anything newer — the caller merges and
retries. Raw source bytes are kept by digest so any transform can be
replayed from the exact input that produced it.
"""
from __future__ import annotations

import datetime as dt
import json
import os
import uuid as uuid_module
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .engine import (
    AuditRecord,
    Crosswalk,
    ProbityError,
    TransformResult,
    apply_crosswalk,
    export_table,
)
from .ingest import (
    DataSourceRecord,
    IngestOptions,
    hash_bytes,
    ingest_source,
)
from .schema import SchemaModel, derive_schema, fingerprint
from .tabular import Table

__all__ = [
    "ConflictError",
    "ProjectError",
    "ProjectStore",
    "ResourceRecord",
    "TransformRecord",
    "VerifyOutcome",
    "run_transform",
    "verify_transform",
]

# Resource lifecycle states.
IMPORTED = "imported"
READY = "ready"          # schema confirmed/edited by a curator
ASSIGNED = "assigned"    # a crosswalk is attached
TRANSFORMED = "transformed"


class ProjectError(Exception):
    pass


class ConflictError(ProjectError):
    """A versioned write lost the race; reload, merge, retry."""

    def __init__(self, kind: str, ident: str, stored: int, expected: int):
        self.kind = kind
        self.ident = ident
        self.stored = stored
        self.expected = expected
        super().__init__(
            f"{kind} {ident} is at version {stored}, not {expected}; "
            "reload before writing"
        )


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _write_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", "utf-8"
    )
    os.replace(tmp, path)


@dataclass(frozen=True)
class ResourceRecord:
    """One imported table and where it has got to."""

    uuid: str
    name: str
    task: str
    source: DataSourceRecord
    ingest: dict            # IngestOptions plus format, for exact replay
    schema_uuid: str
    state: str = IMPORTED
    crosswalk_uuid: str | None = None
    created_at: str = field(default_factory=_now)
    updated_at: str = field(default_factory=_now)

    def to_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "name": self.name,
            "task": self.task,
            "state": self.state,
            "schema_uuid": self.schema_uuid,
            "crosswalk_uuid": self.crosswalk_uuid,
            "source": self.source.to_dict(),
            "ingest": self.ingest,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ResourceRecord":
        return cls(
            uuid=raw["uuid"],
            name=raw["name"],
            task=raw["task"],
            state=raw["state"],
            schema_uuid=raw["schema_uuid"],
            crosswalk_uuid=raw.get("crosswalk_uuid"),
            source=DataSourceRecord.from_dict(raw["source"]),
            ingest=raw.get("ingest", {}),
            created_at=raw["created_at"],
            updated_at=raw["updated_at"],
        )


@dataclass(frozen=True)
class TransformRecord:
    """The probity chain for one published output."""

    uuid: str
    resource_uuid: str
    crosswalk_uuid: str
    input_digest: str
    output_digest: str
    output_path: str
    format: str
    executed_at: str
    row_count: int
    column_count: int
    audit: tuple = ()

    def to_dict(self) -> dict:
        return {
            "uuid": self.uuid,
            "resource_uuid": self.resource_uuid,
            "crosswalk_uuid": self.crosswalk_uuid,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "output_path": self.output_path,
            "format": self.format,
            "executed_at": self.executed_at,
            "row_count": self.row_count,
            "column_count": self.column_count,
            "audit": [a.to_dict() for a in self.audit],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TransformRecord":
        return cls(
            uuid=raw["uuid"],
            resource_uuid=raw["resource_uuid"],
            crosswalk_uuid=raw["crosswalk_uuid"],
            input_digest=raw["input_digest"],
            output_digest=raw["output_digest"],
            output_path=raw["output_path"],
            format=raw["format"],
            executed_at=raw["executed_at"],
            row_count=raw["row_count"],
            column_count=raw["column_count"],
            audit=tuple(
                AuditRecord(**a) for a in raw.get("audit", ())
            ),
        )


class ProjectStore:
    """Files under one directory; no daemon, no lockfile, no magic."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not (self.root / "project.json").exists():
            raise ProjectError(f"{self.root} is not a project (no project.json)")

    # ------------------------------------------------------------------
    @classmethod
    def create(cls, root: str | Path, name: str) -> "ProjectStore":
        root = Path(root)
        if (root / "project.json").exists():
            raise ProjectError(f"{root} already holds a project")
        for sub in ("schemas", "crosswalks", "sources", "transforms",
                    "transforms/data"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        _write_json(root / "project.json", {
            "name": name,
            "version": 1,
            "created_at": _now(),
            "tasks": [],
            "resources": [],
        })
        return cls(root)

    # ------------------------------------------------------------------
    # project registry

    def _project(self) -> dict:
        return json.loads((self.root / "project.json").read_text("utf-8"))

    def _save_project(self, payload: dict) -> None:
        _write_json(self.root / "project.json", payload)

    @property
    def name(self) -> str:
        return self._project()["name"]

    def tasks(self) -> list[str]:
        return list(self._project()["tasks"])

    def resources(self, task: str | None = None) -> list[ResourceRecord]:
        records = [
            ResourceRecord.from_dict(r) for r in self._project()["resources"]
        ]
        if task is not None:
            records = [r for r in records if r.task == task]
        return records

    def get_resource(self, uuid: str) -> ResourceRecord:
        for raw in self._project()["resources"]:
            if raw["uuid"] == uuid:
                return ResourceRecord.from_dict(raw)
        raise ProjectError(f"no resource {uuid}")

    def update_resource(self, record: ResourceRecord) -> None:
        payload = self._project()
        for i, raw in enumerate(payload["resources"]):
            if raw["uuid"] == record.uuid:
                payload["resources"][i] = replace(
                    record, updated_at=_now()
                ).to_dict()
                payload["version"] += 1
                self._save_project(payload)
                return
        raise ProjectError(f"no resource {record.uuid}")

    # ------------------------------------------------------------------
    # blobs

    def blob_path(self, digest: str) -> Path:
        return self.root / "sources" / digest

    def store_blob(self, data: bytes) -> str:
        digest = hash_bytes(data)
        path = self.blob_path(digest)
        if not path.exists():
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return digest

    def load_blob(self, digest: str) -> bytes:
        path = self.blob_path(digest)
        if not path.exists():
            raise ProbityError(f"source bytes for digest {digest[:16]}… are gone")
        data = path.read_bytes()
        if hash_bytes(data) != digest:
            raise ProbityError(
                f"stored bytes for digest {digest[:16]}… fail their hash"
            )
        return data

    # ------------------------------------------------------------------
    # resources

    def add_resource(self, source_path: str | Path, table: Table,
                     record: DataSourceRecord, options: IngestOptions,
                     *, task: str = "default",
                     name: str | None = None) -> ResourceRecord:
        """Register an ingested table: blob, derived schema, registry row.

        If a validated crosswalk already exists for the table's column
        shape, it is assigned on the spot — the whole point of binding
        crosswalks to fingerprints is that next month's file needs no
        new authoring.
        """
        data = Path(source_path).read_bytes()
        digest = self.store_blob(data)
        if digest != record.digest:
            raise ProbityError("file changed between hashing and registration")
        schema = derive_schema(
            table,
            name=name or Path(source_path).stem,
            source_digest=digest,
        )
        self.save_schema(schema)
        ingest_payload = dict(options.to_dict())
        ingest_payload["format"] = record.format
        if record.sheet_name is not None:
            ingest_payload["sheet_name"] = record.sheet_name
        resource = ResourceRecord(
            uuid=str(uuid_module.uuid4()),
            name=name or Path(source_path).name,
            task=task,
            source=record,
            ingest=ingest_payload,
            schema_uuid=schema.uuid,
        )
        matches = self.match_crosswalks(fingerprint(schema))
        if matches:
            resource = replace(
                resource, crosswalk_uuid=matches[0].uuid, state=ASSIGNED
            )
        payload = self._project()
        if task not in payload["tasks"]:
            payload["tasks"].append(task)
        payload["resources"].append(resource.to_dict())
        payload["version"] += 1
        self._save_project(payload)
        return resource

    def resource_table(self, resource: ResourceRecord) -> Table:
        """Re-ingest a resource from its stored bytes, exactly as imported."""
        data = self.load_blob(resource.source.digest)  # digest-checked
        ingest = dict(resource.ingest)
        fmt = ingest.pop("format", resource.source.format)
        options = IngestOptions.from_dict(ingest)
        suffix = f".{fmt}"
        tmp = self.root / "sources" / (resource.source.digest + ".replay" + suffix)
        tmp.write_bytes(data)
        try:
            pairs = ingest_source(tmp, options, format=fmt)
        finally:
            tmp.unlink(missing_ok=True)
        if resource.source.sheet_name is not None:
            for table, rec in pairs:
                if rec.sheet_name == resource.source.sheet_name:
                    return table
            raise ProjectError(
                f"sheet {resource.source.sheet_name!r} missing on replay"
            )
        return pairs[0][0]

    # ------------------------------------------------------------------
    # schemas

    def save_schema(self, schema: SchemaModel,
                    expected_version: int | None = None) -> SchemaModel:
        path = self.root / "schemas" / f"{schema.uuid}.json"
        if expected_version is not None and path.exists():
            stored = SchemaModel.from_dict(
                json.loads(path.read_text("utf-8"))
            )
            if stored.version != expected_version:
                if (stored.version == expected_version + 1
                        and stored.to_dict() == schema.to_dict()):
                    return stored  # identical retry; already applied
                raise ConflictError(
                    "schema", schema.uuid, stored.version, expected_version
                )
            schema = replace(schema, version=expected_version + 1)
        _write_json(path, schema.to_dict())
        return schema

    def load_schema(self, uuid: str) -> SchemaModel:
        path = self.root / "schemas" / f"{uuid}.json"
        if not path.exists():
            raise ProjectError(f"no schema {uuid}")
        return SchemaModel.from_dict(json.loads(path.read_text("utf-8")))

    def list_schemas(self) -> list[SchemaModel]:
        out = []
        for path in sorted((self.root / "schemas").glob("*.json")):
            out.append(SchemaModel.from_dict(json.loads(path.read_text("utf-8"))))
        return out

    # ------------------------------------------------------------------
    # crosswalks

    def save_crosswalk(self, crosswalk: Crosswalk,
                       expected_version: int | None = None) -> Crosswalk:
        path = self.root / "crosswalks" / f"{crosswalk.uuid}.json"
        if expected_version is not None and path.exists():
            raw = json.loads(path.read_text("utf-8"))
            stored_version = raw.get("version", 1)
            if stored_version != expected_version:
                candidate = replace(
                    Crosswalk.from_dict(raw), version=stored_version
                )
                mine = replace(crosswalk, version=stored_version)
                if (stored_version == expected_version + 1
                        and candidate.to_dict() == mine.to_dict()):
                    return candidate  # identical retry; already applied
                raise ConflictError(
                    "crosswalk", crosswalk.uuid, stored_version, expected_version
                )
            crosswalk = replace(crosswalk, version=expected_version + 1)
        payload = crosswalk.to_dict()
        payload["updated_at"] = _now()
        _write_json(path, payload)
        return crosswalk

    def load_crosswalk(self, uuid: str) -> Crosswalk:
        path = self.root / "crosswalks" / f"{uuid}.json"
        if not path.exists():
            raise ProjectError(f"no crosswalk {uuid}")
        return Crosswalk.from_dict(json.loads(path.read_text("utf-8")))

    def list_crosswalks(self) -> list[tuple[Crosswalk, str]]:
        """All crosswalks with their updated_at stamps."""
        out = []
        for path in sorted((self.root / "crosswalks").glob("*.json")):
            raw = json.loads(path.read_text("utf-8"))
            out.append((Crosswalk.from_dict(raw), raw.get("updated_at", "")))
        return out

    def match_crosswalks(self, source_fingerprint: str,
                         dest_schema_uuid: str | None = None) -> list[Crosswalk]:
        """Validated crosswalks for a source shape, newest first."""
        found = [
            (cw, stamp) for cw, stamp in self.list_crosswalks()
            if cw.status == "validated"
            and cw.source_fingerprint == source_fingerprint
            and (dest_schema_uuid is None or cw.dest_schema_uuid == dest_schema_uuid)
        ]
        found.sort(key=lambda pair: pair[1], reverse=True)
        return [cw for cw, _ in found]

    # ------------------------------------------------------------------
    # transforms

    def save_transform(self, record: TransformRecord) -> None:
        _write_json(
            self.root / "transforms" / f"{record.uuid}.json", record.to_dict()
        )

    def load_transform(self, uuid: str) -> TransformRecord:
        path = self.root / "transforms" / f"{uuid}.json"
        if not path.exists():
            raise ProjectError(f"no transform {uuid}")
        return TransformRecord.from_dict(json.loads(path.read_text("utf-8")))

    def list_transforms(self) -> list[TransformRecord]:
        out = []
        for path in sorted((self.root / "transforms").glob("*.json")):
            out.append(TransformRecord.from_dict(json.loads(path.read_text("utf-8"))))
        return out


# ----------------------------------------------------------------------
# orchestration

def run_transform(store: ProjectStore, resource_uuid: str,
                  crosswalk_uuid: str | None = None, *,
                  format: str = "csv",
                  threads: int = 1) -> tuple[TransformRecord, TransformResult]:
    """Apply a crosswalk to a stored resource and persist the output.

    The crosswalk comes from the argument, the resource's assignment, or
    a fingerprint match, in that order of preference.
    """
    resource = store.get_resource(resource_uuid)
    source_schema = store.load_schema(resource.schema_uuid)
    chosen = crosswalk_uuid or resource.crosswalk_uuid
    if chosen is None:
        matches = store.match_crosswalks(fingerprint(source_schema))
        if not matches:
            raise ProjectError(
                f"no validated crosswalk matches resource {resource.name!r}"
            )
        chosen = matches[0].uuid
    crosswalk = store.load_crosswalk(chosen)
    dest_schema = store.load_schema(crosswalk.dest_schema_uuid)
    table = store.resource_table(resource)

    result = apply_crosswalk(
        crosswalk, table, source_schema, dest_schema, threads=threads
    )
    transform_uuid = str(uuid_module.uuid4())
    out_path = store.root / "transforms" / "data" / f"{transform_uuid}.{format}"
    out_record = export_table(result.table, dest_schema, out_path, format)
    record = TransformRecord(
        uuid=transform_uuid,
        resource_uuid=resource.uuid,
        crosswalk_uuid=crosswalk.uuid,
        input_digest=resource.source.digest,
        output_digest=out_record.digest,
        output_path=str(out_path),
        format=format,
        executed_at=_now(),
        row_count=result.table.row_count,
        column_count=len(result.table.columns),
        audit=result.audit,
    )
    store.save_transform(record)
    store.update_resource(replace(
        resource, state=TRANSFORMED, crosswalk_uuid=crosswalk.uuid
    ))
    return record, result


@dataclass(frozen=True)
class VerifyOutcome:
    transform_uuid: str
    input_ok: bool
    output_file_ok: bool
    replay_ok: bool
    details: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.input_ok and self.output_file_ok and self.replay_ok

    def to_dict(self) -> dict:
        return {
            "transform_uuid": self.transform_uuid,
            "ok": self.ok,
            "input_ok": self.input_ok,
            "output_file_ok": self.output_file_ok,
            "replay_ok": self.replay_ok,
            "details": list(self.details),
        }


def verify_transform(store: ProjectStore, transform_uuid: str,
                     *, threads: int = 1) -> VerifyOutcome:
    """Prove a published output: bytes in, crosswalk, bytes out.

    Checks the stored source bytes against the recorded input digest,
    the output file against the recorded output digest, and replays the
    whole transform to confirm it still produces those bytes.
    """
    from .ingest import hash_file

    record = store.load_transform(transform_uuid)
    resource = store.get_resource(record.resource_uuid)
    details: list[str] = []

    try:
        data = store.load_blob(record.input_digest)
        input_ok = hash_bytes(data) == record.input_digest
        if not input_ok:
            details.append("stored source bytes do not match the input digest")
    except ProbityError as exc:
        input_ok = False
        details.append(str(exc))

    out_path = Path(record.output_path)
    if out_path.exists():
        output_file_ok = hash_file(out_path) == record.output_digest
        if not output_file_ok:
            details.append("output file no longer matches its recorded digest")
    else:
        output_file_ok = False
        details.append(f"output file {out_path.name} is missing")

    replay_ok = False
    if input_ok:
        try:
            crosswalk = store.load_crosswalk(record.crosswalk_uuid)
            source_schema = store.load_schema(resource.schema_uuid)
            dest_schema = store.load_schema(crosswalk.dest_schema_uuid)
            table = store.resource_table(resource)
            result = apply_crosswalk(
                crosswalk, table, source_schema, dest_schema, threads=threads
            )
            replay_path = out_path.with_name(
                out_path.stem + ".replay" + out_path.suffix
            )
            try:
                replay_record = export_table(
                    result.table, dest_schema, replay_path, record.format
                )
                replay_ok = replay_record.digest == record.output_digest
            finally:
                replay_path.unlink(missing_ok=True)
            if not replay_ok:
                details.append("replay produced different output bytes")
        except Exception as exc:  # report, never crash a verification
            details.append(f"replay failed: {exc}")

    return VerifyOutcome(
        transform_uuid=transform_uuid,
        input_ok=input_ok,
        output_file_ok=output_file_ok,
        replay_ok=replay_ok,
        details=tuple(details),
    )
