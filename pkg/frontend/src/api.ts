/**
 * Typed client for the workspace HTTP API.
 *
 * Every failure body has the shape {error, message, ...extras}; the
 * client rethrows it as ApiError (or ConflictError for 409s, carrying
 * both version numbers so the workspace can offer reload-and-merge).
 * The client is the only place the UI touches the network — all data
 * work happens on the service.
 */

import type { ActionShape } from "./scripts.js";

export interface SourceRecord {
  source_path: string;
  format: string;
  digest: string;
  imported_at: string;
  row_count: number;
  column_count: number;
  sheet_name: string | null;
  citation: string | null;
}

export interface Resource {
  uuid: string;
  name: string;
  task: string;
  state: "imported" | "ready" | "assigned" | "transformed";
  schema_uuid: string;
  crosswalk_uuid: string | null;
  source: SourceRecord;
  ingest: Record<string, unknown>;
  created_at: string;
  updated_at: string;
}

export interface CategoryTerm {
  name: string;
  description?: string;
}

export interface FieldConstraints {
  required?: boolean;
  unique?: boolean;
  minimum?: number;
  maximum?: number;
  categories?: CategoryTerm[];
  default?: unknown;
}

export interface Field {
  name: string;
  type: string;
  title?: string;
  description?: string;
  constraints?: FieldConstraints;
}

export interface Schema {
  uuid: string;
  name: string;
  description: string | null;
  version: number;
  derived_from: string | null;
  fields: Field[];
  fingerprint?: string;
}

export interface Crosswalk {
  uuid: string;
  name: string;
  source_fingerprint: string;
  dest_schema_uuid: string;
  status: "draft" | "validated";
  version: number;
  scripts: string[];
}

export interface TablePayload {
  columns: string[];
  row_labels: number[];
  rows: (string | null)[][];
  total_rows: number;
}

export interface ValidationPayload {
  ok: boolean;
  violations: {
    field: string;
    kind: string;
    row_labels: number[];
    message: string;
  }[];
}

export interface DryRunPayload extends TablePayload {
  warnings: string[];
  approximate: boolean;
  validation: ValidationPayload;
}

export interface TransformPayload {
  uuid: string;
  resource_uuid: string;
  crosswalk_uuid: string;
  input_digest: string;
  output_digest: string;
  output_path: string;
  format: string;
  executed_at: string;
  row_count: number;
  column_count: number;
  audit: unknown[];
  warnings: string[];
  validation: ValidationPayload;
  coercion_failures: number;
}

export interface VerifyPayload {
  ok: boolean;
  input_ok: boolean;
  output_file_ok: boolean;
  replay_ok: boolean;
  details: string[];
}

export class ApiError extends Error {
  readonly status: number;
  readonly kind: string;
  readonly body: Record<string, unknown>;

  constructor(status: number, body: Record<string, unknown>) {
    super(String(body.message ?? `request failed with ${status}`));
    this.status = status;
    this.kind = String(body.error ?? "unknown");
    this.body = body;
  }

  /** "script 3: ..." problems from a 422, when the service sent them. */
  get problems(): string[] {
    const p = this.body.problems;
    return Array.isArray(p) ? p.map(String) : [];
  }
}

export class ConflictError extends ApiError {
  readonly storedVersion: number;
  readonly expectedVersion: number;

  constructor(body: Record<string, unknown>) {
    super(409, body);
    this.storedVersion = Number(body.stored_version ?? 0);
    this.expectedVersion = Number(body.expected_version ?? 0);
  }
}

async function request<T>(
  base: string,
  path: string,
  init?: RequestInit,
): Promise<T> {
  const response = await fetch(base + path, init);
  if (response.ok) {
    return (await response.json()) as T;
  }
  let body: Record<string, unknown>;
  try {
    body = (await response.json()) as Record<string, unknown>;
  } catch {
    body = { error: "unknown", message: response.statusText };
  }
  if (response.status === 409 && "stored_version" in body) {
    throw new ConflictError(body);
  }
  throw new ApiError(response.status, body);
}

const json = (payload: unknown): RequestInit => ({
  method: "PUT",
  headers: { "content-type": "application/json" },
  body: JSON.stringify(payload),
});

export class WorkspaceApi {
  constructor(readonly base: string = "") {}

  actions(): Promise<{ actions: ActionShape[] }> {
    return request(this.base, "/actions");
  }

  project(): Promise<{ name: string; tasks: string[]; resources: Resource[] }> {
    return request(this.base, "/project");
  }

  uploadResource(file: File, form: Record<string, string> = {}): Promise<{ resources: Resource[] }> {
    const data = new FormData();
    data.append("file", file);
    for (const [key, value] of Object.entries(form)) data.append(key, value);
    return request(this.base, "/resources", { method: "POST", body: data });
  }

  resource(uuid: string): Promise<Resource> {
    return request(this.base, `/resources/${uuid}`);
  }

  preview(uuid: string, rows = 50): Promise<TablePayload> {
    return request(this.base, `/resources/${uuid}/preview?rows=${rows}`);
  }

  resourceSchema(uuid: string): Promise<Schema> {
    return request(this.base, `/resources/${uuid}/schema`);
  }

  putResourceSchema(uuid: string, schema: Partial<Schema>): Promise<Schema> {
    return request(this.base, `/resources/${uuid}/schema`, json(schema));
  }

  createSchema(schema: Partial<Schema>): Promise<Schema> {
    return request(this.base, "/schemas", { ...json(schema), method: "POST" });
  }

  schemas(): Promise<{ schemas: Schema[] }> {
    return request(this.base, "/schemas");
  }

  schema(uuid: string): Promise<Schema> {
    return request(this.base, `/schemas/${uuid}`);
  }

  crosswalks(fingerprint?: string): Promise<{ crosswalks: Crosswalk[] }> {
    const query = fingerprint ? `?fingerprint=${fingerprint}` : "";
    return request(this.base, `/crosswalks${query}`);
  }

  crosswalk(uuid: string): Promise<Crosswalk> {
    return request(this.base, `/crosswalks/${uuid}`);
  }

  putCrosswalk(
    uuid: string,
    body: {
      name?: string;
      version?: number;
      scripts: string[];
      resource_uuid?: string;
      source_fingerprint?: string;
      dest_schema_uuid: string;
    },
  ): Promise<Crosswalk> {
    return request(this.base, `/crosswalks/${uuid}`, json(body));
  }

  validateCrosswalk(uuid: string): Promise<{
    uuid: string;
    status: string;
    version: number;
    warnings: string[];
  }> {
    return request(this.base, `/crosswalks/${uuid}/validate`, { method: "POST" });
  }

  dryRun(uuid: string, rows = 50, resource?: string): Promise<DryRunPayload> {
    const extra = resource ? `&resource=${resource}` : "";
    return request(this.base, `/crosswalks/${uuid}/dry-run?rows=${rows}${extra}`, {
      method: "POST",
    });
  }

  transform(
    resourceUuid: string,
    body: { crosswalk_uuid?: string; format?: string; threads?: number } = {},
  ): Promise<TransformPayload> {
    return request(this.base, `/resources/${resourceUuid}/transform`, {
      ...json(body),
      method: "POST",
    });
  }

  verify(transformUuid: string): Promise<VerifyPayload> {
    return request(this.base, `/transforms/${transformUuid}/verify`, {
      method: "POST",
    });
  }

  downloadUrl(transformUuid: string): string {
    return `${this.base}/transforms/${transformUuid}/download`;
  }

  bulkExportUrl(): string {
    return `${this.base}/export/bulk`;
  }
}
