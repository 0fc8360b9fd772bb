/**
 * Workspace state and the operations the page wires to it.
 *
 * Owns the card list (whose order IS the script order submitted to the
 * service), the schema panels, the preview pane and the pending-save
 * version token. All mutation of stored data goes through the service;
 * this module only decides what to send and how to apply what comes
 * back — including turning a 409 into a reload-and-merge prompt
 * instead of losing either side's work.
 */

import {
  ApiError,
  ConflictError,
  type Crosswalk,
  type DryRunPayload,
  type Resource,
  type Schema,
  type TablePayload,
  WorkspaceApi,
} from "./api.js";
import {
  type Card,
  cardText,
  mappedFields,
  type MappedFields,
  unmappedRequired,
} from "./cards.js";
import type { ActionShape } from "./scripts.js";

export type PreviewKind = "source" | "dry-run";

export interface ConflictPrompt {
  storedVersion: number;
  expectedVersion: number;
  /** scripts this client was trying to save when the conflict surfaced */
  pendingScripts: string[];
}

export interface Workspace {
  api: WorkspaceApi;
  shapes: ActionShape[];
  resource: Resource | null;
  sourceSchema: Schema | null;
  destSchema: Schema | null;
  crosswalk: Crosswalk | null;
  cards: Card[];
  /** problems keyed by card position, from the last save/validate */
  problems: Map<number, string[]>;
  warnings: string[];
  preview: TablePayload | DryRunPayload | null;
  previewKind: PreviewKind;
  conflict: ConflictPrompt | null;
}

export function newWorkspace(api: WorkspaceApi): Workspace {
  return {
    api,
    shapes: [],
    resource: null,
    sourceSchema: null,
    destSchema: null,
    crosswalk: null,
    cards: [],
    problems: new Map(),
    warnings: [],
    preview: null,
    previewKind: "source",
    conflict: null,
  };
}

/** The scripts exactly as they will be submitted: card order, canonical text. */
export function scriptsInOrder(ws: Workspace): string[] {
  return ws.cards.map(cardText);
}

export function insertCard(ws: Workspace, card: Card, at?: number): void {
  const index = at ?? ws.cards.length;
  ws.cards.splice(index, 0, card);
}

export function removeCard(ws: Workspace, index: number): void {
  ws.cards.splice(index, 1);
}

/** Drag a card to a new position; order equals submitted order. */
export function reorderCard(ws: Workspace, from: number, to: number): void {
  if (from === to) return;
  const [card] = ws.cards.splice(from, 1);
  ws.cards.splice(to, 0, card);
}

export function highlight(ws: Workspace): MappedFields {
  return mappedFields(ws.cards);
}

export function requiredGaps(ws: Workspace): string[] {
  return ws.destSchema ? unmappedRequired(ws.destSchema, ws.cards) : [];
}

// ---------------------------------------------------------------------
// service round trips

export async function loadPalette(ws: Workspace): Promise<void> {
  ws.shapes = (await ws.api.actions()).actions;
}

export async function selectResource(ws: Workspace, uuid: string): Promise<void> {
  ws.resource = await ws.api.resource(uuid);
  ws.sourceSchema = await ws.api.resourceSchema(uuid);
  ws.preview = await ws.api.preview(uuid, 50);
  ws.previewKind = "source";
}

export async function openCrosswalk(ws: Workspace, uuid: string): Promise<void> {
  ws.crosswalk = await ws.api.crosswalk(uuid);
  ws.destSchema = await ws.api.schema(ws.crosswalk.dest_schema_uuid);
}

/** Map "script N: ..." problem strings onto card positions. */
export function assignProblems(ws: Workspace, problems: string[]): void {
  ws.problems = new Map();
  for (const problem of problems) {
    const match = /^script (\d+): (.*)$/s.exec(problem);
    const index = match ? Number(match[1]) : -1;
    const text = match ? match[2] : problem;
    const existing = ws.problems.get(index) ?? [];
    existing.push(text);
    ws.problems.set(index, existing);
  }
}

/**
 * PUT the card list. A version conflict does not throw away anything:
 * the workspace keeps its cards and raises the reload-merge prompt
 * with both versions.
 */
export async function saveCrosswalk(ws: Workspace): Promise<boolean> {
  if (!ws.crosswalk) throw new Error("no crosswalk open");
  const scripts = scriptsInOrder(ws);
  try {
    ws.crosswalk = await ws.api.putCrosswalk(ws.crosswalk.uuid, {
      name: ws.crosswalk.name,
      version: ws.crosswalk.version,
      scripts,
      source_fingerprint: ws.crosswalk.source_fingerprint,
      dest_schema_uuid: ws.crosswalk.dest_schema_uuid,
    });
    ws.problems = new Map();
    ws.conflict = null;
    return true;
  } catch (err) {
    if (err instanceof ConflictError) {
      ws.conflict = {
        storedVersion: err.storedVersion,
        expectedVersion: err.expectedVersion,
        pendingScripts: scripts,
      };
      return false;
    }
    if (err instanceof ApiError && err.problems.length) {
      assignProblems(ws, err.problems);
      return false;
    }
    throw err;
  }
}

/**
 * Resolve a conflict the only safe way: reload the stored version,
 * then reapply this client's pending scripts on top as the new edit.
 * The curator reviews the merged card list before saving again.
 */
export async function reloadAndMerge(ws: Workspace): Promise<string[]> {
  if (!ws.crosswalk || !ws.conflict) throw new Error("nothing to merge");
  const stored = await ws.api.crosswalk(ws.crosswalk.uuid);
  const pending = ws.conflict.pendingScripts;
  ws.crosswalk = stored;
  ws.conflict = null;
  // Scripts the other session added that this one did not touch.
  return stored.scripts.filter((s) => !pending.includes(s));
}

export async function validate(ws: Workspace): Promise<string[]> {
  if (!ws.crosswalk) throw new Error("no crosswalk open");
  const saved = await saveCrosswalk(ws);
  if (!saved) return [];
  const outcome = await ws.api.validateCrosswalk(ws.crosswalk.uuid);
  ws.crosswalk = {
    ...ws.crosswalk,
    status: outcome.status as Crosswalk["status"],
    version: outcome.version,
  };
  ws.warnings = outcome.warnings;
  return outcome.warnings;
}

export async function refreshDryRun(ws: Workspace, rows = 50): Promise<void> {
  if (!ws.crosswalk) throw new Error("no crosswalk open");
  ws.preview = await ws.api.dryRun(
    ws.crosswalk.uuid, rows, ws.resource?.uuid,
  );
  ws.previewKind = "dry-run";
}

export async function showSourcePreview(ws: Workspace, rows = 50): Promise<void> {
  if (!ws.resource) throw new Error("no resource selected");
  ws.preview = await ws.api.preview(ws.resource.uuid, rows);
  ws.previewKind = "source";
}
