/**
 * Script cards: the editable unit of the workspace.
 *
 * Dragging a palette action in creates a card whose clause slots come
 * from the action's shape — destination selectors, an optional term,
 * source item selectors. A card serializes to exactly the canonical
 * script text, so a crosswalk assembled here is byte-identical to one
 * typed by hand. Cards are also editable as raw text; a parse failure
 * keeps the old structure and annotates the card with the error.
 */

import {
  type ActionName,
  type ActionShape,
  type ScriptAction,
  type SourceItem,
  type StructureViolation,
  parseScript,
  referencedSourceFields,
  ScriptError,
  ScriptSyntaxError,
  serializeAction,
  UnknownActionError,
  validateStructure,
} from "./scripts.js";
import type { Schema } from "./api.js";

export interface RawEditError {
  text: string;
  message: string;
  offset: number | null;
  expected: string[];
}

export interface Card {
  id: number;
  shape: ActionShape;
  destFields: string[];
  destTerm: string | boolean | null;
  sourceTerm: string | null;
  items: SourceItem[];
  /** set while the raw-text editor holds something that will not parse */
  rawError: RawEditError | null;
}

let nextId = 1;

/** How many destination slots a fresh card starts with. */
function destSlots(shape: ActionShape): number {
  switch (shape.dest) {
    case "none":
      return 0;
    case "two":
      return 2;
    default:
      return 1; // "one" and "many" both start with a single selector
  }
}

/** The default item for a shape's first item slot. */
export function blankItem(shape: ActionShape): SourceItem | null {
  const kind = shape.item_kinds[0];
  switch (kind) {
    case "field":
      return { kind: "field", name: "" };
    case "literal":
      return { kind: "literal", text: "" };
    case "boolean":
      return { kind: "boolean", value: true };
    case "integer":
      return { kind: "integer", value: 0 };
    case "signed":
      return { kind: "signed", sign: "+", name: "" };
    case "dated":
      return { kind: "dated", valueField: "", dateField: "" };
    case "placeholder":
      return { kind: "placeholder" };
    default:
      return null; // DEBLANK / DEDUPE take nothing
  }
}

/**
 * drag_action: a palette drop creates the card structure the action
 * needs — empty selectors for each clause, nothing more.
 */
export function cardFromShape(shape: ActionShape): Card {
  const first = blankItem(shape);
  return {
    id: nextId++,
    shape,
    destFields: Array(destSlots(shape)).fill(""),
    destTerm: shape.dest_term === "required" ? "" : null,
    sourceTerm: shape.source_term !== null ? "" : null,
    items: first && shape.min_items > 0 ? [first] : [],
    rawError: null,
  };
}

export function cardAction(card: Card): ScriptAction {
  return {
    action: card.shape.action as ActionName,
    destFields: [...card.destFields],
    destTerm: card.destTerm,
    sourceTerm: card.sourceTerm,
    items: [...card.items],
  };
}

/** The canonical script text this card will submit. */
export function cardText(card: Card): string {
  return serializeAction(cardAction(card));
}

export function setDestField(card: Card, index: number, name: string): void {
  card.destFields[index] = name;
}

export function addDestField(card: Card): void {
  card.destFields.push("");
}

export function setDestTerm(card: Card, term: string | boolean | null): void {
  card.destTerm = term;
}

export function setSourceTerm(card: Card, term: string | null): void {
  card.sourceTerm = term;
}

export function setItem(card: Card, index: number, item: SourceItem): void {
  card.items[index] = item;
}

export function addItem(card: Card, item?: SourceItem): void {
  const fresh = item ?? blankItem(card.shape);
  if (fresh) card.items.push(fresh);
}

export function removeItem(card: Card, index: number): void {
  card.items.splice(index, 1);
}

/**
 * Replace a card's structure from raw script text. On a parse failure
 * the structure is kept and the card carries the error until the text
 * is fixed — the curator never loses selector state to a typo.
 */
export function editRaw(card: Card, text: string, shapes: ActionShape[]): boolean {
  let action: ScriptAction;
  try {
    action = parseScript(text);
  } catch (err) {
    if (err instanceof ScriptSyntaxError) {
      card.rawError = {
        text,
        message: err.message,
        offset: err.offset,
        expected: [...err.expected],
      };
      return false;
    }
    if (err instanceof UnknownActionError) {
      card.rawError = {
        text,
        message: err.message,
        offset: err.offset,
        expected: [],
      };
      return false;
    }
    throw err;
  }
  const shape = shapes.find((s) => s.action === action.action);
  if (!shape) {
    throw new ScriptError(`no shape for action ${action.action}`);
  }
  card.shape = shape;
  card.destFields = action.destFields;
  card.destTerm = action.destTerm;
  card.sourceTerm = action.sourceTerm;
  card.items = action.items;
  card.rawError = null;
  return true;
}

/** Structural problems, plus incomplete selectors, for inline display. */
export function cardViolations(card: Card): StructureViolation[] {
  const out = validateStructure(cardAction(card), card.shape);
  card.destFields.forEach((name, i) => {
    if (name === "") {
      out.push({
        code: "incomplete",
        message: `destination ${i + 1} is not chosen yet`,
      });
    }
  });
  if (card.destTerm === "" && card.shape.dest_term === "required") {
    out.push({ code: "incomplete", message: "destination term is empty" });
  }
  // an empty separator is legitimate; an empty column name is not
  if (card.sourceTerm === "" && card.shape.source_term === "source column") {
    out.push({
      code: "incomplete",
      message: `source term (${card.shape.source_term}) is empty`,
    });
  }
  card.items.forEach((item, i) => {
    const empty =
      (item.kind === "field" && item.name === "") ||
      (item.kind === "signed" && item.name === "") ||
      (item.kind === "dated" && (item.valueField === "" || item.dateField === ""));
    if (empty) {
      out.push({ code: "incomplete", message: `source item ${i + 1} is not chosen yet` });
    }
  });
  return out;
}

export function cardIsComplete(card: Card): boolean {
  return card.rawError === null && cardViolations(card).length === 0;
}

// ---------------------------------------------------------------------
// mapped-field highlighting

export interface MappedFields {
  source: Set<string>;
  dest: Set<string>;
}

/**
 * The fields the schema panels highlight: exactly those referenced by
 * cards that currently hold a complete, structurally valid script.
 * A card with problems contributes nothing until it is fixed.
 */
export function mappedFields(cards: Card[]): MappedFields {
  const source = new Set<string>();
  const dest = new Set<string>();
  for (const card of cards) {
    if (!cardIsComplete(card)) continue;
    const action = cardAction(card);
    for (const name of action.destFields) dest.add(name);
    for (const name of referencedSourceFields(action)) source.add(name);
  }
  return { source, dest };
}

/** Required destination fields that no card writes yet. */
export function unmappedRequired(destSchema: Schema, cards: Card[]): string[] {
  const mapped = mappedFields(cards).dest;
  return destSchema.fields
    .filter((f) => f.constraints?.required && !mapped.has(f.name))
    .map((f) => f.name);
}
