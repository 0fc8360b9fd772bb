/**
 * DOM rendering for the workspace page. Pure functions from state to
 * elements; main.ts owns the wiring and re-render loop. Nothing here
 * talks to the network.
 */

import type { Field, Schema, TablePayload, DryRunPayload } from "./api.js";
import {
  type Card,
  cardText,
  cardViolations,
  setDestField,
  setDestTerm,
  setItem,
  setSourceTerm,
} from "./cards.js";
import type { MappedFields } from "./cards.js";
import type { ActionShape, SourceItem } from "./scripts.js";
import type { Workspace } from "./workspace.js";

type Handler = () => void;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

// ---------------------------------------------------------------------
// palette

export function renderPalette(
  shapes: ActionShape[],
  onDragStart: (action: string, ev: DragEvent) => void,
): HTMLElement {
  const list = el("ul", { class: "palette" });
  for (const shape of shapes) {
    const item = el(
      "li",
      { class: "palette-item", draggable: "true", title: shape.summary },
      el("strong", {}, shape.action),
      el("span", { class: "palette-summary" }, shape.summary),
    );
    item.addEventListener("dragstart", (ev) => onDragStart(shape.action, ev));
    list.append(item);
  }
  return list;
}

// ---------------------------------------------------------------------
// schema panels

function fieldLabel(field: Field): string {
  const marks: string[] = [];
  if (field.constraints?.required) marks.push("required");
  if (field.constraints?.unique) marks.push("unique");
  return marks.length ? `${field.type} · ${marks.join(" · ")}` : field.type;
}

export function renderSchemaPanel(
  title: string,
  schema: Schema | null,
  highlighted: Set<string>,
  missingRequired: Set<string>,
): HTMLElement {
  const panel = el("section", { class: "schema-panel" }, el("h3", {}, title));
  if (!schema) {
    panel.append(el("p", { class: "empty" }, "nothing loaded"));
    return panel;
  }
  panel.append(el("p", { class: "schema-name" }, `${schema.name} v${schema.version}`));
  const list = el("ul", { class: "field-list" });
  for (const field of schema.fields) {
    const classes = ["field"];
    if (highlighted.has(field.name)) classes.push("mapped");
    if (missingRequired.has(field.name)) classes.push("required-missing");
    list.append(
      el(
        "li",
        { class: classes.join(" "), "data-field": field.name },
        el("span", { class: "field-name" }, field.name),
        el("span", { class: "field-type" }, fieldLabel(field)),
      ),
    );
  }
  panel.append(list);
  return panel;
}

// ---------------------------------------------------------------------
// cards

function select(
  value: string,
  options: string[],
  onChange: (value: string) => void,
  placeholder = "choose…",
): HTMLSelectElement {
  const node = el("select", {});
  node.append(el("option", { value: "" }, placeholder));
  for (const option of options) {
    const opt = el("option", { value: option }, option);
    if (option === value) opt.selected = true;
    node.append(opt);
  }
  node.addEventListener("change", () => onChange(node.value));
  return node;
}

function textInput(
  value: string,
  onChange: (value: string) => void,
  placeholder = "",
): HTMLInputElement {
  const node = el("input", { type: "text", value, placeholder });
  node.addEventListener("change", () => onChange(node.value));
  return node;
}

function itemEditor(
  card: Card,
  index: number,
  item: SourceItem,
  sourceFields: string[],
  rerender: Handler,
): HTMLElement {
  const wrap = el("span", { class: "item-editor" });
  const set = (next: SourceItem) => {
    setItem(card, index, next);
    rerender();
  };
  switch (item.kind) {
    case "field":
      wrap.append(select(item.name, sourceFields, (name) => set({ kind: "field", name })));
      break;
    case "literal":
      wrap.append(textInput(item.text, (text) => set({ kind: "literal", text }), "value"));
      break;
    case "boolean":
      wrap.append(
        select(item.value ? "True" : "False", ["True", "False"], (v) =>
          set({ kind: "boolean", value: v === "True" }), "True/False"),
      );
      break;
    case "integer": {
      const input = el("input", { type: "number", value: String(item.value) });
      input.addEventListener("change", () =>
        set({ kind: "integer", value: Math.trunc(Number(input.value) || 0) }));
      wrap.append(input);
      break;
    }
    case "signed":
      wrap.append(
        select(item.sign, ["+", "-"], (sign) =>
          set({ kind: "signed", sign: sign as "+" | "-", name: item.name }), "sign"),
        select(item.name, sourceFields, (name) =>
          set({ kind: "signed", sign: item.sign, name })),
      );
      break;
    case "dated":
      wrap.append(
        select(item.valueField, sourceFields, (valueField) =>
          set({ kind: "dated", valueField, dateField: item.dateField })),
        " ranked by ",
        select(item.dateField, sourceFields, (dateField) =>
          set({ kind: "dated", valueField: item.valueField, dateField })),
      );
      break;
    case "placeholder":
      wrap.append(el("span", { class: "placeholder-item", title: "skipped position" }, "~"));
      break;
  }
  return wrap;
}

export interface CardHooks {
  rerender: Handler;
  onRemove: (index: number) => void;
  onAddItem: (index: number) => void;
  onRemoveItem: (index: number, item: number) => void;
  onAddDest: (index: number) => void;
  onRawEdit: (index: number, text: string) => void;
  onDragStart: (index: number, ev: DragEvent) => void;
  onDrop: (index: number, ev: DragEvent) => void;
}

export function renderCard(
  ws: Workspace,
  card: Card,
  index: number,
  hooks: CardHooks,
): HTMLElement {
  const sourceFields = ws.sourceSchema?.fields.map((f) => f.name) ?? [];
  const destFields = ws.destSchema?.fields.map((f) => f.name) ?? [];
  const shape = card.shape;

  const head = el(
    "header",
    { class: "card-head" },
    el("span", { class: "drag-handle", title: "drag to reorder" }, "⋮⋮"),
    el("strong", {}, shape.action),
    el("span", { class: "card-summary" }, shape.summary),
  );
  const remove = el("button", { class: "remove", title: "remove card" }, "×");
  remove.addEventListener("click", () => hooks.onRemove(index));
  head.append(remove);

  const body = el("div", { class: "card-body" });

  if (shape.dest !== "none") {
    const destRow = el("div", { class: "clause" }, el("label", {}, "into"));
    card.destFields.forEach((name, i) => {
      destRow.append(select(name, destFields, (v) => {
        setDestField(card, i, v);
        hooks.rerender();
      }));
    });
    if (shape.dest === "many") {
      const add = el("button", { class: "add" }, "+ destination");
      add.addEventListener("click", () => hooks.onAddDest(index));
      destRow.append(add);
    }
    if (shape.dest_term === "required") {
      const term = card.destTerm;
      destRow.append(
        el("label", {}, "term"),
        textInput(
          typeof term === "boolean" ? (term ? "True" : "False") : term ?? "",
          (v) => {
            setDestTerm(card, v === "True" ? true : v === "False" ? false : v);
            hooks.rerender();
          },
          "category term",
        ),
      );
    }
    body.append(destRow);
  }

  if (shape.source_term !== null) {
    const row = el("div", { class: "clause" }, el("label", {}, shape.source_term));
    if (shape.source_term === "source column") {
      row.append(select(card.sourceTerm ?? "", sourceFields, (v) => {
        setSourceTerm(card, v);
        hooks.rerender();
      }));
    } else {
      row.append(textInput(card.sourceTerm ?? "", (v) => {
        setSourceTerm(card, v);
        hooks.rerender();
      }, "separator"));
    }
    body.append(row);
  }

  if (shape.item_kinds.length) {
    const row = el("div", { class: "clause items" }, el("label", {}, "from"));
    card.items.forEach((item, i) => {
      const cell = el("span", { class: "item" });
      cell.append(itemEditor(card, i, item, sourceFields, hooks.rerender));
      if (card.items.length > shape.min_items) {
        const drop = el("button", { class: "remove-item", title: "remove item" }, "–");
        drop.addEventListener("click", () => hooks.onRemoveItem(index, i));
        cell.append(drop);
      }
      row.append(cell);
    });
    if (shape.max_items === null || card.items.length < shape.max_items) {
      const add = el("button", { class: "add" }, "+ item");
      add.addEventListener("click", () => hooks.onAddItem(index));
      row.append(add);
    }
    body.append(row);
  }

  // the canonical text this card stands for, also editable directly
  const rawBox = el("details", { class: "raw" }, el("summary", {}, "script text"));
  const rawArea = el("textarea", { rows: "2" });
  rawArea.value = card.rawError ? card.rawError.text : cardText(card);
  const apply = el("button", { class: "apply-raw" }, "apply");
  apply.addEventListener("click", () => hooks.onRawEdit(index, rawArea.value));
  rawBox.append(rawArea, apply);
  if (card.rawError) {
    const where =
      card.rawError.offset !== null ? ` (byte ${card.rawError.offset})` : "";
    rawBox.append(el("p", { class: "raw-error" }, card.rawError.message + where));
    rawBox.setAttribute("open", "");
  }

  const problems = [
    ...cardViolations(card).map((v) => v.message),
    ...(ws.problems.get(index) ?? []),
  ];
  const problemList = el("ul", { class: "violations" });
  for (const problem of problems) {
    problemList.append(el("li", {}, problem));
  }

  const classes = ["card"];
  if (problems.length || card.rawError) classes.push("invalid");
  const node = el("article", { class: classes.join(" "), draggable: "true" }, head, body);
  node.append(el("code", { class: "canonical" }, card.rawError ? "—" : cardText(card)));
  if (problems.length) node.append(problemList);
  node.append(rawBox);

  node.addEventListener("dragstart", (ev) => hooks.onDragStart(index, ev));
  node.addEventListener("dragover", (ev) => ev.preventDefault());
  node.addEventListener("drop", (ev) => hooks.onDrop(index, ev));
  return node;
}

// ---------------------------------------------------------------------
// preview table

export function renderPreview(
  payload: TablePayload | DryRunPayload | null,
  kind: "source" | "dry-run",
): HTMLElement {
  const wrap = el("section", { class: "preview" });
  if (!payload) {
    wrap.append(el("p", { class: "empty" }, "no preview yet"));
    return wrap;
  }
  const caption =
    kind === "source"
      ? `source preview — ${payload.total_rows} rows total`
      : "dry-run preview" +
        (("approximate" in payload && payload.approximate) ? " (approximate: whole-table steps saw only this slice)" : "");
  wrap.append(el("h3", {}, caption));

  const table = el("table", {});
  const headRow = el("tr", {}, el("th", {}, "#"));
  for (const column of payload.columns) headRow.append(el("th", {}, column));
  table.append(el("thead", {}, headRow));
  const body = el("tbody", {});
  payload.rows.forEach((row, i) => {
    const tr = el("tr", {}, el("td", { class: "row-label" }, String(payload.row_labels[i])));
    for (const cell of row) {
      tr.append(el("td", cell === null ? { class: "null" } : {}, cell ?? "∅"));
    }
    body.append(tr);
  });
  table.append(body);
  wrap.append(el("div", { class: "table-scroll" }, table));

  if ("warnings" in payload && payload.warnings.length) {
    const list = el("ul", { class: "warnings" });
    for (const warning of payload.warnings) list.append(el("li", {}, warning));
    wrap.append(el("h4", {}, "warnings"), list);
  }
  if ("validation" in payload && !payload.validation.ok) {
    const list = el("ul", { class: "violations" });
    for (const violation of payload.validation.violations) {
      list.append(el("li", {}, `${violation.field}: ${violation.message}`));
    }
    wrap.append(el("h4", {}, "constraint violations"), list);
  }
  return wrap;
}

// ---------------------------------------------------------------------
// conflict banner

export function renderConflict(
  ws: Workspace,
  onReloadMerge: Handler,
): HTMLElement | null {
  if (!ws.conflict) return null;
  const banner = el(
    "div",
    { class: "conflict-banner" },
    el(
      "p",
      {},
      `Someone else saved version ${ws.conflict.storedVersion} while you ` +
        `were editing version ${ws.conflict.expectedVersion}. Reload their ` +
        "changes and merge yours on top?",
    ),
  );
  const button = el("button", { class: "reload-merge" }, "Reload & merge");
  button.addEventListener("click", onReloadMerge);
  banner.append(button);
  return banner;
}

export function highlightSets(mapped: MappedFields, gaps: string[]): {
  source: Set<string>;
  dest: Set<string>;
  missing: Set<string>;
} {
  return { source: mapped.source, dest: mapped.dest, missing: new Set(gaps) };
}
