/**
 * Page wiring: one workspace, one render loop, events in, renders out.
 */

import { WorkspaceApi } from "./api.js";
import { cardFromShape, editRaw, addItem, addDestField } from "./cards.js";
import {
  clear,
  el,
  highlightSets,
  renderCard,
  renderConflict,
  renderPalette,
  renderPreview,
  renderSchemaPanel,
} from "./dom.js";
import {
  highlight,
  insertCard,
  loadPalette,
  newWorkspace,
  openCrosswalk,
  refreshDryRun,
  reloadAndMerge,
  removeCard,
  reorderCard,
  requiredGaps,
  saveCrosswalk,
  scriptsInOrder,
  selectResource,
  showSourcePreview,
  validate,
} from "./workspace.js";

const api = new WorkspaceApi("");
const ws = newWorkspace(api);

let draggedCard: number | null = null;
let statusLine = "";

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function setStatus(text: string) {
  statusLine = text;
  render();
}

async function guard(work: () => Promise<void>) {
  try {
    await work();
    render();
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err));
  }
}

// ---------------------------------------------------------------------
// render

function render() {
  const mapped = highlight(ws);
  const gaps = requiredGaps(ws);
  const sets = highlightSets(mapped, gaps);

  clear(byId("palette")).append(
    renderPalette(ws.shapes, (action, ev) => {
      ev.dataTransfer?.setData("text/action", action);
    }),
  );

  clear(byId("source-panel")).append(
    renderSchemaPanel("Source fields", ws.sourceSchema, sets.source, new Set()),
  );
  clear(byId("dest-panel")).append(
    renderSchemaPanel("Destination fields", ws.destSchema, sets.dest, sets.missing),
  );

  const cardsNode = clear(byId("cards"));
  ws.cards.forEach((card, index) => {
    cardsNode.append(
      renderCard(ws, card, index, {
        rerender: render,
        onRemove: (i) => {
          removeCard(ws, i);
          render();
        },
        onAddItem: (i) => {
          addItem(ws.cards[i]);
          render();
        },
        onRemoveItem: (i, item) => {
          ws.cards[i].items.splice(item, 1);
          render();
        },
        onAddDest: (i) => {
          addDestField(ws.cards[i]);
          render();
        },
        onRawEdit: (i, text) => {
          editRaw(ws.cards[i], text, ws.shapes);
          render();
        },
        onDragStart: (i, ev) => {
          draggedCard = i;
          ev.dataTransfer?.setData("text/card", String(i));
        },
        onDrop: (i, ev) => {
          const action = ev.dataTransfer?.getData("text/action");
          if (action) {
            dropAction(action, i);
          } else if (draggedCard !== null) {
            reorderCard(ws, draggedCard, i);
            draggedCard = null;
          }
          render();
        },
      }),
    );
  });

  const previewNode = clear(byId("preview-pane"));
  previewNode.append(renderPreview(ws.preview, ws.previewKind));

  const conflictNode = clear(byId("conflict"));
  const banner = renderConflict(ws, () =>
    guard(async () => {
      const theirs = await reloadAndMerge(ws);
      setStatus(
        theirs.length
          ? `merged; ${theirs.length} script(s) from the other session kept`
          : "reloaded their version; reapply your edits and save",
      );
    }),
  );
  if (banner) conflictNode.append(banner);

  byId("status").textContent = statusLine;
  const cw = ws.crosswalk;
  byId("crosswalk-state").textContent = cw
    ? `${cw.name} — ${cw.status} v${cw.version} — ${scriptsInOrder(ws).length} scripts`
    : "no crosswalk open";
}

function dropAction(action: string, at?: number) {
  const shape = ws.shapes.find((s) => s.action === action);
  if (!shape) return;
  insertCard(ws, cardFromShape(shape), at);
}

// ---------------------------------------------------------------------
// top-bar wiring

function wire() {
  byId("cards").addEventListener("dragover", (ev) => ev.preventDefault());
  byId("cards").addEventListener("drop", (ev) => {
    const action = (ev as DragEvent).dataTransfer?.getData("text/action");
    if (action) {
      dropAction(action);
      render();
    }
  });

  byId("save").addEventListener("click", () =>
    guard(async () => {
      const ok = await saveCrosswalk(ws);
      setStatus(ok ? "saved" : "not saved — see problems");
    }),
  );

  byId("validate").addEventListener("click", () =>
    guard(async () => {
      const warnings = await validate(ws);
      setStatus(
        ws.crosswalk?.status === "validated"
          ? `validated${warnings.length ? ` with ${warnings.length} warning(s)` : ""}`
          : "not validated — see problems",
      );
    }),
  );

  byId("dry-run").addEventListener("click", () =>
    guard(() => refreshDryRun(ws, 50)),
  );
  byId("source-preview").addEventListener("click", () =>
    guard(() => showSourcePreview(ws, 50)),
  );

  byId("transform").addEventListener("click", () =>
    guard(async () => {
      if (!ws.resource) throw new Error("no resource selected");
      const record = await api.transform(ws.resource.uuid, {
        crosswalk_uuid: ws.crosswalk?.uuid,
      });
      const link = byId("download") as HTMLAnchorElement;
      link.href = api.downloadUrl(record.uuid);
      link.textContent = `download ${record.row_count} rows`;
      link.classList.remove("hidden");
      setStatus(
        `transformed: ${record.row_count} rows, output digest ${record.output_digest.slice(0, 16)}…`,
      );
    }),
  );

  const resourcePicker = byId("resource-picker") as HTMLSelectElement;
  resourcePicker.addEventListener("change", () =>
    guard(async () => {
      if (resourcePicker.value) await selectResource(ws, resourcePicker.value);
    }),
  );

  const crosswalkPicker = byId("crosswalk-picker") as HTMLSelectElement;
  crosswalkPicker.addEventListener("change", () =>
    guard(async () => {
      if (!crosswalkPicker.value) return;
      await openCrosswalk(ws, crosswalkPicker.value);
      ws.cards = [];
      for (const script of ws.crosswalk?.scripts ?? []) {
        const card = cardFromShape(ws.shapes[0]);
        editRaw(card, script, ws.shapes);
        insertCard(ws, card);
      }
    }),
  );

  const upload = byId("upload") as HTMLInputElement;
  upload.addEventListener("change", () =>
    guard(async () => {
      const file = upload.files?.[0];
      if (!file) return;
      const { resources } = await api.uploadResource(file);
      await boot(); // refresh pickers
      if (resources.length) await selectResource(ws, resources[0].uuid);
      setStatus(`imported ${file.name}`);
    }),
  );
}

async function boot() {
  await loadPalette(ws);
  const project = await api.project();
  byId("project-name").textContent = project.name;

  const resourcePicker = byId("resource-picker") as HTMLSelectElement;
  clear(resourcePicker).append(el("option", { value: "" }, "choose a source…"));
  for (const resource of project.resources) {
    resourcePicker.append(
      el("option", { value: resource.uuid }, `${resource.name} (${resource.state})`),
    );
  }

  const { crosswalks } = await api.crosswalks();
  const crosswalkPicker = byId("crosswalk-picker") as HTMLSelectElement;
  clear(crosswalkPicker).append(el("option", { value: "" }, "open a crosswalk…"));
  for (const cw of crosswalks) {
    crosswalkPicker.append(
      el("option", { value: cw.uuid }, `${cw.name} (${cw.status} v${cw.version})`),
    );
  }
  render();
}

wire();
void guard(boot);
