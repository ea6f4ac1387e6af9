import { Client, decodePixels, SchemaDoc, SpecimenRow } from "./api.js";
import { drawScene, grayToRgba, Role, roleTable } from "./render.js";
import {
  canvasToImage,
  fitTransform,
  hitTest,
  Point,
  SpecimenEdit,
  ViewTransform,
  zoomAt,
} from "./state.js";

const client = new Client();

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const listEl = document.getElementById("specimens")!;
const warningsEl = document.getElementById("warnings")!;
const statusEl = document.getElementById("status")!;
const nameEl = document.getElementById("landmark-name")!;
const saveBtn = document.getElementById("save") as HTMLButtonElement;
const undoBtn = document.getElementById("undo") as HTMLButtonElement;

let schema: SchemaDoc;
let roles: Role[] = [];
let rows: SpecimenRow[] = [];
let current = -1;
let edit: SpecimenEdit | null = null;
let image: ImageBitmap | null = null;
let imageSize: [number, number] = [0, 0];
let transform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
let selected = -1;
let dragging = false;

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function redraw(): void {
  drawScene(ctx, {
    image,
    imageSize,
    points: edit ? edit.points : [],
    roles,
    selected,
    transform,
  });
  saveBtn.disabled = !edit || !edit.dirty;
  undoBtn.disabled = !edit || edit.undoDepth === 0;
}

function renderList(): void {
  listEl.innerHTML = "";
  for (const row of rows) {
    const li = document.createElement("li");
    li.textContent = `${row.id} (${row.status})`;
    li.className = row.index === current ? "current" : "";
    li.onclick = () => void select(row.index);
    listEl.appendChild(li);
  }
}

async function select(index: number): Promise<void> {
  if (edit && edit.dirty &&
      !window.confirm("Discard unsaved edits on this specimen?")) {
    return;
  }
  current = index;
  selected = -1;
  const [imgDoc, lmDoc] = await Promise.all([
    client.getImage(index),
    client.getLandmarks(index),
  ]);
  imageSize = [imgDoc.width, imgDoc.height];
  const rgba = grayToRgba(decodePixels(imgDoc));
  image = await createImageBitmap(
    new ImageData(rgba, imgDoc.width, imgDoc.height));
  edit = new SpecimenEdit(lmDoc.points.map((p) => [p[0], p[1]] as Point));
  transform = fitTransform(imgDoc.width, imgDoc.height,
                           canvas.width, canvas.height);
  warningsEl.textContent = lmDoc.warnings.join("\n");
  renderList();
  redraw();
  setStatus(`specimen ${rows[current]?.id ?? index}`);
}

async function saveCurrent(): Promise<void> {
  if (!edit || current < 0) return;
  try {
    await client.putLandmarks(current, edit.snapshot() as [number, number][]);
    await client.save();
    edit.markSaved();
    rows = await client.getSpecimens();
    const lmDoc = await client.getLandmarks(current);
    warningsEl.textContent = lmDoc.warnings.join("\n");
    renderList();
    redraw();
    setStatus("saved");
  } catch (err) {
    setStatus(String(err));
  }
}

canvas.addEventListener("mousedown", (ev) => {
  if (!edit) return;
  const at: Point = [ev.offsetX, ev.offsetY];
  const hit = hitTest(edit.points, transform, at);
  selected = hit;
  if (hit >= 0) {
    edit.beginMove(hit);
    dragging = true;
    const name = schema.landmarks[hit]?.name ?? "";
    nameEl.textContent = `${hit + 1}: ${name}`;
  }
  redraw();
});

canvas.addEventListener("mousemove", (ev) => {
  if (!edit || !dragging || selected < 0) return;
  edit.moveTo(selected, canvasToImage(transform, [ev.offsetX, ev.offsetY]));
  redraw();
});

window.addEventListener("mouseup", () => {
  dragging = false;
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  transform = zoomAt(transform, [ev.offsetX, ev.offsetY],
                     ev.deltaY < 0 ? 1.2 : 1 / 1.2);
  redraw();
});

window.addEventListener("keydown", (ev) => {
  if (!edit) return;
  if ((ev.ctrlKey || ev.metaKey) && ev.key === "z") {
    ev.preventDefault();
    if (edit.undo()) redraw();
  } else if ((ev.ctrlKey || ev.metaKey) && ev.key === "s") {
    ev.preventDefault();
    void saveCurrent();
  } else if (ev.key === "Escape" && dragging) {
    edit.cancelMove();
    dragging = false;
    redraw();
  }
});

saveBtn.onclick = () => void saveCurrent();
undoBtn.onclick = () => {
  if (edit && edit.undo()) redraw();
};

async function start(): Promise<void> {
  schema = await client.getSchema();
  roles = roleTable(schema);
  rows = await client.getSpecimens();
  renderList();
  if (rows.length > 0) await select(0);
  else setStatus("no specimens");
}

void start().catch((err) => setStatus(String(err)));
