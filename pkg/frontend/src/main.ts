/** Browser entry: wires the canvas and controls to the placement service.
 *
 * Serve the backend (`engine serve <scene> --port 8000`), then open
 * index.html with ?api=http://127.0.0.1:8000.
 */

import { ApiError, PlacementApi } from "./api.js";
import { UiSession } from "./session.js";
import type { Vec3 } from "./quat.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8000";
const api = new PlacementApi(base);
const session = new UiSession(api);

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const frameSlider = document.getElementById("frame") as HTMLInputElement;
const frameLabel = document.getElementById("frame-label") as HTMLSpanElement;
const statusPane = document.getElementById("status") as HTMLPreElement;
const messageBar = document.getElementById("message") as HTMLDivElement;

let currentFrame = 0;
let showPreview = true;

function report(err: unknown): void {
  messageBar.textContent = err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
}

function clearMessage(): void {
  messageBar.textContent = "";
}

async function drawFrame(): Promise<void> {
  const bytes = showPreview
    ? await api.previewPng(currentFrame)
    : await api.framePng(currentFrame);
  const bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  ctx.drawImage(bitmap, 0, 0);
  for (const [u, v] of session.anchors) {
    ctx.beginPath();
    ctx.arc(u, v, 4, 0, 2 * Math.PI);
    ctx.strokeStyle = "#ff3030";
    ctx.lineWidth = 2;
    ctx.stroke();
  }
  frameLabel.textContent = `${currentFrame} / ${session.status.frames - 1}`;
}

function renderStatus(): void {
  const s = session.status;
  const lines = [
    `scene: ${s.width}x${s.height}, ${s.frames} frames`,
    `pose q: [${s.pose.q.map((v) => v.toFixed(4)).join(", ")}]`,
    `pose T: [${s.pose.T.map((v) => v.toFixed(4)).join(", ")}]`,
    `scale: ${s.scale.toFixed(4)}`,
    `anchors: ${s.anchors.length} (need ${s.min_anchors})`,
    `locked: ${s.locked}   solved: ${s.solved}`,
  ];
  if (s.rms_px) {
    lines.push(`rms px: mean ${s.mean_rms_px?.toFixed(4)} [${s.rms_px.map((v) => v.toFixed(3)).join(", ")}]`);
  }
  statusPane.textContent = lines.join("\n");
}

async function refreshAll(): Promise<void> {
  await session.refresh();
  renderStatus();
  await drawFrame();
}

async function act(fn: () => Promise<unknown>): Promise<void> {
  clearMessage();
  try {
    await fn();
    renderStatus();
    await drawFrame();
  } catch (err) {
    report(err);
  }
}

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const u = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const v = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  void act(() => session.addAnchor(u, v));
});

frameSlider.addEventListener("input", () => {
  currentFrame = Number(frameSlider.value);
  void act(async () => {});
});

function bind(id: string, fn: () => Promise<unknown>): void {
  document.getElementById(id)!.addEventListener("click", () => void act(fn));
}

const step = 0.02;
const turn = (5 * Math.PI) / 180;
const moves: Record<string, Vec3> = {
  "move-left": [-step, 0, 0],
  "move-right": [step, 0, 0],
  "move-up": [0, -step, 0],
  "move-down": [0, step, 0],
  "move-near": [0, 0, -step],
  "move-far": [0, 0, step],
};
for (const [id, delta] of Object.entries(moves)) {
  bind(id, () => session.translate(delta));
}
const spins: Record<string, Vec3> = {
  "rot-x": [1, 0, 0],
  "rot-y": [0, 1, 0],
  "rot-z": [0, 0, 1],
};
for (const [id, axis] of Object.entries(spins)) {
  bind(id, () => session.rotate(axis, turn));
  bind(`${id}-neg`, () => session.rotate(axis, -turn));
}
bind("scale-up", () => session.scaleBy(1.1));
bind("scale-down", () => session.scaleBy(1 / 1.1));
bind("clear-anchors", () => session.clearAnchors());
bind("undo-anchor", () => session.removeLastAnchor());
bind("solve", () => session.solve());
bind("lock", () => session.lock());
document.getElementById("toggle-view")!.addEventListener("click", () => {
  showPreview = !showPreview;
  void act(async () => {});
});

void refreshAll()
  .then(() => {
    frameSlider.max = String(session.status.frames - 1);
  })
  .catch(report);
