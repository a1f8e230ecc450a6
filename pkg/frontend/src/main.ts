/**
 * DOM wiring for the annotation client.
 *
 * Keyboard-first controls (coarse/fine toggled with F):
 *   A / D  azimuth    W / S  elevation   Q / E  in-plane rotation
 *   arrows shift the principal point
 *   - / =  model depth nearer/farther    [ / ]  focal length
 *   Enter save    X flag    P approve    O overlay mode    R silhouette refresh
 */

import { ApiClient, ApiError, ConflictError } from "./api";
import { buildWireframe, drawWireframe, projectWireframe, type WireframeModel } from "./overlay";
import { UiSession, type AdjustParam } from "./session";
import type { AnnotationRecord } from "./types";

const api = new ApiClient("");
const session = new UiSession(api, { annotator: "browser" });

let wireframe: WireframeModel | null = null;
let image: HTMLImageElement | null = null;
let silhouette: HTMLImageElement | null = null;
let redrawQueued = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = () => el<HTMLCanvasElement>("viewport");
const statusLine = () => el<HTMLDivElement>("status-line");
const conflictBanner = () => el<HTMLDivElement>("conflict-banner");
const behindWarning = () => el<HTMLDivElement>("behind-warning");

function setStatus(text: string): void {
  statusLine().textContent = text;
}

function poseReadout(): string {
  const p = session.draft;
  const deg = (r: number) => ((r * 180) / Math.PI).toFixed(1);
  return (
    `az ${deg(p.azimuth)}°  el ${deg(p.elevation)}°  th ${deg(p.theta)}°  ` +
    `d ${p.depth.toFixed(3)}  f ${p.focal.toFixed(1)}  ` +
    `u ${p.u.toFixed(1)}  v ${p.v.toFixed(1)}  [${session.stepMode}]` +
    (session.dirty ? "  *unsaved*" : "")
  );
}

function queueRedraw(): void {
  if (redrawQueued) return;
  redrawQueued = true;
  requestAnimationFrame(() => {
    redrawQueued = false;
    redraw();
  });
}

function redraw(): void {
  const c = canvas();
  const ctx = c.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, c.width, c.height);
  if (image) ctx.drawImage(image, 0, 0);
  if (session.overlayMode === "silhouette" && silhouette) {
    ctx.drawImage(silhouette, 0, 0);
  }
  if (session.overlayMode === "wireframe" && wireframe) {
    const projected = projectWireframe(wireframe, session.draft);
    drawWireframe(ctx, projected);
    behindWarning().hidden = projected.behindVertexCount === 0;
  } else {
    behindWarning().hidden = true;
  }
  el<HTMLDivElement>("pose-readout").textContent = poseReadout();
  el<HTMLButtonElement>("save-btn").disabled = !session.canSave;
}

async function refreshSilhouette(): Promise<void> {
  if (!session.imageId) return;
  const img = new Image();
  img.src = api.renderUrl(session.imageId, session.draft);
  await img.decode();
  silhouette = img;
  queueRedraw();
}

async function loadImage(record: AnnotationRecord): Promise<void> {
  if (session.dirty && !window.confirm("Discard unsaved changes?")) return;
  await session.load(record.image_id);
  conflictBanner().hidden = true;
  silhouette = null;

  const img = new Image();
  img.src = api.imageUrl(record.image_id);
  await img.decode();
  image = img;
  const c = canvas();
  c.width = img.naturalWidth;
  c.height = img.naturalHeight;
  if (!session.record?.pose) {
    // start a fresh draft centered on the image
    session.setDraft({ ...session.draft, u: img.naturalWidth / 2, v: img.naturalHeight / 2 });
    session.dirty = false;
  }

  const mesh = await api.getMesh(record.model_id);
  wireframe = buildWireframe(mesh);
  setStatus(`${record.image_id} (${record.status}, rev ${record.revision})`);
  queueRedraw();
}

async function refreshImageList(): Promise<void> {
  const { images } = await api.listImages();
  const list = el<HTMLUListElement>("image-list");
  list.replaceChildren(
    ...images.map((record) => {
      const item = document.createElement("li");
      item.textContent = `${record.image_id} — ${record.status}`;
      item.className = record.image_id === session.imageId ? "selected" : "";
      item.addEventListener("click", () => {
        void loadImage(record).catch(reportError);
      });
      return item;
    }),
  );
}

function reportError(error: unknown): void {
  if (error instanceof ConflictError) {
    conflictBanner().hidden = false;
    setStatus("conflict: this image was saved by someone else");
    return;
  }
  if (error instanceof ApiError) {
    setStatus(`error ${error.status}: ${error.detail}`);
    return;
  }
  setStatus(String(error));
}

async function save(): Promise<void> {
  const record = await session.save();
  setStatus(`saved rev ${record.revision}`);
  await refreshImageList();
  queueRedraw();
}

async function transition(action: "flag" | "approve"): Promise<void> {
  const record = action === "flag" ? await session.flag() : await session.approve();
  setStatus(`${record.image_id} → ${record.status} (rev ${record.revision})`);
  await refreshImageList();
  queueRedraw();
}

const KEY_ADJUST: Record<string, [AdjustParam, 1 | -1]> = {
  d: ["azimuth", 1],
  a: ["azimuth", -1],
  w: ["elevation", 1],
  s: ["elevation", -1],
  e: ["theta", 1],
  q: ["theta", -1],
  ArrowRight: ["u", 1],
  ArrowLeft: ["u", -1],
  ArrowDown: ["v", 1],
  ArrowUp: ["v", -1],
  "=": ["depth", 1],
  "-": ["depth", -1],
  "]": ["focal", 1],
  "[": ["focal", -1],
};

function onKey(event: KeyboardEvent): void {
  if (event.target instanceof HTMLInputElement) return;
  const adjust = KEY_ADJUST[event.key];
  if (adjust) {
    session.adjust(adjust[0], adjust[1]);
    if (session.overlayMode === "silhouette") session.setOverlayMode("wireframe");
    queueRedraw();
    event.preventDefault();
    return;
  }
  switch (event.key) {
    case "f":
      session.toggleStepMode();
      queueRedraw();
      break;
    case "o":
      session.setOverlayMode(session.overlayMode === "wireframe" ? "silhouette" : "wireframe");
      if (session.overlayMode === "silhouette") void refreshSilhouette().catch(reportError);
      queueRedraw();
      break;
    case "r":
      void refreshSilhouette().catch(reportError);
      break;
    case "Enter":
      void save().catch(reportError);
      break;
    case "x":
      void transition("flag").catch(reportError);
      break;
    case "p":
      void transition("approve").catch(reportError);
      break;
  }
}

function bootstrap(): void {
  document.addEventListener("keydown", onKey);
  el<HTMLButtonElement>("save-btn").addEventListener("click", () => void save().catch(reportError));
  el<HTMLButtonElement>("flag-btn").addEventListener("click", () => void transition("flag").catch(reportError));
  el<HTMLButtonElement>("approve-btn").addEventListener("click", () => void transition("approve").catch(reportError));
  el<HTMLButtonElement>("reload-btn").addEventListener("click", () => {
    void session
      .reload()
      .then(() => {
        conflictBanner().hidden = true;
        setStatus(`reloaded rev ${session.revision}`);
        queueRedraw();
      })
      .catch(reportError);
  });
  window.addEventListener("beforeunload", (event) => {
    if (session.dirty) event.preventDefault();
  });
  void refreshImageList().catch(reportError);
  setStatus("pick an image to annotate");
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", bootstrap);
} else {
  bootstrap();
}
