/**
 * DOM wiring for the editing studio. Every pixel shown here came from the
 * service; this file only paints masks, sends requests, and renders what
 * comes back. State lives in MaskLayer (the drawing) and SessionHistory
 * (the committed steps).
 */
import { ClientBusyError, ServiceError, StudioClient } from "./api.js";
import { imageHash, rgbaToRgb } from "./hash.js";
import { SessionHistory } from "./history.js";
import { MaskLayer } from "./mask.js";
import type { BrushMode } from "./mask.js";
import { colorizeSaliency, compositeOver, tintMask } from "./overlay.js";
import { base64ToBytes, bytesToBase64 } from "./png.js";
import { exportDocument } from "./plan.js";
import { STRATEGIES } from "./types.js";
import type { Direction, GrayBuffer, Strategy } from "./types.js";

interface Controls {
  file: HTMLInputElement;
  brush: HTMLButtonElement;
  eraser: HTMLButtonElement;
  radius: HTMLInputElement;
  clearMask: HTMLButtonElement;
  direction: HTMLSelectElement;
  strategy: HTMLSelectElement;
  apply: HTMLButtonElement;
  undo: HTMLButtonElement;
  exportPlan: HTMLButtonElement;
  toggleMask: HTMLInputElement;
  toggleSalPre: HTMLInputElement;
  toggleSalPost: HTMLInputElement;
  deltaR: HTMLElement;
  sChange: HTMLElement;
  stepList: HTMLElement;
  status: HTMLElement;
  retry: HTMLButtonElement;
}

function grab(root: Document, id: string): HTMLElement {
  const el = root.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

async function decodePng(base64: string): Promise<ImageBitmap> {
  // base64ToBytes returns an exact-size buffer, no offset to worry about
  const blob = new Blob([base64ToBytes(base64).buffer as ArrayBuffer], { type: "image/png" });
  return createImageBitmap(blob);
}

export class StudioApp {
  private readonly client: StudioClient;
  private readonly canvas: HTMLCanvasElement;
  private readonly ctx: CanvasRenderingContext2D;
  private readonly ui: Controls;

  private mask: MaskLayer | null = null;
  private history: SessionHistory | null = null;
  private basePixels: Uint8ClampedArray | null = null;
  private salPre: GrayBuffer | null = null;
  private salPost: GrayBuffer | null = null;
  private mode: BrushMode = "brush";
  private drawing = false;
  private lastAction: (() => Promise<void>) | null = null;

  constructor(doc: Document, client: StudioClient) {
    this.client = client;
    this.canvas = grab(doc, "preview") as HTMLCanvasElement;
    const ctx = this.canvas.getContext("2d", { willReadFrequently: true });
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
    this.ui = {
      file: grab(doc, "file") as HTMLInputElement,
      brush: grab(doc, "brush") as HTMLButtonElement,
      eraser: grab(doc, "eraser") as HTMLButtonElement,
      radius: grab(doc, "radius") as HTMLInputElement,
      clearMask: grab(doc, "clear-mask") as HTMLButtonElement,
      direction: grab(doc, "direction") as HTMLSelectElement,
      strategy: grab(doc, "strategy") as HTMLSelectElement,
      apply: grab(doc, "apply") as HTMLButtonElement,
      undo: grab(doc, "undo") as HTMLButtonElement,
      exportPlan: grab(doc, "export-plan") as HTMLButtonElement,
      toggleMask: grab(doc, "toggle-mask") as HTMLInputElement,
      toggleSalPre: grab(doc, "toggle-sal-pre") as HTMLInputElement,
      toggleSalPost: grab(doc, "toggle-sal-post") as HTMLInputElement,
      deltaR: grab(doc, "delta-r"),
      sChange: grab(doc, "s-change"),
      stepList: grab(doc, "step-list"),
      status: grab(doc, "status"),
      retry: grab(doc, "retry") as HTMLButtonElement,
    };
    for (const strategy of STRATEGIES) {
      const opt = doc.createElement("option");
      opt.value = strategy;
      opt.textContent = strategy;
      this.ui.strategy.appendChild(opt);
    }
    this.wire();
    this.refreshControls();
  }

  private wire(): void {
    this.ui.file.addEventListener("change", () => {
      const file = this.ui.file.files?.[0];
      if (file) void this.guarded(() => this.openImage(file));
    });
    this.ui.brush.addEventListener("click", () => this.setMode("brush"));
    this.ui.eraser.addEventListener("click", () => this.setMode("eraser"));
    this.ui.clearMask.addEventListener("click", () => {
      this.mask?.clear();
      this.redraw();
      this.refreshControls();
    });
    this.ui.apply.addEventListener("click", () => void this.guarded(() => this.applyStep()));
    this.ui.undo.addEventListener("click", () => void this.guarded(() => this.undoStep()));
    this.ui.exportPlan.addEventListener("click", () => void this.guarded(() => this.exportPlan()));
    this.ui.retry.addEventListener("click", () => {
      const again = this.lastAction;
      if (again) void this.guarded(again);
    });
    for (const toggle of [this.ui.toggleMask, this.ui.toggleSalPre, this.ui.toggleSalPost]) {
      toggle.addEventListener("change", () => this.redraw());
    }
    this.canvas.addEventListener("pointerdown", (ev) => this.beginStroke(ev));
    this.canvas.addEventListener("pointermove", (ev) => this.continueStroke(ev));
    for (const name of ["pointerup", "pointerleave", "pointercancel"] as const) {
      this.canvas.addEventListener(name, () => {
        this.drawing = false;
        this.refreshControls();
      });
    }
  }

  private setMode(mode: BrushMode): void {
    this.mode = mode;
    this.ui.brush.classList.toggle("active", mode === "brush");
    this.ui.eraser.classList.toggle("active", mode === "eraser");
  }

  private canvasPoint(ev: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((ev.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }

  private beginStroke(ev: PointerEvent): void {
    if (!this.mask) return;
    this.drawing = true;
    this.canvas.setPointerCapture(ev.pointerId);
    this.mask.stroke([this.canvasPoint(ev)], Number(this.ui.radius.value), this.mode);
    this.redraw();
  }

  private continueStroke(ev: PointerEvent): void {
    if (!this.drawing || !this.mask) return;
    this.mask.stroke([this.canvasPoint(ev)], Number(this.ui.radius.value), this.mode);
    this.redraw();
  }

  /** Run an action with the error bar and retry affordance. */
  private async guarded(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    this.setStatus("");
    this.refreshControls();
    try {
      await action();
      this.lastAction = null;
    } catch (err) {
      if (err instanceof ClientBusyError) return; // the disabled button already says so
      const message = err instanceof Error ? err.message : String(err);
      const retryable = err instanceof ServiceError ? err.retryable : true;
      this.setStatus(message, retryable);
    } finally {
      this.refreshControls();
    }
  }

  private setStatus(message: string, retryable = false): void {
    this.ui.status.textContent = message;
    this.ui.retry.hidden = !(message && retryable);
  }

  private async openImage(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    const session = await this.client.createSession(bytesToBase64(bytes));
    this.history = new SessionHistory(session);
    await this.showServedImage(session.current_png, session.current_ref);
    this.mask = new MaskLayer(this.canvas.width, this.canvas.height);
    this.salPre = null;
    this.salPost = null;
    this.renderSteps();
    this.ui.deltaR.textContent = "–";
    this.ui.sChange.textContent = "–";
  }

  /** Draw a served PNG and verify it against the server's content hash. */
  private async showServedImage(pngBase64: string, expectedRef: string): Promise<void> {
    const bitmap = await decodePng(pngBase64);
    this.canvas.width = bitmap.width;
    this.canvas.height = bitmap.height;
    this.ctx.drawImage(bitmap, 0, 0);
    const data = this.ctx.getImageData(0, 0, bitmap.width, bitmap.height);
    this.basePixels = data.data;
    const shown = await imageHash(rgbaToRgb(bitmap.width, bitmap.height, data.data));
    if (shown !== expectedRef) {
      this.setStatus("displayed image does not match the server hash; resyncing", true);
    }
    this.redraw();
  }

  private async grayFromPng(pngBase64: string): Promise<GrayBuffer> {
    const bitmap = await decodePng(pngBase64);
    const scratch = document.createElement("canvas");
    scratch.width = bitmap.width;
    scratch.height = bitmap.height;
    const sctx = scratch.getContext("2d");
    if (!sctx) throw new Error("2d canvas unavailable");
    sctx.drawImage(bitmap, 0, 0);
    const rgba = sctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
    const data = new Uint8Array(bitmap.width * bitmap.height);
    for (let i = 0; i < data.length; i++) data[i] = rgba[i * 4]!;
    return { width: bitmap.width, height: bitmap.height, data };
  }

  private async applyStep(): Promise<void> {
    if (!this.mask || !this.history) throw new Error("load an image first");
    if (this.mask.isEmpty()) {
      // inline validation, nothing is sent
      this.setStatus("paint a mask before applying");
      return;
    }
    const maskPng = this.mask.toPngBase64();
    const response = await this.client.step(
      this.history.sessionId,
      maskPng,
      this.ui.direction.value as Direction,
      this.ui.strategy.value as Strategy,
    );
    const drawnHash = await this.mask.hash();
    const inSync = this.history.commit(response, maskPng);
    if (response.step.mask_ref !== drawnHash) {
      this.setStatus("server stored a different mask than was drawn", false);
    }
    this.salPre = await this.grayFromPng(response.saliency_pre_png);
    this.salPost = await this.grayFromPng(response.saliency_post_png);
    await this.showServedImage(response.preview_png, response.current_ref);
    this.ui.deltaR.textContent = response.delta_r.toFixed(4);
    this.ui.sChange.textContent = response.s_change.toFixed(4);
    this.renderSteps();
    if (!inSync) await this.resync();
  }

  private async undoStep(): Promise<void> {
    if (!this.history) throw new Error("no session");
    const response = await this.client.undo(this.history.sessionId);
    const reconciled = this.history.applyUndo(response);
    await this.showServedImage(response.current_png, response.current_ref);
    this.renderSteps();
    if (!reconciled) await this.resync();
  }

  private async resync(): Promise<void> {
    if (!this.history) return;
    const session = await this.client.getSession(this.history.sessionId);
    this.history = new SessionHistory(session);
    await this.showServedImage(session.current_png, session.current_ref);
    this.renderSteps();
  }

  private async exportPlan(): Promise<void> {
    if (!this.history || !this.history.canExport) throw new Error("nothing to export");
    const session = await this.client.getSession(this.history.sessionId);
    const active = session.plan.steps.slice(0, session.active_steps);
    const doc = exportDocument(session.plan, active, this.history.maskTable());
    download(`plan-${session.id.slice(0, 8)}.json`, new Blob([JSON.stringify(doc, null, 2)], { type: "application/json" }));
    download(
      `final-${session.id.slice(0, 8)}.png`,
      new Blob([base64ToBytes(session.current_png).buffer as ArrayBuffer], { type: "image/png" }),
    );
  }

  private renderSteps(): void {
    if (!this.history) {
      this.ui.stepList.textContent = "";
      return;
    }
    this.ui.stepList.textContent = "";
    this.history.committed().forEach((step, i) => {
      const li = document.createElement("li");
      const edit = step.record.edit.order
        .map((op) => `${op}=${(step.record.edit[op] as number).toFixed(3)}`)
        .join(", ");
      li.textContent =
        `${i + 1}. ${step.record.direction} (${step.record.strategy}) ` +
        `dR=${step.record.delta_r.toFixed(4)} S=${step.record.s_change.toFixed(4)} [${edit}]`;
      this.ui.stepList.appendChild(li);
    });
  }

  private redraw(): void {
    if (!this.basePixels) return;
    const { width, height } = this.canvas;
    let pixels: Uint8ClampedArray = this.basePixels.slice();
    if (this.ui.toggleSalPre.checked && this.salPre) {
      pixels = compositeOver(pixels, colorizeSaliency(this.salPre));
    }
    if (this.ui.toggleSalPost.checked && this.salPost) {
      pixels = compositeOver(pixels, colorizeSaliency(this.salPost));
    }
    if (this.ui.toggleMask.checked && this.mask) {
      pixels = compositeOver(pixels, tintMask(this.mask.toBuffer()));
    }
    this.ctx.putImageData(new ImageData(pixels as ImageData["data"], width, height), 0, 0);
  }

  private refreshControls(): void {
    const ready = this.mask !== null && this.history !== null;
    const busy = this.client.busy;
    this.ui.apply.disabled = !ready || busy || (this.mask?.isEmpty() ?? true);
    this.ui.undo.disabled = !ready || busy || !(this.history?.canUndo ?? false);
    this.ui.exportPlan.disabled = !ready || busy || !(this.history?.canExport ?? false);
  }
}

function download(filename: string, blob: Blob): void {
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}
