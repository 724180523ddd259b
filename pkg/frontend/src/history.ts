/**
 * Client mirror of the server session: the committed step list, how many
 * of those steps are active, and the content hash the displayed image
 * must match. Steps are frozen on commit; undo only moves the active
 * count, and stepping after an undo drops the inactive tail exactly like
 * the server does.
 */
import type { SessionState, StepRecord, StepResponse, UndoResponse } from "./types.js";

export interface CommittedStep {
  record: Readonly<StepRecord>;
  /** server hash of the image after this step */
  ref: string;
  /** base64 PNG of the mask that was sent, kept for plan export */
  maskPng: string;
}

export class SessionHistory {
  readonly sessionId: string;
  readonly sourceRef: string;
  private steps: CommittedStep[] = [];
  private active = 0;

  constructor(session: SessionState) {
    this.sessionId = session.id;
    this.sourceRef = session.source_ref;
    this.active = session.active_steps;
  }

  get activeSteps(): number {
    return this.active;
  }

  get canUndo(): boolean {
    return this.active > 0;
  }

  get canExport(): boolean {
    return this.active > 0;
  }

  /** Hash the displayed image must match right now. */
  get currentRef(): string {
    if (this.active === 0) return this.sourceRef;
    return this.steps[this.active - 1]!.ref;
  }

  /** Active steps only, oldest first; frozen records. */
  committed(): readonly CommittedStep[] {
    return this.steps.slice(0, this.active);
  }

  /** Record a successful step. Returns false when the server's active
   *  count disagrees with ours, which means we must resync. */
  commit(response: StepResponse, maskPng: string): boolean {
    this.steps.length = this.active; // drop any undone tail
    this.steps.push({
      record: Object.freeze({ ...response.step }),
      ref: response.current_ref,
      maskPng,
    });
    this.active = this.steps.length;
    return response.active_steps === this.active;
  }

  /** Apply a server undo. Returns false when the server's view of the
   *  restored image differs from what we would display. */
  applyUndo(response: UndoResponse): boolean {
    if (response.active_steps !== this.active - 1) {
      this.active = response.active_steps;
      return false;
    }
    this.active = response.active_steps;
    return response.current_ref === this.currentRef;
  }

  /** Mask PNGs for every active step, keyed by mask_ref. */
  maskTable(): Record<string, string> {
    const table: Record<string, string> = {};
    for (const step of this.committed()) {
      table[step.record.mask_ref] = step.maskPng;
    }
    return table;
  }
}
