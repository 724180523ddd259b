import { describe, expect, it } from "vitest";

import { SessionHistory } from "../src/history.js";
import type { SessionState, StepRecord, StepResponse, UndoResponse } from "../src/types.js";

const HASH_A = "a".repeat(64);
const HASH_B = "b".repeat(64);
const HASH_C = "c".repeat(64);
const SOURCE = "5".repeat(64);

function record(maskRef: string, deltaR: number): StepRecord {
  return {
    mask_ref: maskRef,
    direction: "attenuate",
    strategy: "random",
    edit: { order: ["exposure"], exposure: 0.8 },
    r_pre: 0.4,
    r_post: 0.4 + deltaR,
    delta_r: deltaR,
    s_change: 0.2,
    sal_pre_mean: 0.5,
    sal_post_mean: 0.3,
  };
}

function session(): SessionState {
  return {
    id: "sess-1",
    source_ref: SOURCE,
    plan: { version: 1, source_ref: SOURCE, rng_seed: 0, steps: [] },
    active_steps: 0,
    created_at: "2024-01-01T00:00:00Z",
    updated_at: "2024-01-01T00:00:00Z",
    current_ref: SOURCE,
    current_png: "",
  };
}

function stepResponse(maskRef: string, ref: string, active: number): StepResponse {
  return {
    step: record(maskRef, -0.01),
    active_steps: active,
    current_ref: ref,
    preview_png: "",
    saliency_pre_png: "",
    saliency_post_png: "",
    delta_r: -0.01,
    s_change: 0.2,
  };
}

function undoResponse(ref: string, active: number): UndoResponse {
  return { active_steps: active, current_ref: ref, current_png: "" };
}

describe("SessionHistory", () => {
  it("starts at the source image with nothing to undo or export", () => {
    const history = new SessionHistory(session());
    expect(history.currentRef).toBe(SOURCE);
    expect(history.canUndo).toBe(false);
    expect(history.canExport).toBe(false);
    expect(history.activeSteps).toBe(0);
  });

  it("tracks applied steps and reconciles against the server count", () => {
    const history = new SessionHistory(session());
    expect(history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a")).toBe(true);
    expect(history.activeSteps).toBe(1);
    expect(history.currentRef).toBe(HASH_B);
    expect(history.canUndo).toBe(true);
    expect(history.canExport).toBe(true);
  });

  it("flags a count drift between client and server", () => {
    const history = new SessionHistory(session());
    // server claims two active steps after a single commit
    expect(history.commit(stepResponse(HASH_A, HASH_B, 2), "png-a")).toBe(false);
  });

  it("undo walks back one ref and re-enables the prior image", () => {
    const history = new SessionHistory(session());
    history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a");
    history.commit(stepResponse(HASH_A, HASH_C, 2), "png-a2");
    expect(history.applyUndo(undoResponse(HASH_B, 1))).toBe(true);
    expect(history.currentRef).toBe(HASH_B);
    expect(history.applyUndo(undoResponse(SOURCE, 0))).toBe(true);
    expect(history.currentRef).toBe(SOURCE);
    expect(history.canUndo).toBe(false);
    expect(history.canExport).toBe(false);
  });

  it("undo reports mismatched server state instead of trusting it", () => {
    const history = new SessionHistory(session());
    history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a");
    expect(history.applyUndo(undoResponse(HASH_C, 0))).toBe(false);
    expect(history.applyUndo(undoResponse(SOURCE, 5))).toBe(false);
  });

  it("stepping after undo truncates the stale branch", () => {
    const history = new SessionHistory(session());
    history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a");
    history.commit(stepResponse(HASH_A, HASH_C, 2), "png-a2");
    history.applyUndo(undoResponse(HASH_B, 1));
    history.commit(stepResponse(HASH_B, HASH_C, 2), "png-b");
    const committed = history.committed();
    expect(committed.length).toBe(2);
    expect(committed[1]?.record.mask_ref).toBe(HASH_B);
    expect(history.currentRef).toBe(HASH_C);
  });

  it("collects the mask bytes for every active step", () => {
    const history = new SessionHistory(session());
    history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a");
    history.commit(stepResponse(HASH_B, HASH_C, 2), "png-b");
    history.applyUndo(undoResponse(HASH_B, 1));
    expect(history.maskTable()).toEqual({ [HASH_A]: "png-a" });
  });

  it("freezes committed records against later mutation", () => {
    const history = new SessionHistory(session());
    history.commit(stepResponse(HASH_A, HASH_B, 1), "png-a");
    const committed = history.committed()[0];
    expect(committed).toBeDefined();
    expect(() => {
      (committed!.record as { delta_r: number }).delta_r = 99;
    }).toThrow();
  });
});
