import { describe, expect, it } from "vitest";

import { exportDocument, validatePlan } from "../src/plan.js";
import type { PlanDocument, StepRecord } from "../src/types.js";

const SOURCE = "0".repeat(64);
const MASK = "f".repeat(64);

function goodStep(): StepRecord {
  return {
    mask_ref: MASK,
    direction: "attenuate",
    strategy: "best_realism",
    edit: { order: ["exposure", "saturation"], exposure: 0.85, saturation: 0.7 },
    r_pre: 0.41,
    r_post: 0.4,
    delta_r: -0.01,
    s_change: 0.3,
    sal_pre_mean: 0.6,
    sal_post_mean: 0.4,
  };
}

function goodDoc(): PlanDocument {
  return {
    version: 1,
    source_ref: SOURCE,
    rng_seed: 3,
    steps: [goodStep()],
    masks: { [MASK]: "iVBORw0KGgo=" },
  };
}

describe("validatePlan", () => {
  it("accepts a complete document", () => {
    expect(validatePlan(goodDoc())).toEqual([]);
  });

  it("rejects an unknown version", () => {
    const doc = { ...goodDoc(), version: 2 };
    expect(validatePlan(doc).join(" ")).toMatch(/version/);
  });

  it("rejects a malformed source ref", () => {
    const doc = { ...goodDoc(), source_ref: "not-a-hash" };
    expect(validatePlan(doc).join(" ")).toMatch(/source_ref/);
  });

  it("rejects a step whose mask bytes are missing from the table", () => {
    const doc = goodDoc();
    doc.masks = {};
    expect(validatePlan(doc).join(" ")).toMatch(/mask/);
  });

  it("rejects an unknown operator in the order", () => {
    const doc = goodDoc();
    doc.steps[0]!.edit = { order: ["exposure", "sharpen" as never], exposure: 0.8 };
    expect(validatePlan(doc).join(" ")).toMatch(/sharpen/);
  });

  it("rejects an operator listed without a value", () => {
    const doc = goodDoc();
    doc.steps[0]!.edit = { order: ["exposure"] };
    expect(validatePlan(doc).join(" ")).toMatch(/exposure/);
  });

  it("rejects a repeated operator", () => {
    const doc = goodDoc();
    doc.steps[0]!.edit = { order: ["exposure", "exposure"], exposure: 0.8 };
    expect(validatePlan(doc).length).toBeGreaterThan(0);
  });

  it("rejects an empty or overlong order", () => {
    const doc = goodDoc();
    doc.steps[0]!.edit = { order: [] };
    expect(validatePlan(doc).length).toBeGreaterThan(0);

    const five = goodDoc();
    five.steps[0]!.edit = {
      order: ["exposure", "saturation", "color_curve", "white_balance", "exposure"],
      exposure: 1,
      saturation: 1,
      color_curve: 1,
      white_balance: 1,
    };
    expect(validatePlan(five).length).toBeGreaterThan(0);
  });

  it("rejects non-numeric diagnostics", () => {
    const doc = goodDoc();
    (doc.steps[0] as { delta_r: unknown }).delta_r = "small";
    expect(validatePlan(doc).join(" ")).toMatch(/delta_r/);
  });

  it("rejects a bad direction", () => {
    const doc = goodDoc();
    (doc.steps[0] as { direction: unknown }).direction = "sideways";
    expect(validatePlan(doc).join(" ")).toMatch(/direction/);
  });
});

describe("exportDocument", () => {
  it("assembles the active steps and their masks", () => {
    const plan = { version: 1, source_ref: SOURCE, rng_seed: 3, steps: [] };
    const doc = exportDocument(plan, [goodStep()], { [MASK]: "iVBORw0KGgo=" });
    expect(doc.version).toBe(1);
    expect(doc.source_ref).toBe(SOURCE);
    expect(doc.steps.length).toBe(1);
    expect(doc.masks?.[MASK]).toBe("iVBORw0KGgo=");
    expect(validatePlan(doc)).toEqual([]);
  });

  it("refuses to export when validation fails", () => {
    const plan = { version: 1, source_ref: SOURCE, rng_seed: 3, steps: [] };
    const broken = goodStep();
    broken.edit = { order: [] };
    expect(() => exportDocument(plan, [broken], { [MASK]: "x" })).toThrow(
      /refusing to export/,
    );
  });

  it("round trips through JSON unchanged", () => {
    const plan = { version: 1, source_ref: SOURCE, rng_seed: 3, steps: [] };
    const doc = exportDocument(plan, [goodStep()], { [MASK]: "iVBORw0KGgo=" });
    const revived = JSON.parse(JSON.stringify(doc)) as PlanDocument;
    expect(validatePlan(revived)).toEqual([]);
    expect(revived).toEqual(doc);
  });
});
