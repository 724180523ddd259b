/**
 * Plan export helpers: validate the server-persisted plan document and
 * attach the client's mask PNGs so the download replays anywhere.
 */
import { OPERATORS, PLAN_VERSION } from "./types.js";
import type { PlanDocument, StepRecord } from "./types.js";

const DIRECTIONS = new Set(["attenuate", "amplify"]);
const HASH_RE = /^[0-9a-f]{64}$/;

function stepProblems(step: StepRecord, index: number): string[] {
  const at = `steps[${index}]`;
  const problems: string[] = [];
  if (typeof step.mask_ref !== "string" || step.mask_ref.length === 0) {
    problems.push(`${at}: missing mask_ref`);
  }
  if (!DIRECTIONS.has(step.direction)) {
    problems.push(`${at}: bad direction ${JSON.stringify(step.direction)}`);
  }
  const edit = step.edit;
  if (!edit || !Array.isArray(edit.order)) {
    problems.push(`${at}: edit.order missing`);
    return problems;
  }
  if (edit.order.length === 0 || edit.order.length > 4) {
    problems.push(`${at}: edit.order has ${edit.order.length} operators`);
  }
  for (const op of edit.order) {
    if (!(OPERATORS as readonly string[]).includes(op)) {
      problems.push(`${at}: unknown operator ${JSON.stringify(op)}`);
    } else if (typeof edit[op] !== "number") {
      problems.push(`${at}: no value for ${op}`);
    }
  }
  if (new Set(edit.order).size !== edit.order.length) {
    problems.push(`${at}: repeated operator in order`);
  }
  for (const field of ["r_pre", "r_post", "delta_r", "s_change"] as const) {
    if (typeof step[field] !== "number") problems.push(`${at}: ${field} is not a number`);
  }
  return problems;
}

/** Empty result means the document is a valid replayable plan. */
export function validatePlan(doc: PlanDocument): string[] {
  const problems: string[] = [];
  if (doc.version !== PLAN_VERSION) problems.push(`unsupported version ${doc.version}`);
  if (typeof doc.source_ref !== "string" || !HASH_RE.test(doc.source_ref)) {
    problems.push("source_ref is not a content hash");
  }
  if (!Array.isArray(doc.steps)) {
    problems.push("steps is not a list");
    return problems;
  }
  doc.steps.forEach((step, i) => problems.push(...stepProblems(step, i)));
  if (doc.masks) {
    for (const step of doc.steps) {
      if (!(step.mask_ref in doc.masks)) problems.push(`no embedded mask for ${step.mask_ref}`);
    }
  }
  return problems;
}

/** Build the downloadable document: plan fields plus an embedded mask
 *  table. Only active steps belong in an export, so the caller passes
 *  the already-truncated step list. */
export function exportDocument(
  plan: PlanDocument,
  activeSteps: StepRecord[],
  masks: Record<string, string>,
): PlanDocument {
  const doc: PlanDocument = {
    version: plan.version,
    source_ref: plan.source_ref,
    rng_seed: plan.rng_seed,
    steps: activeSteps,
    masks,
  };
  const problems = validatePlan(doc);
  if (problems.length > 0) {
    throw new Error(`refusing to export an invalid plan: ${problems.join("; ")}`);
  }
  return doc;
}
