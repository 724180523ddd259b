export type Direction = "attenuate" | "amplify";

export const STRATEGIES = ["random", "best_saliency", "best_realism"] as const;
export type Strategy = (typeof STRATEGIES)[number];

export const OPERATORS = [
  "exposure",
  "saturation",
  "color_curve",
  "white_balance",
] as const;
export type Operator = (typeof OPERATORS)[number];

export const PLAN_VERSION = 1;

/** One operator order plus the factors that were applied, as serialized
 *  on the wire: {"order": [...], "exposure": 1.2, ...}. */
export interface EditJson {
  order: Operator[];
  [op: string]: number | Operator[] | undefined;
}

export interface StepRecord {
  mask_ref: string;
  direction: Direction;
  strategy: Strategy;
  edit: EditJson;
  r_pre: number;
  r_post: number;
  delta_r: number;
  s_change: number;
  sal_pre_mean: number;
  sal_post_mean: number;
  candidates?: unknown[];
}

export interface PlanDocument {
  version: number;
  source_ref: string;
  rng_seed: number;
  steps: StepRecord[];
  /** base64 PNG per mask_ref; embedded so the plan replays anywhere */
  masks?: Record<string, string>;
}

export interface SessionState {
  id: string;
  source_ref: string;
  plan: PlanDocument;
  active_steps: number;
  created_at: string;
  updated_at: string;
  current_ref: string;
  current_png: string;
}

export interface StepResponse {
  step: StepRecord;
  active_steps: number;
  current_ref: string;
  preview_png: string;
  saliency_pre_png: string;
  saliency_post_png: string;
  delta_r: number;
  s_change: number;
}

export interface UndoResponse {
  active_steps: number;
  current_ref: string;
  current_png: string;
}

export interface HealthInfo {
  status: string;
  version: string;
  models: {
    critic: { resolution: number } | null;
    estimators: Record<string, { resolution: number; param_count: number }>;
  };
  saliency: string | null;
}

/** Raw pixel buffers; the hash and overlay code works on these so it runs
 *  both in the browser (from canvas ImageData) and under node tests. */
export interface GrayBuffer {
  width: number;
  height: number;
  /** row-major, one byte per pixel */
  data: Uint8Array;
}

export interface RgbBuffer {
  width: number;
  height: number;
  /** row-major, 3 bytes per pixel */
  data: Uint8Array;
}
