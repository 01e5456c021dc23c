/** Shared shapes for the /v1 API and viewer state. */

export interface LesionSummary {
  id: string;
  label: string; // "rim+" | "rim-"
  has_ground_truth: boolean;
  dims: number[] | null;
}

export interface LesionDetail {
  id: string;
  label: string;
  dims: number[];
  spacing: number[];
  has_ground_truth: boolean;
  volume_b64: string;
  mask_b64: string;
  gt_rim_b64?: string;
}

export interface ParamOverrides {
  mu?: number;
  v?: number;
  epsilon?: number;
  dt?: number;
  max_iters?: number;
  tol?: number;
  fidelity_exponent?: number;
}

export interface SegmentRequest {
  lesion_id?: string;
  volume_b64?: string;
  mask_b64?: string;
  w: number;
  params?: ParamOverrides;
}

export interface SegmentResponse {
  dims: number[];
  high_mask_b64: string;
  low_mask_b64: string;
  c1: number;
  c2: number;
  c1_ppb: number;
  c2_ppb: number;
  iterations: number;
  converged: boolean;
  degenerate: boolean;
  dice: number | null;
  solver_ms: number;
}

/** Structured error detail the service puts under {"detail": ...}. */
export interface ErrorDetail {
  code: string;
  message: string;
  [key: string]: unknown;
}

/** The preset grid offered next to the continuous slider. */
export const W_PRESETS = [0, 0.1, 0.3, 0.5, 1, 3, 5, 10] as const;

export const DEFAULT_W = 1.0;
export const DEBOUNCE_MS = 150;
