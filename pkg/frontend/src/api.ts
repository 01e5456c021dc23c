/** Typed client for the /v1 segmentation service. */

import type {
  ErrorDetail,
  LesionDetail,
  LesionSummary,
  SegmentRequest,
  SegmentResponse,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: ErrorDetail | null;

  constructor(status: number, detail: ErrorDetail | null, fallback: string) {
    super(detail ? detail.message : fallback);
    this.status = status;
    this.code = detail ? detail.code : "http_error";
    this.detail = detail;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** What the viewer needs from a /v1 backend; ApiClient is the real one. */
export interface SegmentService {
  lesions(): Promise<LesionSummary[]>;
  lesionDetail(id: string): Promise<LesionDetail>;
  segment(req: SegmentRequest): Promise<SegmentResponse>;
}

export class ApiClient implements SegmentService {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, init);
    if (!resp.ok) {
      let detail: ErrorDetail | null = null;
      try {
        const body = (await resp.json()) as { detail?: unknown };
        const d = body.detail;
        if (d && typeof d === "object" && "code" in d && "message" in d) {
          detail = d as ErrorDetail;
        }
      } catch {
        // non-JSON error body; fall through to the generic message
      }
      throw new ApiError(resp.status, detail, `HTTP ${resp.status} for ${path}`);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request("/v1/health");
  }

  lesions(): Promise<LesionSummary[]> {
    return this.request("/v1/lesions");
  }

  lesionDetail(id: string): Promise<LesionDetail> {
    return this.request(`/v1/lesions/${encodeURIComponent(id)}`);
  }

  segment(req: SegmentRequest): Promise<SegmentResponse> {
    return this.request("/v1/segment", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}
