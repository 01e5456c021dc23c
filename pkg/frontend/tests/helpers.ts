/** Fixture loading and a fixture-backed fake /v1 backend for unit tests.
 * Fixtures are recorded verbatim from a live service. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { SegmentService } from "../src/api.js";
import type {
  LesionDetail,
  LesionSummary,
  SegmentRequest,
  SegmentResponse,
} from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export function wTag(w: number): string {
  return String(w).replace(".", "p");
}

export const PRESET_GRID = [0, 0.1, 0.3, 0.5, 1, 3, 5, 10];

/** Serves the recorded fixtures; records every segment request it sees.
 * Resolution can be deferred to exercise supersession. */
export class FixtureApi implements SegmentService {
  readonly segmentRequests: SegmentRequest[] = [];
  /** When set, segment() promises wait until release() is called. */
  manual = false;
  private waiters: Array<() => void> = [];

  lesions(): Promise<LesionSummary[]> {
    return Promise.resolve(loadFixture<LesionSummary[]>("lesions.json"));
  }

  lesionDetail(id: string): Promise<LesionDetail> {
    const detail = loadFixture<LesionDetail>("lesion_detail.json");
    const phantom = loadFixture<LesionDetail>("phantom_detail.json");
    if (id === detail.id) return Promise.resolve(detail);
    if (id === phantom.id) return Promise.resolve(phantom);
    return Promise.reject(new Error(`no fixture for lesion ${id}`));
  }

  async segment(req: SegmentRequest): Promise<SegmentResponse> {
    this.segmentRequests.push(req);
    if (this.manual) {
      await new Promise<void>((resolve) => this.waiters.push(resolve));
    }
    const detail = loadFixture<LesionDetail>("lesion_detail.json");
    const prefix = req.lesion_id === detail.id || req.lesion_id === undefined
      ? "segment"
      : "phantom_segment";
    return loadFixture<SegmentResponse>(`${prefix}_w${wTag(req.w)}.json`);
  }

  /** Release the oldest blocked segment call. */
  release(): void {
    const next = this.waiters.shift();
    if (next) next();
  }

  releaseAll(): void {
    while (this.waiters.length) this.release();
  }
}
