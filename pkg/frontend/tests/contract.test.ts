import { describe, expect, it, vi } from "vitest";

import { TunerStore } from "../src/state.js";
import { decodeBase64, decodeMask, maskCountTotal } from "../src/rvol.js";
import type { LesionDetail, SegmentResponse } from "../src/types.js";
import { FixtureApi, loadFixture, PRESET_GRID, wTag } from "./helpers.js";

const phantom = loadFixture<LesionDetail>("phantom_detail.json");

describe("recorded /v1 contract", () => {
  it("segment fixtures exist for every preset and share the lesion grid", () => {
    const detail = loadFixture<LesionDetail>("lesion_detail.json");
    for (const w of PRESET_GRID) {
      const doc = loadFixture<SegmentResponse>(`segment_w${wTag(w)}.json`);
      expect(doc.dims).toEqual(detail.dims);
      expect(doc.c1).toBeGreaterThanOrEqual(doc.c2);
      expect(doc.iterations).toBeGreaterThanOrEqual(0);
      expect(doc.solver_ms).toBeGreaterThanOrEqual(0);
    }
  });

  it("reported dice is between 0 and 1 when ground truth exists", () => {
    for (const w of PRESET_GRID) {
      const doc = loadFixture<SegmentResponse>(`segment_w${wTag(w)}.json`);
      expect(doc.dice).not.toBeNull();
      expect(doc.dice!).toBeGreaterThanOrEqual(0);
      expect(doc.dice!).toBeLessThanOrEqual(1);
    }
  });
});

describe("rim thinning on the noise-free full-rim phantom", () => {
  function highCount(w: number): number {
    const doc = loadFixture<SegmentResponse>(`phantom_segment_w${wTag(w)}.json`);
    return maskCountTotal(decodeMask(decodeBase64(doc.high_mask_b64)));
  }

  it("the high-intensity mask eventually shrinks as w grows", () => {
    const counts = PRESET_GRID.map(highCount);
    expect(counts[0]).toBeGreaterThan(0);
    const last = counts[counts.length - 1];
    expect(last).toBeLessThan(counts[0]);
    // and the shrinkage is not a one-off blip at the tail: the minimum
    // over the large-w half is below every small-w count
    const small = counts.slice(0, 4);
    const large = counts.slice(4);
    expect(Math.min(...large)).toBeLessThan(Math.min(...small));
  });

  it("the store walks the same curve through the debounced loop", async () => {
    vi.useFakeTimers();
    try {
      const api = new FixtureApi();
      const store = new TunerStore(api);
      await store.loadLesions();
      await store.selectLesion(phantom.id);
      const seen: number[] = [];
      for (const w of PRESET_GRID) {
        store.setW(w);
        await vi.advanceTimersByTimeAsync(150);
        seen.push(maskCountTotal(store.state.highMask!));
      }
      expect(seen).toEqual(PRESET_GRID.map(highCount));
      expect(seen[seen.length - 1]).toBeLessThan(seen[0]);
    } finally {
      vi.useRealTimers();
    }
  });
});

describe("phantom fixtures", () => {
  it("has no ground truth and no dice", () => {
    expect(phantom.has_ground_truth).toBe(false);
    const doc = loadFixture<SegmentResponse>("phantom_segment_w1.json");
    expect(doc.dice).toBeNull();
  });
});
