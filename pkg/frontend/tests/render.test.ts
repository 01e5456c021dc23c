import { describe, expect, it } from "vitest";

import {
  overlayPixelCount,
  renderSlice,
  volumeWindow,
} from "../src/render.js";
import {
  decodeBase64,
  decodeMask,
  decodeVolume,
  maskCountOnSlice,
} from "../src/rvol.js";
import type { LesionDetail, SegmentResponse } from "../src/types.js";
import { loadFixture } from "./helpers.js";

const detail = loadFixture<LesionDetail>("lesion_detail.json");
const volume = decodeVolume(decodeBase64(detail.volume_b64));
const segment = loadFixture<SegmentResponse>("segment_w1.json");
const highMask = decodeMask(decodeBase64(segment.high_mask_b64));

describe("volumeWindow", () => {
  it("covers the volume range", () => {
    const win = volumeWindow(volume);
    expect(win.hi).toBeGreaterThan(win.lo);
    for (const v of volume.data) {
      expect(v).toBeGreaterThanOrEqual(win.lo);
      expect(v).toBeLessThanOrEqual(win.hi);
    }
  });
});

describe("renderSlice", () => {
  const win = volumeWindow(volume);

  it("produces an opaque RGBA buffer of slice size", () => {
    const px = renderSlice(volume, 0, win, []);
    expect(px.length).toBe(volume.dims[0] * volume.dims[1] * 4);
    for (let p = 3; p < px.length; p += 4) expect(px[p]).toBe(255);
  });

  it("windows extremes to black and white", () => {
    const px = renderSlice(volume, 5, win, []);
    // grayscale: all channels equal everywhere
    for (let p = 0; p < px.length; p += 4) {
      expect(px[p]).toBe(px[p + 1]);
      expect(px[p]).toBe(px[p + 2]);
    }
    const narrow = renderSlice(volume, 5, { lo: 0, hi: 1e-9 }, []);
    const wide = renderSlice(volume, 5, { lo: -1e12, hi: 1e12 }, []);
    // clamping: a tiny window saturates, a huge window flattens mid-gray
    expect(Math.max(...narrow)).toBe(255);
    for (let p = 0; p < wide.length; p += 4) {
      expect(wide[p]).toBeGreaterThanOrEqual(127);
      expect(wide[p]).toBeLessThanOrEqual(128);
    }
  });

  it("is pure: identical inputs give identical buffers and inputs stay intact", () => {
    const volBefore = volume.data.slice();
    const a = renderSlice(volume, 4, win, [
      { mask: highMask, color: [255, 0, 0], alpha: 0.5 },
    ]);
    const b = renderSlice(volume, 4, win, [
      { mask: highMask, color: [255, 0, 0], alpha: 0.5 },
    ]);
    expect(a).toEqual(b);
    expect(volume.data).toEqual(volBefore);
  });

  it("overlay touches exactly the mask's pixels on the slice", () => {
    for (let z = 0; z < volume.dims[2]; z++) {
      const plain = renderSlice(volume, z, win, []);
      const over = renderSlice(volume, z, win, [
        { mask: highMask, color: [255, 0, 255], alpha: 1.0 },
      ]);
      expect(overlayPixelCount(over, plain)).toBe(
        maskCountOnSlice(highMask, z),
      );
    }
  });
});
