/** Pure slice rendering: grayscale windowing of the ppb volume plus
 * translucent mask overlays, composited into an RGBA pixel buffer. No
 * DOM or network access — the caller blits the buffer to a canvas. */

import { at, type RvolMask, type RvolVolume } from "./rvol.js";

export interface GrayWindow {
  lo: number;
  hi: number;
}

export interface OverlaySpec {
  mask: RvolMask;
  color: [number, number, number];
  alpha: number; // 0..1
}

/** Fixed window over the whole patch (min/max of the volume). */
export function volumeWindow(volume: RvolVolume): GrayWindow {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < volume.data.length; i++) {
    const v = volume.data[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) hi = lo + 1;
  return { lo, hi };
}

export function renderSlice(
  volume: RvolVolume,
  slice: number,
  win: GrayWindow,
  overlays: OverlaySpec[],
): Uint8ClampedArray<ArrayBuffer> {
  const [nx, ny] = volume.dims;
  const out = new Uint8ClampedArray(nx * ny * 4);
  const span = win.hi - win.lo;
  for (let y = 0; y < ny; y++) {
    for (let x = 0; x < nx; x++) {
      let r: number;
      let g: number;
      let b: number;
      const t = (at(volume.data, volume.dims, x, y, slice) - win.lo) / span;
      r = g = b = 255 * Math.min(1, Math.max(0, t));
      for (const ov of overlays) {
        if (at(ov.mask.data, ov.mask.dims, x, y, slice)) {
          r = r * (1 - ov.alpha) + ov.color[0] * ov.alpha;
          g = g * (1 - ov.alpha) + ov.color[1] * ov.alpha;
          b = b * (1 - ov.alpha) + ov.color[2] * ov.alpha;
        }
      }
      const p = 4 * (y * nx + x);
      out[p] = r;
      out[p + 1] = g;
      out[p + 2] = b;
      out[p + 3] = 255;
    }
  }
  return out;
}

/** Pixels on the slice whose color was touched by the given overlay —
 * used to cross-check the rendered count against the mask. */
export function overlayPixelCount(
  rendered: Uint8ClampedArray,
  plain: Uint8ClampedArray,
): number {
  let count = 0;
  for (let p = 0; p < rendered.length; p += 4) {
    if (
      rendered[p] !== plain[p] ||
      rendered[p + 1] !== plain[p + 1] ||
      rendered[p + 2] !== plain[p + 2]
    ) {
      count++;
    }
  }
  return count;
}
