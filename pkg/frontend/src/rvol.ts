/** RVOL decoding: magic "RVOL", u32le header length, JSON header
 * {dims, spacing, dtype, order}, raw x-fastest payload. Volumes are
 * f32le, masks u8 with values {0, 1}. */

export class RvolFormatError extends Error {}

export interface RvolVolume {
  kind: "volume";
  dims: [number, number, number];
  spacing: [number, number, number];
  data: Float32Array; // x-fastest
}

export interface RvolMask {
  kind: "mask";
  dims: [number, number, number];
  spacing: [number, number, number];
  data: Uint8Array; // x-fastest, 0/1
}

export function decodeBase64(text: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(text);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node fallback for the test environment
  const buf = (globalThis as { Buffer?: { from(t: string, e: string): Uint8Array } }).Buffer;
  if (!buf) throw new Error("no base64 decoder available");
  return new Uint8Array(buf.from(text, "base64"));
}

interface Header {
  dims: [number, number, number];
  spacing: [number, number, number];
  dtype: string;
  payloadOffset: number;
}

function readHeader(raw: Uint8Array): Header {
  if (raw.length < 8 || String.fromCharCode(...raw.slice(0, 4)) !== "RVOL") {
    throw new RvolFormatError("missing RVOL magic");
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const headerLen = view.getUint32(4, true);
  if (raw.length < 8 + headerLen) {
    throw new RvolFormatError("truncated header");
  }
  let doc: unknown;
  try {
    doc = JSON.parse(new TextDecoder().decode(raw.slice(8, 8 + headerLen)));
  } catch (exc) {
    throw new RvolFormatError(`bad header JSON: ${exc}`);
  }
  const h = doc as { dims?: number[]; spacing?: number[]; dtype?: string; order?: string };
  if (!h.dims || h.dims.length !== 3 || !h.spacing || h.spacing.length !== 3 || !h.dtype) {
    throw new RvolFormatError("incomplete header");
  }
  if (h.order !== "x-fastest") {
    throw new RvolFormatError(`unsupported order ${h.order}`);
  }
  return {
    dims: h.dims as [number, number, number],
    spacing: h.spacing as [number, number, number],
    dtype: h.dtype,
    payloadOffset: 8 + headerLen,
  };
}

export function decodeVolume(raw: Uint8Array): RvolVolume {
  const h = readHeader(raw);
  if (h.dtype !== "f32le") {
    throw new RvolFormatError(`expected a volume (f32le), got ${h.dtype}`);
  }
  const n = h.dims[0] * h.dims[1] * h.dims[2];
  const payload = raw.slice(h.payloadOffset);
  if (payload.length !== n * 4) {
    throw new RvolFormatError(`payload is ${payload.length} bytes, expected ${n * 4}`);
  }
  return {
    kind: "volume",
    dims: h.dims,
    spacing: h.spacing,
    data: new Float32Array(payload.buffer, payload.byteOffset, n),
  };
}

export function decodeMask(raw: Uint8Array): RvolMask {
  const h = readHeader(raw);
  if (h.dtype !== "u8") {
    throw new RvolFormatError(`expected a mask (u8), got ${h.dtype}`);
  }
  const n = h.dims[0] * h.dims[1] * h.dims[2];
  const payload = raw.slice(h.payloadOffset);
  if (payload.length !== n) {
    throw new RvolFormatError(`payload is ${payload.length} bytes, expected ${n}`);
  }
  for (let i = 0; i < n; i++) {
    if (payload[i] > 1) throw new RvolFormatError("mask payload has values outside {0,1}");
  }
  return { kind: "mask", dims: h.dims, spacing: h.spacing, data: payload };
}

/** Value at (x, y, z) of an x-fastest payload. */
export function at(
  data: Float32Array | Uint8Array,
  dims: [number, number, number],
  x: number,
  y: number,
  z: number,
): number {
  return data[x + dims[0] * (y + dims[1] * z)];
}

/** Number of set voxels in axial slice z of a mask. */
export function maskCountOnSlice(mask: RvolMask, z: number): number {
  const [nx, ny] = mask.dims;
  const base = nx * ny * z;
  let count = 0;
  for (let i = 0; i < nx * ny; i++) count += mask.data[base + i];
  return count;
}

export function maskCountTotal(mask: RvolMask): number {
  let count = 0;
  for (let i = 0; i < mask.data.length; i++) count += mask.data[i];
  return count;
}
