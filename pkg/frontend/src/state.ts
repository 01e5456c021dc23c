/** Viewer state store: lesion selection, debounced weight changes, slice
 * navigation, and segment-request supersession.
 *
 * Concurrency contract: at most one segment response is ever rendered
 * per issued request generation; a request issued later always wins,
 * even if an earlier one resolves afterwards. All segmentation comes
 * from the service — nothing is recomputed client-side. */

import type { SegmentService } from "./api.js";
import { ApiError } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import {
  decodeBase64,
  decodeMask,
  decodeVolume,
  type RvolMask,
  type RvolVolume,
} from "./rvol.js";
import {
  DEBOUNCE_MS,
  DEFAULT_W,
  type LesionDetail,
  type LesionSummary,
  type SegmentResponse,
} from "./types.js";

export interface OverlayFlags {
  high: boolean;
  low: boolean;
  gt: boolean;
}

export interface ViewerState {
  lesions: LesionSummary[];
  selectedId: string | null;
  detail: LesionDetail | null;
  volume: RvolVolume | null;
  lesionMask: RvolMask | null;
  gtMask: RvolMask | null;
  slice: number;
  w: number;
  overlays: OverlayFlags;
  result: SegmentResponse | null;
  highMask: RvolMask | null;
  lowMask: RvolMask | null;
  inFlight: boolean;
  latencyMs: number | null;
  error: string | null;
}

export interface StoreOptions {
  debounceMs?: number;
  now?: () => number;
}

type Listener = (state: ViewerState) => void;

export class TunerStore {
  readonly state: ViewerState;
  private readonly api: SegmentService;
  private readonly now: () => number;
  private readonly listeners = new Set<Listener>();
  private readonly debouncedSegment: Debounced<[]>;
  /** Generation counter; a response renders only if its generation is
   * still the latest when it arrives. */
  private generation = 0;

  constructor(api: SegmentService, opts: StoreOptions = {}) {
    this.api = api;
    this.now = opts.now ?? (() => Date.now());
    this.debouncedSegment = debounce(
      () => void this.issueSegment(),
      opts.debounceMs ?? DEBOUNCE_MS,
    );
    this.state = {
      lesions: [],
      selectedId: null,
      detail: null,
      volume: null,
      lesionMask: null,
      gtMask: null,
      slice: 0,
      w: DEFAULT_W,
      overlays: { high: true, low: false, gt: false },
      result: null,
      highMask: null,
      lowMask: null,
      inFlight: false,
      latencyMs: null,
      error: null,
    };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l(this.state);
  }

  async loadLesions(): Promise<void> {
    try {
      this.state.lesions = await this.api.lesions();
      this.state.error = null;
    } catch (exc) {
      this.state.error = exc instanceof Error ? exc.message : String(exc);
    }
    this.notify();
  }

  /** Select a lesion: load its volume and fire an initial segment at
   * the current w (not debounced — selection is a discrete action). */
  async selectLesion(id: string): Promise<void> {
    this.debouncedSegment.cancel();
    const detail = await this.api.lesionDetail(id);
    this.state.selectedId = id;
    this.state.detail = detail;
    this.state.volume = decodeVolume(decodeBase64(detail.volume_b64));
    this.state.lesionMask = decodeMask(decodeBase64(detail.mask_b64));
    this.state.gtMask = detail.gt_rim_b64
      ? decodeMask(decodeBase64(detail.gt_rim_b64))
      : null;
    this.state.slice = Math.floor(detail.dims[2] / 2);
    this.state.result = null;
    this.state.highMask = null;
    this.state.lowMask = null;
    this.state.error = null;
    this.notify();
    await this.issueSegment();
  }

  /** Slider/preset weight change: state updates immediately, the
   * request goes out once the value settles (debounced). */
  setW(w: number): void {
    if (w < 0) throw new RangeError(`w must be >= 0, got ${w}`);
    this.state.w = w;
    this.notify();
    if (this.state.selectedId !== null) this.debouncedSegment();
  }

  navigateSlices(delta: number): void {
    const nz = this.state.detail ? this.state.detail.dims[2] : 1;
    this.state.slice = Math.min(nz - 1, Math.max(0, this.state.slice + delta));
    this.notify();
  }

  toggleOverlay(name: keyof OverlayFlags): void {
    this.state.overlays[name] = !this.state.overlays[name];
    this.notify();
  }

  private async issueSegment(): Promise<void> {
    const id = this.state.selectedId;
    if (id === null) return;
    const myGeneration = ++this.generation;
    this.state.inFlight = true;
    this.notify();
    const t0 = this.now();
    try {
      const result = await this.api.segment({ lesion_id: id, w: this.state.w });
      if (myGeneration !== this.generation) return; // superseded
      this.state.result = result;
      this.state.highMask = decodeMask(decodeBase64(result.high_mask_b64));
      this.state.lowMask = decodeMask(decodeBase64(result.low_mask_b64));
      this.state.latencyMs = this.now() - t0;
      this.state.error = null;
    } catch (exc) {
      if (myGeneration !== this.generation) return;
      // previous overlay stays; only the message updates
      this.state.error =
        exc instanceof ApiError ? exc.message : exc instanceof Error ? exc.message : String(exc);
    } finally {
      if (myGeneration === this.generation) {
        this.state.inFlight = false;
        this.notify();
      }
    }
  }
}
