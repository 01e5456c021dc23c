/** DOM wiring for the weight tuner. All logic lives in the store and the
 * pure render module; this file only reflects state into elements. */

import { ApiClient } from "./api.js";
import { renderSlice, volumeWindow, type OverlaySpec } from "./render.js";
import { maskCountOnSlice } from "./rvol.js";
import { TunerStore } from "./state.js";
import { W_PRESETS } from "./types.js";

const HIGH_COLOR: [number, number, number] = [255, 64, 64];
const LOW_COLOR: [number, number, number] = [64, 128, 255];
const GT_COLOR: [number, number, number] = [64, 255, 96];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function mount(baseUrl: string): TunerStore {
  const store = new TunerStore(new ApiClient(baseUrl));

  const list = el<HTMLUListElement>("lesion-list");
  const canvas = el<HTMLCanvasElement>("slice-canvas");
  const slider = el<HTMLInputElement>("w-slider");
  const wLabel = el<HTMLSpanElement>("w-value");
  const sliceLabel = el<HTMLSpanElement>("slice-label");
  const stats = el<HTMLDivElement>("stats");
  const errorBox = el<HTMLDivElement>("error");
  const presets = el<HTMLDivElement>("presets");

  for (const w of W_PRESETS) {
    const btn = document.createElement("button");
    btn.textContent = String(w);
    btn.addEventListener("click", () => {
      slider.value = String(w);
      store.setW(w);
    });
    presets.appendChild(btn);
  }

  slider.addEventListener("input", () => store.setW(Number(slider.value)));
  el<HTMLButtonElement>("slice-prev").addEventListener("click", () =>
    store.navigateSlices(-1),
  );
  el<HTMLButtonElement>("slice-next").addEventListener("click", () =>
    store.navigateSlices(1),
  );
  for (const name of ["high", "low", "gt"] as const) {
    el<HTMLInputElement>(`toggle-${name}`).addEventListener("change", () =>
      store.toggleOverlay(name),
    );
  }

  store.subscribe((state) => {
    // lesion list
    if (list.childElementCount !== state.lesions.length) {
      list.replaceChildren(
        ...state.lesions.map((lesion) => {
          const item = document.createElement("li");
          const link = document.createElement("a");
          link.href = "#";
          link.textContent = `${lesion.id} [${lesion.label}]`;
          link.addEventListener("click", (ev) => {
            ev.preventDefault();
            void store.selectLesion(lesion.id);
          });
          item.appendChild(link);
          return item;
        }),
      );
    }
    if (state.lesions.length === 0) {
      list.replaceChildren(
        Object.assign(document.createElement("li"), {
          textContent: "no lesions in the dataset",
        }),
      );
    }

    wLabel.textContent = state.w.toFixed(2);
    errorBox.textContent = state.error ?? "";
    errorBox.hidden = state.error === null;

    if (!state.volume) return;
    const [nx, ny, nz] = state.volume.dims;
    sliceLabel.textContent = `slice ${state.slice + 1}/${nz}`;

    const overlays: OverlaySpec[] = [];
    if (state.overlays.low && state.lowMask) {
      overlays.push({ mask: state.lowMask, color: LOW_COLOR, alpha: 0.35 });
    }
    if (state.overlays.high && state.highMask) {
      overlays.push({ mask: state.highMask, color: HIGH_COLOR, alpha: 0.45 });
    }
    if (state.overlays.gt && state.gtMask) {
      overlays.push({ mask: state.gtMask, color: GT_COLOR, alpha: 0.3 });
    }
    canvas.width = nx;
    canvas.height = ny;
    const ctx = canvas.getContext("2d");
    if (ctx) {
      const pixels = renderSlice(
        state.volume,
        state.slice,
        volumeWindow(state.volume),
        overlays,
      );
      ctx.putImageData(new ImageData(pixels, nx, ny), 0, 0);
    }

    const lines: string[] = [];
    if (state.inFlight) lines.push("segmenting…");
    if (state.result) {
      lines.push(
        `c1 ${state.result.c1.toFixed(3)} (${state.result.c1_ppb.toFixed(1)} ppb)`,
        `c2 ${state.result.c2.toFixed(3)} (${state.result.c2_ppb.toFixed(1)} ppb)`,
        `${state.result.iterations} iterations` +
          (state.result.converged ? "" : " (not converged)"),
      );
      if (state.result.dice !== null) {
        lines.push(`dice vs ground truth ${state.result.dice.toFixed(3)}`);
      }
      if (state.highMask) {
        lines.push(
          `high voxels on slice: ${maskCountOnSlice(state.highMask, state.slice)}`,
        );
      }
    }
    if (state.latencyMs !== null) {
      lines.push(`round-trip ${state.latencyMs.toFixed(0)} ms`);
    }
    stats.textContent = lines.join("\n");
  });

  void store.loadLesions();
  return store;
}
