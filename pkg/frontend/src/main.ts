// DOM wiring for the editor page.  All logic that matters lives in the
// pure modules (state, debounce, sliders, overlay); this file only plumbs
// events to them.

import { ApiError, EditServiceClient } from "./api.js";
import { debounce, LatestWinsSender } from "./debounce.js";
import { OVERLAY_ALPHA, resizeMaskNearest, tintWithMask } from "./overlay.js";
import {
  buildSliderGroups,
  formatDelta,
  SLIDER_MAX,
  SLIDER_MIN,
  SLIDER_STEP,
} from "./sliders.js";
import { clampTheta, EditorStore } from "./state.js";
import type { MaskInfo, Patch, PatchResponse } from "./types.js";

const DEBOUNCE_MS = 100;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

export function initEditor(): void {
  const store = new EditorStore();
  let client = new EditServiceClient(
    (el<HTMLInputElement>("server-url")).value || "http://127.0.0.1:8000",
  );
  let masks: MaskInfo[] = [];
  let maskBitmaps = new Map<number, ImageBitmap>();

  const preview = el<HTMLCanvasElement>("preview");
  const undoButton = el<HTMLButtonElement>("undo");
  const exportButton = el<HTMLButtonElement>("export");
  const panel = el<HTMLDivElement>("sliders");

  async function drawPreview(): Promise<void> {
    if (!store.previewBase64) return;
    const blob = await (
      await fetch(`data:image/png;base64,${store.previewBase64}`)
    ).blob();
    const bitmap = await createImageBitmap(blob);
    preview.width = bitmap.width;
    preview.height = bitmap.height;
    const ctx = preview.getContext("2d")!;
    ctx.drawImage(bitmap, 0, 0);
    if (store.overlayVisible) {
      await drawOverlay(ctx, bitmap.width, bitmap.height);
    }
  }

  async function drawOverlay(
    ctx: CanvasRenderingContext2D,
    w: number,
    h: number,
  ): Promise<void> {
    const info = masks.find((m) => m.index === store.selectedLayer);
    const image = ctx.getImageData(0, 0, w, h);
    if (!info || info.name === "global" || !info.png_base64) {
      // global layer: the whole image is the region
      const flat = new Uint8ClampedArray(w * h).fill(255);
      tintWithMask(image.data, flat, undefined, OVERLAY_ALPHA);
      ctx.putImageData(image, 0, 0);
      return;
    }
    let bitmap = maskBitmaps.get(info.index);
    if (!bitmap) {
      const blob = await (
        await fetch(`data:image/png;base64,${info.png_base64}`)
      ).blob();
      bitmap = await createImageBitmap(blob);
      maskBitmaps.set(info.index, bitmap);
    }
    const scratch = document.createElement("canvas");
    scratch.width = bitmap.width;
    scratch.height = bitmap.height;
    const sctx = scratch.getContext("2d")!;
    sctx.drawImage(bitmap, 0, 0);
    const maskData = sctx.getImageData(0, 0, bitmap.width, bitmap.height);
    const gray = new Uint8ClampedArray(bitmap.width * bitmap.height);
    for (let i = 0; i < gray.length; i++) gray[i] = maskData.data[i * 4];
    const sized = resizeMaskNearest(gray, bitmap.width, bitmap.height, w, h);
    tintWithMask(image.data, sized);
    ctx.putImageData(image, 0, 0);
  }

  const sender = new LatestWinsSender<Patch[], PatchResponse>(
    (patches) => client.patchRecipe(store.sessionId, patches),
    (result) => {
      store.acknowledge(
        { revision: result.revision, previewBase64: result.preview_png_base64 },
        lastSent,
      );
      undoButton.disabled = false;
      void drawPreview();
    },
    (error) => {
      toast(error instanceof ApiError ? error.message : String(error));
    },
  );
  let lastSent: Patch[] = [];

  const queuePatch = debounce((patch: Patch) => {
    if (store.isRedundant(patch)) return;
    lastSent = [patch];
    sender.submit([patch]);
  }, DEBOUNCE_MS);

  function rebuildSliders(): void {
    if (!store.recipe) return;
    panel.replaceChildren();
    for (const group of buildSliderGroups(store.recipe)) {
      const box = document.createElement("fieldset");
      const legend = document.createElement("legend");
      legend.textContent = group.title;
      box.appendChild(legend);
      const pick = document.createElement("button");
      pick.type = "button";
      pick.textContent =
        group.layer === store.selectedLayer && store.overlayVisible
          ? "mask shown"
          : "show mask";
      pick.onclick = () => {
        store.selectedLayer = group.layer;
        store.overlayVisible = true;
        rebuildSliders();
        void drawPreview();
      };
      box.appendChild(pick);
      for (const spec of group.sliders) {
        const row = document.createElement("label");
        row.className = "slider-row";
        const name = document.createElement("span");
        name.textContent = spec.kind;
        const input = document.createElement("input");
        input.type = "range";
        input.min = String(SLIDER_MIN);
        input.max = String(SLIDER_MAX);
        input.step = String(SLIDER_STEP);
        input.value = String(spec.value);
        const delta = document.createElement("span");
        delta.className = "delta";
        delta.textContent = formatDelta(
          store.relativeDelta(spec.layer, spec.kind, spec.value),
        );
        input.oninput = () => {
          const value = clampTheta(Number(input.value));
          input.value = String(value);
          delta.textContent = formatDelta(
            store.relativeDelta(spec.layer, spec.kind, value),
          );
          queuePatch({ layer: spec.layer, kind: spec.kind, theta: value });
        };
        row.append(name, input, delta);
        box.appendChild(row);
      }
      panel.appendChild(box);
    }
  }

  el<HTMLInputElement>("file").onchange = async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    client = new EditServiceClient(el<HTMLInputElement>("server-url").value);
    const paletteK = Number(el<HTMLInputElement>("palette-k").value) || 0;
    try {
      const session = await client.createSession(
        file,
        paletteK > 0 ? { paletteK } : {},
      );
      store.open(
        session.id,
        session.revision,
        session.recipe,
        session.preview_png_base64,
      );
      masks = await client.getMasks(session.id);
      maskBitmaps = new Map();
      store.overlayVisible = false;
      undoButton.disabled = true;
      exportButton.disabled = false;
      rebuildSliders();
      await drawPreview();
    } catch (error) {
      toast(error instanceof ApiError ? error.message : String(error));
    }
  };

  el<HTMLButtonElement>("overlay-off").onclick = () => {
    store.overlayVisible = false;
    rebuildSliders();
    void drawPreview();
  };

  undoButton.onclick = async () => {
    try {
      const result = await client.undo(store.sessionId);
      const { recipe } = await client.getRecipe(store.sessionId);
      store.replaceRecipe(recipe, {
        revision: result.revision,
        previewBase64: result.preview_png_base64,
      });
      rebuildSliders();
      await drawPreview();
    } catch (error) {
      if (error instanceof ApiError && error.code === 409) {
        undoButton.disabled = true;
      } else {
        toast(String(error));
      }
    }
  };

  exportButton.onclick = async () => {
    try {
      const { recipe } = await client.getRecipe(store.sessionId);
      download(
        new Blob([JSON.stringify(recipe, null, 2)], { type: "application/json" }),
        "recipe.json",
      );
      download(await client.exportPng(store.sessionId, true), "output.png");
    } catch (error) {
      toast(String(error));
    }
  };

  function download(blob: Blob, name: string): void {
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = name;
    a.click();
    URL.revokeObjectURL(a.href);
  }
}

if (typeof document !== "undefined" && document.getElementById("sliders")) {
  initEditor();
}
