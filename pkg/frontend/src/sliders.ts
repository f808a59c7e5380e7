// Slider panel model: one group per layer, one slider per filter knob.
// Pure so the panel structure is unit-testable without a DOM.

import type { RecipeDoc } from "./types.js";

export const SLIDER_MIN = -1;
export const SLIDER_MAX = 1;
export const SLIDER_STEP = 0.01;

export interface SliderSpec {
  layer: number;
  kind: string;
  value: number;
}

export interface SliderGroup {
  layer: number;
  title: string;
  maskName: string; // "global" or the mask file name
  sigma: number;
  sliders: SliderSpec[];
}

export function buildSliderGroups(recipe: RecipeDoc): SliderGroup[] {
  return recipe.layers.map((layer, i) => ({
    layer: i,
    title: layer.mask === "global" ? "global shift" : `region ${i} (${layer.mask})`,
    maskName: layer.mask,
    sigma: layer.sigma,
    sliders: layer.filters.map((f) => ({ layer: i, kind: f.kind, value: f.theta })),
  }));
}

export function formatDelta(delta: number): string {
  if (Math.abs(delta) < 5e-7) return "±0.00";
  const sign = delta > 0 ? "+" : "−";
  return `${sign}${Math.abs(delta).toFixed(2)}`;
}
