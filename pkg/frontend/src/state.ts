// Editor state: the server-acknowledged recipe mirror, revision
// monotonicity, and the fitted baseline used to show relative deltas.

import type { Patch, RecipeDoc } from "./types.js";

export interface PreviewUpdate {
  revision: number;
  previewBase64: string;
}

export class EditorStore {
  sessionId = "";
  revision = -1;
  recipe: RecipeDoc | null = null;
  /** theta values at open time: sliders display value minus this baseline */
  private baseline = new Map<string, number>();
  selectedLayer = 0;
  overlayVisible = false;
  previewBase64 = "";

  open(sessionId: string, revision: number, recipe: RecipeDoc, previewBase64: string) {
    this.sessionId = sessionId;
    this.revision = revision;
    this.recipe = recipe;
    this.previewBase64 = previewBase64;
    this.baseline.clear();
    recipe.layers.forEach((layer, i) => {
      for (const f of layer.filters) {
        this.baseline.set(`${i}:${f.kind}`, f.theta);
      }
    });
  }

  theta(layer: number, kind: string): number | undefined {
    return this.recipe?.layers[layer]?.filters.find((f) => f.kind === kind)?.theta;
  }

  /** the "green box" increment: current value relative to the fitted one */
  relativeDelta(layer: number, kind: string, value: number): number {
    return value - (this.baseline.get(`${layer}:${kind}`) ?? 0);
  }

  /** repeated identical values must not produce requests */
  isRedundant(patch: Patch): boolean {
    if (!this.recipe) return true;
    const layer = this.recipe.layers[patch.layer];
    if (!layer) return false;
    if ("sigma" in patch) return layer.sigma === patch.sigma;
    const current = layer.filters.find((f) => f.kind === patch.kind);
    return current !== undefined && current.theta === patch.theta;
  }

  /**
   * Apply a server acknowledgment.  Returns false (and changes nothing)
   * for stale responses: the preview shown never regresses behind the
   * slider state the user already sees acknowledged.
   */
  acknowledge(update: PreviewUpdate, applied?: Patch[]): boolean {
    if (update.revision <= this.revision) return false;
    this.revision = update.revision;
    this.previewBase64 = update.previewBase64;
    if (applied && this.recipe) {
      for (const patch of applied) {
        const layer = this.recipe.layers[patch.layer];
        if (!layer) continue;
        if ("sigma" in patch) {
          layer.sigma = patch.sigma;
        } else {
          const f = layer.filters.find((x) => x.kind === patch.kind);
          if (f) f.theta = patch.theta;
        }
      }
    }
    return true;
  }

  /** Replace the whole mirror (undo responses carry no patch list). */
  replaceRecipe(recipe: RecipeDoc, update: PreviewUpdate): boolean {
    if (update.revision <= this.revision) return false;
    this.recipe = recipe;
    this.revision = update.revision;
    this.previewBase64 = update.previewBase64;
    return true;
  }
}

/** Clamp a slider value into the knob's legal range. */
export function clampTheta(value: number, bound = 1.0): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(bound, Math.max(-bound, value));
}
