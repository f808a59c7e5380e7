// Wire types mirroring the edit-service JSON surfaces.

export interface RecipeFilter {
  kind: string;
  theta: number;
}

export interface RecipeLayer {
  mask: string; // file name or "global"
  sigma: number;
  filters: RecipeFilter[];
}

export interface RecipeDoc {
  version: number;
  constants: { hue_gain?: number; temp_gains?: number[] };
  layers: RecipeLayer[];
}

export interface SessionInfo {
  id: string;
  revision: number;
  width: number;
  height: number;
  preview_width: number;
  preview_height: number;
  masks: string[];
  recipe: RecipeDoc;
  preview_png_base64: string;
}

export interface PatchResponse {
  revision: number;
  preview_png_base64: string;
}

export interface MaskInfo {
  index: number;
  name: string;
  width?: number;
  height?: number;
  png_base64?: string;
}

export type FilterPatch = { layer: number; kind: string; theta: number };
export type SigmaPatch = { layer: number; sigma: number };
export type Patch = FilterPatch | SigmaPatch;

export interface ApiErrorBody {
  code: number;
  message: string;
  field?: string;
}
