// Mask overlay: tint the preview where the selected region's mask is hot.
// Operates on raw RGBA buffers so it is testable without a canvas.

export const OVERLAY_COLOR: [number, number, number] = [255, 64, 64];
export const OVERLAY_ALPHA = 0.5;

/**
 * Blend a tint into `rgba` (H*W*4 bytes) weighted by `mask` (H*W bytes,
 * 0..255).  in place; alpha channel untouched.  A constant-255 mask tints
 * the whole image at OVERLAY_ALPHA.
 */
export function tintWithMask(
  rgba: Uint8ClampedArray,
  mask: Uint8ClampedArray | number[],
  color: [number, number, number] = OVERLAY_COLOR,
  alpha: number = OVERLAY_ALPHA,
): void {
  const n = mask.length;
  if (rgba.length !== n * 4) {
    throw new Error(`rgba has ${rgba.length} bytes for ${n} mask pixels`);
  }
  for (let i = 0; i < n; i++) {
    const w = (alpha * (mask[i] as number)) / 255;
    const o = i * 4;
    rgba[o] = rgba[o] * (1 - w) + color[0] * w;
    rgba[o + 1] = rgba[o + 1] * (1 - w) + color[1] * w;
    rgba[o + 2] = rgba[o + 2] * (1 - w) + color[2] * w;
  }
}

/** Nearest-neighbor stretch of a mask byte grid onto the preview raster. */
export function resizeMaskNearest(
  mask: Uint8ClampedArray | number[],
  maskW: number,
  maskH: number,
  outW: number,
  outH: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(outW * outH);
  for (let y = 0; y < outH; y++) {
    const sy = Math.min(maskH - 1, Math.floor((y * maskH) / outH));
    for (let x = 0; x < outW; x++) {
      const sx = Math.min(maskW - 1, Math.floor((x * maskW) / outW));
      out[y * outW + x] = mask[sy * maskW + sx] as number;
    }
  }
  return out;
}
