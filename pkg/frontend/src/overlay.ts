/**
 * Overlay pixel math, kept free of canvas so it is testable. The studio
 * draws these RGBA buffers onto the preview via putImageData.
 */
import type { GrayBuffer } from "./types.js";

/** Fixed blue -> cyan -> yellow -> red ramp; t in [0, 1]. */
export function heatColor(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  if (x < 1 / 3) {
    const u = x * 3;
    return [0, Math.round(255 * u), 255];
  }
  if (x < 2 / 3) {
    const u = (x - 1 / 3) * 3;
    return [Math.round(255 * u), 255, Math.round(255 * (1 - u))];
  }
  const u = (x - 2 / 3) * 3;
  return [255, Math.round(255 * (1 - u)), 0];
}

/** Saliency heatmap as premixed RGBA; low saliency fades out entirely so
 *  the photo stays readable underneath. */
export function colorizeSaliency(sal: GrayBuffer, maxAlpha = 0.55): Uint8ClampedArray {
  const out = new Uint8ClampedArray(sal.width * sal.height * 4);
  for (let i = 0; i < sal.data.length; i++) {
    const t = sal.data[i]! / 255;
    const [r, g, b] = heatColor(t);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = Math.round(255 * maxAlpha * t);
  }
  return out;
}

/** Painted mask as a translucent single-color layer. */
export function tintMask(
  mask: GrayBuffer,
  rgb: [number, number, number] = [64, 156, 255],
  alpha = 0.45,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(mask.width * mask.height * 4);
  const a = Math.round(255 * alpha);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i] === 0) continue;
    out[i * 4] = rgb[0];
    out[i * 4 + 1] = rgb[1];
    out[i * 4 + 2] = rgb[2];
    out[i * 4 + 3] = a;
  }
  return out;
}

/** Standard source-over composite of an RGBA overlay onto opaque RGB. */
export function compositeOver(
  base: Uint8ClampedArray,
  overlay: Uint8ClampedArray,
): Uint8ClampedArray {
  if (base.length !== overlay.length) {
    throw new Error(`buffer sizes differ: ${base.length} vs ${overlay.length}`);
  }
  const out = new Uint8ClampedArray(base.length);
  for (let i = 0; i < base.length; i += 4) {
    const a = overlay[i + 3]! / 255;
    out[i] = Math.round(overlay[i]! * a + base[i]! * (1 - a));
    out[i + 1] = Math.round(overlay[i + 1]! * a + base[i + 1]! * (1 - a));
    out[i + 2] = Math.round(overlay[i + 2]! * a + base[i + 2]! * (1 - a));
    out[i + 3] = 255;
  }
  return out;
}
