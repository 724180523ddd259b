/**
 * Brush-painted binary mask, one byte per pixel (0 or 255), always the
 * same dimensions as the loaded image. Strokes are circles stamped along
 * a polyline so fast pointer moves leave no gaps.
 */
import { maskHash } from "./hash.js";
import { bytesToBase64, grayToPng } from "./png.js";
import type { GrayBuffer } from "./types.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export type BrushMode = "brush" | "eraser";

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  private grid: Uint8Array;
  private painted = 0;

  constructor(width: number, height: number) {
    if (width <= 0 || height <= 0) throw new Error(`bad mask dimensions ${width}x${height}`);
    this.width = width;
    this.height = height;
    this.grid = new Uint8Array(width * height);
  }

  isEmpty(): boolean {
    return this.painted === 0;
  }

  paintedPixels(): number {
    return this.painted;
  }

  valueAt(x: number, y: number): number {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return 0;
    return this.grid[y * this.width + x]!;
  }

  clear(): void {
    this.grid.fill(0);
    this.painted = 0;
  }

  private stamp(cx: number, cy: number, radius: number, value: number): void {
    const r = Math.max(0, radius);
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    const r2 = r * r;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy > r2) continue;
        const idx = y * this.width + x;
        const prev = this.grid[idx]!;
        if (prev !== value) {
          this.grid[idx] = value;
          this.painted += value ? 1 : -1;
        }
      }
    }
  }

  /** Apply one stroke: consecutive points are connected by stamping along
   *  the segment at sub-radius spacing. */
  stroke(points: StrokePoint[], radius: number, mode: BrushMode = "brush"): void {
    if (points.length === 0) return;
    if (radius < 0) throw new Error(`negative brush radius ${radius}`);
    const value = mode === "brush" ? 255 : 0;
    let prev = points[0]!;
    this.stamp(prev.x, prev.y, radius, value);
    for (let i = 1; i < points.length; i++) {
      const next = points[i]!;
      const dist = Math.hypot(next.x - prev.x, next.y - prev.y);
      const steps = Math.max(1, Math.ceil(dist / Math.max(radius / 2, 0.5)));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stamp(prev.x + (next.x - prev.x) * t, prev.y + (next.y - prev.y) * t, radius, value);
      }
      prev = next;
    }
  }

  toBuffer(): GrayBuffer {
    return { width: this.width, height: this.height, data: this.grid.slice() };
  }

  toPngBase64(): string {
    return bytesToBase64(grayToPng(this.toBuffer()));
  }

  /** Content hash in the server's canonical form. */
  hash(): Promise<string> {
    return maskHash(this.toBuffer());
  }
}
