/**
 * Content hashes matching the server's canonical form: sha256 over two
 * big-endian uint32 dimensions (height, width) followed by the 8-bit
 * pixel bytes in row-major order. Masks hash one byte per pixel, images
 * three (RGB). Computing the same digest client-side is what lets the
 * studio verify every displayed result against the server's refs.
 */
import type { GrayBuffer, RgbBuffer } from "./types.js";

function withHeader(height: number, width: number, body: Uint8Array): Uint8Array {
  const out = new Uint8Array(8 + body.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, height, false);
  view.setUint32(4, width, false);
  out.set(body, 8);
  return out;
}

async function sha256Hex(bytes: Uint8Array): Promise<string> {
  // withHeader allocates an exact-size buffer, so hashing it raw is safe
  const digest = await crypto.subtle.digest("SHA-256", bytes.buffer as ArrayBuffer);
  return Array.from(new Uint8Array(digest), (b) => b.toString(16).padStart(2, "0")).join("");
}

export function maskHash(mask: GrayBuffer): Promise<string> {
  if (mask.data.length !== mask.width * mask.height) {
    throw new Error(`mask buffer is ${mask.data.length} bytes, expected ${mask.width * mask.height}`);
  }
  return sha256Hex(withHeader(mask.height, mask.width, mask.data));
}

export function imageHash(img: RgbBuffer): Promise<string> {
  if (img.data.length !== img.width * img.height * 3) {
    throw new Error(`image buffer is ${img.data.length} bytes, expected ${img.width * img.height * 3}`);
  }
  return sha256Hex(withHeader(img.height, img.width, img.data));
}

/** Drop the alpha channel of canvas ImageData-style RGBA bytes. */
export function rgbaToRgb(width: number, height: number, rgba: Uint8ClampedArray | Uint8Array): RgbBuffer {
  if (rgba.length !== width * height * 4) {
    throw new Error(`rgba buffer is ${rgba.length} bytes, expected ${width * height * 4}`);
  }
  const data = new Uint8Array(width * height * 3);
  for (let i = 0, j = 0; i < rgba.length; i += 4, j += 3) {
    data[j] = rgba[i]!;
    data[j + 1] = rgba[i + 1]!;
    data[j + 2] = rgba[i + 2]!;
  }
  return { width, height, data };
}
