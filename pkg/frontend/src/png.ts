/**
 * Deterministic PNG encoding for mask export. Canvas toDataURL output can
 * differ across browsers; the studio needs the exact same bytes for the
 * same mask everywhere, so scanlines go into stored (uncompressed) deflate
 * blocks. Masks are tiny next to the images, the size cost is irrelevant,
 * and every PNG reader handles stored blocks.
 */
import type { GrayBuffer, RgbBuffer } from "./types.js";

const SIGNATURE = Uint8Array.of(137, 80, 78, 71, 13, 10, 26, 10);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]!) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value >>> 0, false);
  return out;
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const tag = new TextEncoder().encode(type);
  const payload = new Uint8Array(tag.length + body.length);
  payload.set(tag, 0);
  payload.set(body, tag.length);
  const out = new Uint8Array(4 + payload.length + 4);
  out.set(u32be(body.length), 0);
  out.set(payload, 4);
  out.set(u32be(crc32(payload)), 4 + payload.length);
  return out;
}

/** zlib wrapper around stored deflate blocks (max 65535 bytes each). */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [Uint8Array.of(0x78, 0x01)];
  const max = 65535;
  for (let off = 0; off < raw.length || off === 0; off += max) {
    const slice = raw.subarray(off, Math.min(off + max, raw.length));
    const last = off + max >= raw.length;
    const head = new Uint8Array(5);
    head[0] = last ? 1 : 0;
    head[1] = slice.length & 0xff;
    head[2] = slice.length >>> 8;
    head[3] = ~slice.length & 0xff;
    head[4] = (~slice.length >>> 8) & 0xff;
    blocks.push(head, slice);
    if (last) break;
  }
  blocks.push(u32be(adler32(raw)));
  const total = blocks.reduce((n, b) => n + b.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const b of blocks) {
    out.set(b, pos);
    pos += b.length;
  }
  return out;
}

function encode(width: number, height: number, channels: 1 | 3, pixels: Uint8Array): Uint8Array {
  if (width <= 0 || height <= 0) throw new Error(`bad dimensions ${width}x${height}`);
  if (pixels.length !== width * height * channels) {
    throw new Error(`pixel buffer is ${pixels.length} bytes, expected ${width * height * channels}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = channels === 1 ? 0 : 2; // grayscale or truecolor
  // scanlines, each prefixed by filter type 0 (None)
  const stride = width * channels;
  const raw = new Uint8Array(height * (stride + 1));
  for (let y = 0; y < height; y++) {
    raw.set(pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const parts = [SIGNATURE, chunk("IHDR", ihdr), chunk("IDAT", zlibStored(raw)), chunk("IEND", new Uint8Array(0))];
  const out = new Uint8Array(parts.reduce((n, p) => n + p.length, 0));
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

export function grayToPng(gray: GrayBuffer): Uint8Array {
  return encode(gray.width, gray.height, 1, gray.data);
}

export function rgbToPng(img: RgbBuffer): Uint8Array {
  return encode(img.width, img.height, 3, img.data);
}

// node's Buffer when present (tests), browser atob/btoa otherwise
interface BufferCtor {
  from(data: Uint8Array | string, encoding?: string): Uint8Array & { toString(encoding: string): string };
}

function nodeBuffer(): BufferCtor | undefined {
  return (globalThis as { Buffer?: BufferCtor }).Buffer;
}

export function bytesToBase64(bytes: Uint8Array): string {
  const buffer = nodeBuffer();
  if (buffer) return buffer.from(bytes).toString("base64");
  let binary = "";
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

export function base64ToBytes(text: string): Uint8Array {
  const buffer = nodeBuffer();
  if (buffer) return new Uint8Array(buffer.from(text, "base64"));
  const binary = atob(text);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
