import { describe, expect, it } from "vitest";

import { imageHash, maskHash, rgbaToRgb } from "../src/hash.js";

// Digests frozen from the service's own canonical form (big-endian
// height/width header + 8-bit row-major bytes). If these drift, client
// and server stop agreeing about what is on screen.
const MASK_2X3 = "689d1eab767887f81e34988c907f828d4c3fa5f2487d8452555852d4f104b4da";
const IMG_2X2 = "816ce5a90155997f86ba1bcb08fb64b02b97fba3db137d282e0b4fb5125e6968";

describe("maskHash", () => {
  it("matches the frozen server digest", async () => {
    const data = new Uint8Array(6);
    data[0] = 255; // (0, 0)
    data[5] = 255; // (1, 2)
    expect(await maskHash({ width: 3, height: 2, data })).toBe(MASK_2X3);
  });

  it("depends on dimensions, not just bytes", async () => {
    const data = new Uint8Array(6);
    data[0] = 255;
    data[5] = 255;
    const a = await maskHash({ width: 3, height: 2, data });
    const b = await maskHash({ width: 2, height: 3, data });
    expect(a).not.toBe(b);
  });

  it("rejects a buffer that does not match its dimensions", () => {
    expect(() => maskHash({ width: 4, height: 2, data: new Uint8Array(6) })).toThrow(/expected 8/);
  });
});

describe("imageHash", () => {
  it("matches the frozen server digest", async () => {
    // red, green / blue, mid gray
    const data = Uint8Array.of(255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128);
    expect(await imageHash({ width: 2, height: 2, data })).toBe(IMG_2X2);
  });

  it("rejects a wrong-size buffer", () => {
    expect(() => imageHash({ width: 2, height: 2, data: new Uint8Array(11) })).toThrow(/expected 12/);
  });
});

describe("rgbaToRgb", () => {
  it("drops alpha and keeps pixel order", () => {
    const rgba = Uint8ClampedArray.of(1, 2, 3, 255, 4, 5, 6, 0);
    const rgb = rgbaToRgb(2, 1, rgba);
    expect(Array.from(rgb.data)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("feeds imageHash identically to a plain RGB buffer", async () => {
    const rgba = Uint8ClampedArray.of(255, 0, 0, 255, 0, 255, 0, 255, 0, 0, 255, 255, 128, 128, 128, 255);
    expect(await imageHash(rgbaToRgb(2, 2, rgba))).toBe(IMG_2X2);
  });
});
