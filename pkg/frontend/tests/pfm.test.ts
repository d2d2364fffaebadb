import { describe, expect, it } from "vitest";

import { parsePfm, pfmAt } from "../src/pfm.js";

/** Build a PFM byte buffer; values are in file order (bottom row first). */
function makePfm(
  magic: string,
  width: number,
  height: number,
  scale: number,
  values: number[],
): ArrayBuffer {
  const header = `${magic}\n${width} ${height}\n${scale}\n`;
  const head = new TextEncoder().encode(header);
  const buf = new ArrayBuffer(head.length + values.length * 4);
  new Uint8Array(buf).set(head, 0);
  const view = new DataView(buf, head.length);
  const littleEndian = scale < 0;
  values.forEach((v, i) => view.setFloat32(i * 4, v, littleEndian));
  return buf;
}

describe("pfm parsing", () => {
  it("flips bottom-up rows to top-down", () => {
    // file order: bottom row [1, 2], then top row [3, 4]
    const img = parsePfm(makePfm("Pf", 2, 2, -1.0, [1, 2, 3, 4]));
    expect(img.width).toBe(2);
    expect(img.height).toBe(2);
    expect(img.channels).toBe(1);
    expect(Array.from(img.data)).toEqual([3, 4, 1, 2]);
  });

  it("reads big-endian when scale is positive", () => {
    const img = parsePfm(makePfm("Pf", 2, 1, 1.0, [5, -6]));
    expect(Array.from(img.data)).toEqual([5, -6]);
  });

  it("applies a non-unit scale magnitude", () => {
    const img = parsePfm(makePfm("Pf", 2, 1, -2.0, [1.5, 3]));
    expect(Array.from(img.data)).toEqual([3, 6]);
  });

  it("handles three channels", () => {
    const img = parsePfm(makePfm("PF", 1, 2, -1.0, [1, 2, 3, 4, 5, 6]));
    expect(img.channels).toBe(3);
    // bottom row (1,2,3) lands on row 1
    expect(Array.from(img.data)).toEqual([4, 5, 6, 1, 2, 3]);
  });

  it("samples by pixel coordinate", () => {
    const img = parsePfm(makePfm("Pf", 2, 2, -1.0, [1, 2, 3, 4]));
    expect(pfmAt(img, 0, 0)).toBe(3);
    expect(pfmAt(img, 1, 1)).toBe(2);
    expect(() => pfmAt(img, 5, 0)).toThrow(/outside/);
  });

  it("preserves float32 values exactly", () => {
    const v = Math.fround(0.1234567);
    const img = parsePfm(makePfm("Pf", 1, 1, -1.0, [v]));
    expect(img.data[0]).toBe(v);
  });

  it("rejects bad magic, bad dimensions, and truncation", () => {
    expect(() => parsePfm(makePfm("P6", 1, 1, -1.0, [0]))).toThrow(/magic/);
    expect(() => parsePfm(makePfm("Pf", 0, 1, -1.0, []))).toThrow(/dimensions/);
    const truncated = makePfm("Pf", 2, 2, -1.0, [1, 2, 3, 4]).slice(0, 20);
    expect(() => parsePfm(truncated)).toThrow(/truncated/);
  });
});
