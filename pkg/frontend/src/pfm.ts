/** PFM decoding for depth responses.
 *
 * Header: "Pf" (1 channel) or "PF" (3), then "<width> <height>", then a scale
 * whose sign encodes endianness (negative = little endian). Pixel rows are
 * stored bottom-up; the returned data is flipped to row 0 = top so it lines
 * up with canvas coordinates.
 */

export interface PfmImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** Row-major, top-down, length width*height*channels. */
  data: Float32Array;
}

export function parsePfm(buf: ArrayBuffer): PfmImage {
  const bytes = new Uint8Array(buf);
  let pos = 0;
  const readLine = (): string => {
    let end = pos;
    while (end < bytes.length && bytes[end] !== 0x0a) end++;
    if (end >= bytes.length) throw new Error("PFM: truncated header");
    const line = new TextDecoder("ascii").decode(bytes.subarray(pos, end));
    pos = end + 1;
    return line.trim();
  };

  const magic = readLine();
  let channels: 1 | 3;
  if (magic === "PF") channels = 3;
  else if (magic === "Pf") channels = 1;
  else throw new Error(`PFM: bad magic "${magic}"`);

  const dims = readLine().split(/\s+/);
  if (dims.length !== 2) throw new Error("PFM: malformed dimensions line");
  const width = Number(dims[0]);
  const height = Number(dims[1]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
    throw new Error(`PFM: bad dimensions ${dims[0]}x${dims[1]}`);
  }
  const scale = Number(readLine());
  if (!Number.isFinite(scale)) throw new Error("PFM: malformed scale line");
  const littleEndian = scale < 0;

  const count = width * height * channels;
  if (bytes.length - pos < count * 4) throw new Error("PFM: truncated pixel data");
  const view = new DataView(buf, pos, count * 4);
  const rowLen = width * channels;
  const data = new Float32Array(count);
  for (let row = 0; row < height; row++) {
    const srcRow = height - 1 - row; // stored bottom-up
    for (let i = 0; i < rowLen; i++) {
      data[row * rowLen + i] = view.getFloat32((srcRow * rowLen + i) * 4, littleEndian);
    }
  }
  const mag = Math.abs(scale);
  if (mag !== 0 && mag !== 1) {
    for (let i = 0; i < count; i++) data[i] = data[i]! * mag;
  }
  return { width, height, channels, data };
}

/** Sample a single-channel PFM at integer pixel coordinates. */
export function pfmAt(img: PfmImage, u: number, v: number): number {
  const x = Math.round(u);
  const y = Math.round(v);
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) {
    throw new Error(`(${u}, ${v}) outside ${img.width}x${img.height}`);
  }
  const value = img.data[(y * img.width + x) * img.channels];
  return value === undefined ? NaN : value;
}
