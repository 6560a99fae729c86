/**
 * Readers/writers for the toolkit's binary interchange formats.
 *
 * This package talks to the Python toolkit exclusively through files:
 * it consumes EVT1 event streams, VOX1 voxel grids, and PGM images, and
 * produces WGT1 weight tables and PGM reconstructions.  All integers are
 * little-endian.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface EventStream {
  width: number;
  height: number;
  /** event timestamps, µs */
  t: Float64Array;
  x: Uint16Array;
  y: Uint16Array;
  /** polarity, +1 or -1 */
  p: Int8Array;
}

export interface VoxelGrid {
  bins: number;
  width: number;
  height: number;
  t0: number;
  t1: number;
  /** (bin, row, col) order, length bins*height*width */
  data: Float32Array;
}

export class FormatError extends Error {
  constructor(path: string, message: string) {
    super(`${path}: ${message}`);
    this.name = "FormatError";
  }
}

function magicOf(view: DataView): string {
  return String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3),
  );
}

export function readEvents(path: string): EventStream {
  const buf = readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 16) throw new FormatError(path, "truncated EVT1 header");
  if (magicOf(view) !== "EVT1") throw new FormatError(path, "bad magic, expected EVT1");
  const width = view.getUint16(4, true);
  const height = view.getUint16(6, true);
  const count = Number(view.getBigUint64(8, true));
  if (buf.length !== 16 + 16 * count) {
    throw new FormatError(path, `expected ${16 + 16 * count} bytes, got ${buf.length}`);
  }
  const t = new Float64Array(count);
  const x = new Uint16Array(count);
  const y = new Uint16Array(count);
  const p = new Int8Array(count);
  for (let i = 0; i < count; i++) {
    const off = 16 + 16 * i;
    t[i] = Number(view.getBigUint64(off, true));
    x[i] = view.getUint16(off + 8, true);
    y[i] = view.getUint16(off + 10, true);
    p[i] = view.getInt8(off + 12);
  }
  return { width, height, t, x, y, p };
}

export function readVoxel(path: string): VoxelGrid {
  const buf = readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 28) throw new FormatError(path, "truncated VOX1 header");
  if (magicOf(view) !== "VOX1") throw new FormatError(path, "bad magic, expected VOX1");
  const bins = view.getUint16(4, true);
  const height = view.getUint16(6, true);
  const width = view.getUint16(8, true);
  const t0 = Number(view.getBigUint64(12, true));
  const t1 = Number(view.getBigUint64(20, true));
  const cells = bins * height * width;
  if (buf.length !== 28 + 4 * cells) {
    throw new FormatError(path, `expected ${28 + 4 * cells} bytes, got ${buf.length}`);
  }
  const data = new Float32Array(cells);
  for (let i = 0; i < cells; i++) data[i] = view.getFloat32(28 + 4 * i, true);
  return { bins, width, height, t0, t1, data };
}

/**
 * Write a WGT1 table: `rows[r]` holds the B bin weights for normalized
 * timestamp r/(resolution-1).  Every row must sum to 1 within 1e-4 —
 * the same contract the Python reader enforces.
 */
export function writeWeights(path: string, rows: Float32Array[], bins: number): void {
  const resolution = rows.length;
  if (resolution < 2) throw new Error("weight table needs at least 2 rows");
  for (let r = 0; r < resolution; r++) {
    if (rows[r].length !== bins) {
      throw new Error(`row ${r} has ${rows[r].length} weights, expected ${bins}`);
    }
    let sum = 0;
    for (const w of rows[r]) sum += w;
    if (Math.abs(sum - 1) > 1e-4) {
      throw new Error(`row ${r} sums to ${sum.toFixed(6)}, outside 1 +/- 1e-4`);
    }
  }
  const buf = Buffer.alloc(8 + 4 * resolution * bins);
  buf.write("WGT1", 0, "ascii");
  buf.writeUInt16LE(resolution, 4);
  buf.writeUInt16LE(bins, 6);
  for (let r = 0; r < resolution; r++) {
    for (let k = 0; k < bins; k++) {
      buf.writeFloatLE(rows[r][k], 8 + 4 * (r * bins + k));
    }
  }
  writeFileSync(path, buf);
}

export function readWeights(path: string): { resolution: number; bins: number; rows: Float32Array[] } {
  const buf = readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.length < 8) throw new FormatError(path, "truncated WGT1 header");
  if (magicOf(view) !== "WGT1") throw new FormatError(path, "bad magic, expected WGT1");
  const resolution = view.getUint16(4, true);
  const bins = view.getUint16(6, true);
  if (buf.length !== 8 + 4 * resolution * bins) {
    throw new FormatError(path, `expected ${8 + 4 * resolution * bins} bytes, got ${buf.length}`);
  }
  const rows: Float32Array[] = [];
  for (let r = 0; r < resolution; r++) {
    const row = new Float32Array(bins);
    for (let k = 0; k < bins; k++) row[k] = view.getFloat32(8 + 4 * (r * bins + k), true);
    rows.push(row);
  }
  return { resolution, bins, rows };
}

/** Read a binary PGM (P5, 8- or 16-bit) into intensities in [0, 1]. */
export function readPgm(path: string): { width: number; height: number; values: Float64Array } {
  const buf = readFileSync(path);
  let pos = 0;
  const token = (): string => {
    while (pos < buf.length) {
      const c = buf[pos];
      if (c === 0x23) { // '#' comment to end of line
        while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
        pos++;
      } else break;
    }
    const start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    return buf.subarray(start, pos).toString("ascii");
  };
  if (token() !== "P5") throw new FormatError(path, "expected binary PGM (P5)");
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  pos++; // single whitespace byte before the payload
  if (maxval !== 255 && maxval !== 65535) {
    throw new FormatError(path, `unsupported maxval ${maxval}`);
  }
  const values = new Float64Array(width * height);
  if (maxval === 255) {
    for (let i = 0; i < values.length; i++) values[i] = buf[pos + i] / 255;
  } else {
    for (let i = 0; i < values.length; i++) {
      values[i] = buf.readUInt16BE(pos + 2 * i) / 65535;
    }
  }
  return { width, height, values };
}

/** Write intensities in [0, 1] as a 16-bit binary PGM. */
export function writePgm(path: string, width: number, height: number, values: ArrayLike<number>): void {
  if (values.length !== width * height) {
    throw new Error(`expected ${width * height} values, got ${values.length}`);
  }
  const header = Buffer.from(`P5\n${width} ${height}\n65535\n`, "ascii");
  const payload = Buffer.alloc(2 * width * height);
  for (let i = 0; i < values.length; i++) {
    const v = Math.min(1, Math.max(0, values[i]));
    payload.writeUInt16BE(Math.round(v * 65535), 2 * i);
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}
