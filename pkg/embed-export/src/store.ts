/**
 * Writer (and a small validating reader) for the dscope embedding-store
 * binary format.
 *
 * Layout, little-endian: 16-byte magic "DSCOPE-EMB-V001\0", u32 format
 * version, u32 dim, u64 row count, u8 normalized flag, 7 pad bytes, then
 * row-major float32 payload. Row metadata goes to a separate JSONL sidecar
 * ({record_id, date, row}) in matching row order.
 */

import * as fs from "node:fs";

export const MAGIC = "DSCOPE-EMB-V001\0";
export const FORMAT_VERSION = 1;
export const HEADER_SIZE = 40;

export interface StoreHeader {
  dim: number;
  count: number;
  normalized: boolean;
  version: number;
}

export interface SidecarRecord {
  record_id: string;
  date: string; // ISO-8601 calendar date
  row: number;
}

export function writeStore(
  path: string,
  vectors: Float32Array[],
  dim: number,
  normalized: boolean,
): void {
  for (const [i, v] of vectors.entries()) {
    if (v.length !== dim) {
      throw new Error(`row ${i} has dim ${v.length}, expected ${dim}`);
    }
  }
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(MAGIC, 0, 16, "latin1");
  header.writeUInt32LE(FORMAT_VERSION, 16);
  header.writeUInt32LE(dim, 20);
  header.writeBigUInt64LE(BigInt(vectors.length), 24);
  header.writeUInt8(normalized ? 1 : 0, 32);

  const payload = Buffer.alloc(vectors.length * dim * 4);
  for (const [i, v] of vectors.entries()) {
    for (let j = 0; j < dim; j++) {
      payload.writeFloatLE(v[j], (i * dim + j) * 4);
    }
  }
  const tmp = `${path}.tmp`;
  fs.writeFileSync(tmp, Buffer.concat([header, payload]));
  fs.renameSync(tmp, path);
}

export function sidecarPath(storePath: string): string {
  return `${storePath}.meta.jsonl`;
}

export function writeSidecar(path: string, records: SidecarRecord[]): void {
  const lines = records.map((r) =>
    JSON.stringify({ date: r.date, record_id: r.record_id, row: r.row }),
  );
  fs.writeFileSync(path, lines.length ? lines.join("\n") + "\n" : "");
}

export function readHeader(path: string): StoreHeader {
  const fd = fs.openSync(path, "r");
  try {
    const header = Buffer.alloc(HEADER_SIZE);
    const got = fs.readSync(fd, header, 0, HEADER_SIZE, 0);
    if (got !== HEADER_SIZE) {
      throw new Error(`${path}: file too small for a store header`);
    }
    if (header.toString("latin1", 0, 16) !== MAGIC) {
      throw new Error(`${path}: bad magic; not an embedding store`);
    }
    const version = header.readUInt32LE(16);
    if (version !== FORMAT_VERSION) {
      throw new Error(`${path}: unsupported format version ${version}`);
    }
    const dim = header.readUInt32LE(20);
    const count = Number(header.readBigUInt64LE(24));
    const normalized = header.readUInt8(32) !== 0;
    const expected = HEADER_SIZE + count * dim * 4;
    const actual = fs.fstatSync(fd).size;
    if (actual !== expected) {
      throw new Error(
        `${path}: truncated or oversized payload: expected ${expected} bytes, found ${actual}`,
      );
    }
    return { dim, count, normalized, version };
  } finally {
    fs.closeSync(fd);
  }
}

export function readRows(path: string): { header: StoreHeader; rows: Float32Array[] } {
  const header = readHeader(path);
  const raw = fs.readFileSync(path);
  const rows: Float32Array[] = [];
  for (let i = 0; i < header.count; i++) {
    const row = new Float32Array(header.dim);
    for (let j = 0; j < header.dim; j++) {
      row[j] = raw.readFloatLE(HEADER_SIZE + (i * header.dim + j) * 4);
    }
    rows.push(row);
  }
  return { header, rows };
}

/** L2-normalize in float64, then narrow to float32 for storage. */
export function l2Normalize(values: ArrayLike<number>): Float32Array {
  let sumSq = 0;
  for (let i = 0; i < values.length; i++) {
    sumSq += values[i] * values[i];
  }
  const norm = Math.sqrt(sumSq);
  if (!(norm > 0) || !Number.isFinite(norm)) {
    throw new Error("cannot normalize a zero or non-finite vector");
  }
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = values[i] / norm;
  }
  return out;
}
