/**
 * Sentence encoders behind one async interface.
 *
 * `TransformersEncoder` loads a published checkpoint (LaBSE by default, or
 * a BERT baseline with mean pooling) via transformers.js; `MockEncoder` is
 * a deterministic hash-based stand-in so the pipeline and store format can
 * be exercised with no model download.
 */

import { createHash } from "node:crypto";

export interface Encoder {
  readonly modelId: string;
  readonly pooling: string;
  readonly dim: number;
  encodeBatch(texts: string[]): Promise<number[][]>;
}

/** Deterministic unit Gaussian stream seeded from a SHA-256 digest. */
class HashGaussian {
  private state: [bigint, bigint, bigint, bigint];
  private spare: number | null = null;

  constructor(key: string) {
    const digest = createHash("sha256").update(key, "utf8").digest();
    this.state = [
      digest.readBigUInt64LE(0),
      digest.readBigUInt64LE(8),
      digest.readBigUInt64LE(16),
      digest.readBigUInt64LE(24),
    ];
  }

  private nextU64(): bigint {
    // xoshiro256**, entirely in BigInt so results match on every platform.
    const mask = (1n << 64n) - 1n;
    const rotl = (x: bigint, k: bigint) => ((x << k) | (x >> (64n - k))) & mask;
    const [s0, s1, s2, s3] = this.state;
    const result = (rotl((s1 * 5n) & mask, 7n) * 9n) & mask;
    const t = (s1 << 17n) & mask;
    let n2 = s2 ^ s0;
    let n3 = s3 ^ s1;
    const n1 = s1 ^ n2;
    const n0 = s0 ^ n3;
    n2 ^= t;
    n3 = rotl(n3, 45n);
    this.state = [n0, n1, n2, n3];
    return result;
  }

  private uniform(): number {
    // 53-bit mantissa in (0, 1].
    return (Number(this.nextU64() >> 11n) + 1) / 9007199254740993;
  }

  gaussian(): number {
    if (this.spare !== null) {
      const v = this.spare;
      this.spare = null;
      return v;
    }
    const u = this.uniform();
    const v = this.uniform();
    const r = Math.sqrt(-2.0 * Math.log(u));
    this.spare = r * Math.sin(2.0 * Math.PI * v);
    return r * Math.cos(2.0 * Math.PI * v);
  }
}

export class MockEncoder implements Encoder {
  readonly modelId = "mock";
  readonly pooling = "token-hash-accumulate";
  readonly dim: number;
  private readonly seed: number;
  private readonly cache = new Map<string, Float64Array>();

  constructor(dim = 768, seed = 42) {
    if (dim < 2) {
      throw new Error(`dim must be >= 2, got ${dim}`);
    }
    this.dim = dim;
    this.seed = seed;
  }

  private tokenDirection(token: string): Float64Array {
    const cached = this.cache.get(token);
    if (cached) {
      return cached;
    }
    const rng = new HashGaussian(`${this.seed}\x1f${this.dim}\x1f${token}`);
    const direction = new Float64Array(this.dim);
    let sumSq = 0;
    for (let i = 0; i < this.dim; i++) {
      const g = rng.gaussian();
      direction[i] = g;
      sumSq += g * g;
    }
    const norm = Math.sqrt(sumSq);
    for (let i = 0; i < this.dim; i++) {
      direction[i] /= norm;
    }
    if (this.cache.size < 65536) {
      this.cache.set(token, direction);
    }
    return direction;
  }

  async encodeBatch(texts: string[]): Promise<number[][]> {
    return texts.map((text) => {
      const tokens = text.split(/\s+/).filter((t) => t.length > 0);
      const acc = new Float64Array(this.dim);
      for (const token of tokens.length ? tokens : [""]) {
        const dir = this.tokenDirection(token);
        for (let i = 0; i < this.dim; i++) {
          acc[i] += dir[i];
        }
      }
      return Array.from(acc);
    });
  }
}

export class TransformersEncoder implements Encoder {
  readonly modelId: string;
  readonly pooling: string;
  readonly dim: number;
  private readonly extractor: (texts: string[], opts: object) => Promise<{ data: Float32Array; dims: number[] }>;

  private constructor(
    modelId: string,
    pooling: string,
    dim: number,
    extractor: TransformersEncoder["extractor"],
  ) {
    this.modelId = modelId;
    this.pooling = pooling;
    this.dim = dim;
    this.extractor = extractor;
  }

  static async load(modelId: string, pooling: "mean" | "cls" = "mean"): Promise<TransformersEncoder> {
    let pipeline;
    try {
      // Optional dependency; the specifier is computed so builds do not
      // require the package (or its native onnx runtime) to be present.
      const specifier = "@xenova/transformers";
      ({ pipeline } = await import(specifier));
    } catch (err) {
      throw new Error(
        `encoder load failure: @xenova/transformers is not installed (${(err as Error).message})`,
      );
    }
    let extractor;
    try {
      extractor = await pipeline("feature-extraction", modelId);
    } catch (err) {
      throw new Error(`encoder load failure for ${modelId}: ${(err as Error).message}`);
    }
    const probe = await extractor(["probe"], { pooling, normalize: false });
    const dim = probe.dims[probe.dims.length - 1];
    return new TransformersEncoder(modelId, pooling, dim, extractor as never);
  }

  async encodeBatch(texts: string[]): Promise<number[][]> {
    const out = await this.extractor(texts, { pooling: this.pooling, normalize: false });
    const rows: number[][] = [];
    for (let i = 0; i < texts.length; i++) {
      rows.push(Array.from(out.data.slice(i * this.dim, (i + 1) * this.dim)));
    }
    return rows;
  }
}

export async function loadEncoder(
  modelId: string,
  opts: { dim?: number; seed?: number; pooling?: "mean" | "cls" } = {},
): Promise<Encoder> {
  if (modelId === "mock") {
    return new MockEncoder(opts.dim ?? 768, opts.seed ?? 42);
  }
  return TransformersEncoder.load(modelId, opts.pooling ?? "mean");
}
