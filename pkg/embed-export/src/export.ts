#!/usr/bin/env node
/**
 * Export sentence embeddings for a JSONL text file into the dscope
 * embedding-store format.
 *
 * Input: one JSON object per line with record_id, date (ISO-8601), text.
 * Output: <output> store binary, <output>.meta.jsonl sidecar, and
 * <output>.manifest.json recording the model id, pooling choice, dims,
 * row count, input digest, and the normalized flag. Every row is
 * re-normalized to unit L2 norm before writing, so downstream cosine
 * scoring reduces to a dot product.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import { parseArgs } from "node:util";

import { loadEncoder } from "./encoders.js";
import { l2Normalize, sidecarPath, writeSidecar, writeStore, type SidecarRecord } from "./store.js";

interface InputRecord {
  record_id: string;
  date: string;
  text: string;
}

export function parseInput(path: string): InputRecord[] {
  const raw = fs.readFileSync(path, "utf8");
  const records: InputRecord[] = [];
  const lines = raw.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) {
      continue;
    }
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}: malformed JSON at line ${i + 1}: ${(err as Error).message}`);
    }
    const rec = parsed as Record<string, unknown>;
    for (const key of ["record_id", "date", "text"]) {
      if (!(key in rec)) {
        throw new Error(`${path}: line ${i + 1} missing field ${key}`);
      }
    }
    if (!/^\d{4}-\d{2}-\d{2}$/.test(String(rec.date))) {
      throw new Error(`${path}: line ${i + 1} has non ISO-8601 date ${String(rec.date)}`);
    }
    records.push({
      record_id: String(rec.record_id),
      date: String(rec.date),
      text: String(rec.text),
    });
  }
  return records;
}

export interface ExportOptions {
  input: string;
  output: string;
  model: string;
  batchSize: number;
  pooling: "mean" | "cls";
  dim?: number;
  seed?: number;
}

export async function runExport(opts: ExportOptions): Promise<void> {
  const records = parseInput(opts.input);
  const encoder = await loadEncoder(opts.model, {
    dim: opts.dim,
    seed: opts.seed,
    pooling: opts.pooling,
  });

  const vectors: Float32Array[] = [];
  for (let start = 0; start < records.length; start += opts.batchSize) {
    const batch = records.slice(start, start + opts.batchSize).map((r) => r.text);
    const encoded = await encoder.encodeBatch(batch);
    for (const row of encoded) {
      vectors.push(l2Normalize(row));
    }
  }

  writeStore(opts.output, vectors, encoder.dim, true);
  const sidecar: SidecarRecord[] = records.map((r, row) => ({
    record_id: r.record_id,
    date: r.date,
    row,
  }));
  writeSidecar(sidecarPath(opts.output), sidecar);

  const manifest = {
    dim: encoder.dim,
    input_sha256: createHash("sha256").update(fs.readFileSync(opts.input)).digest("hex"),
    model: encoder.modelId,
    normalized: true,
    pooling: encoder.pooling,
    rows: vectors.length,
  };
  fs.writeFileSync(`${opts.output}.manifest.json`, JSON.stringify(manifest, null, 2) + "\n");
}

function usage(): void {
  process.stderr.write(
    "usage: dscope-embed-export --input texts.jsonl --output store.bin " +
      "[--model sentence-transformers/LaBSE | mock] [--pooling mean|cls] " +
      "[--batch-size 32] [--dim 768] [--seed 42]\n",
  );
}

export async function main(argv: string[]): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        input: { type: "string" },
        output: { type: "string" },
        model: { type: "string", default: "sentence-transformers/LaBSE" },
        pooling: { type: "string", default: "mean" },
        "batch-size": { type: "string", default: "32" },
        dim: { type: "string" },
        seed: { type: "string" },
      },
    }));
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`);
    usage();
    return 1;
  }
  if (!values.input || !values.output) {
    usage();
    return 1;
  }
  if (values.pooling !== "mean" && values.pooling !== "cls") {
    process.stderr.write(`unknown pooling ${values.pooling}\n`);
    return 1;
  }
  try {
    await runExport({
      input: values.input,
      output: values.output,
      model: values.model!,
      pooling: values.pooling,
      batchSize: Math.max(1, parseInt(values["batch-size"]!, 10)),
      dim: values.dim ? parseInt(values.dim, 10) : undefined,
      seed: values.seed ? parseInt(values.seed, 10) : undefined,
    });
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
