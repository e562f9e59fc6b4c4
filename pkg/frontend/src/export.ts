/** JSONL-in, MMEB1-out export pipeline. */

import { readFileSync } from "node:fs";

import { z } from "zod";

import { Encoder } from "./encoder.js";
import { DimensionMismatch, EMBED_DIM, EmbeddingRecord, TokenVector, writeMmeb } from "./mmeb.js";

const Row = z.object({ id: z.string().min(1), text: z.string() });

export type InputRow = z.infer<typeof Row>;

export class MalformedInput extends Error {
  constructor(readonly line: number, detail: string) {
    super(`line ${line}: ${detail}`);
    this.name = "MalformedInput";
  }
}

export class DuplicateId extends Error {
  constructor(readonly id: string, readonly line: number) {
    super(`duplicate id ${JSON.stringify(id)} at line ${line}`);
    this.name = "DuplicateId";
  }
}

export interface ExportJob {
  input: string; // JSONL path, one {id, text} per line
  output: string; // MMEB1 path
  encoder: Encoder;
  batchSize?: number;
  dim?: number;
}

export interface ExportSummary {
  records: number;
  dim: number;
  warnings: string[];
}

/** Parse JSONL content; blank lines are skipped, ids must be unique. */
export function parseJsonl(content: string): InputRow[] {
  const rows: InputRow[] = [];
  const seen = new Map<string, number>();
  const lines = content.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new MalformedInput(i + 1, `invalid JSON (${(err as Error).message})`);
    }
    const check = Row.safeParse(parsed);
    if (!check.success) {
      throw new MalformedInput(i + 1, check.error.issues.map((e) => e.message).join("; "));
    }
    const prev = seen.get(check.data.id);
    if (prev !== undefined) throw new DuplicateId(check.data.id, i + 1);
    seen.set(check.data.id, i + 1);
    rows.push(check.data);
  }
  return rows;
}

/** Componentwise mean of token vectors, accumulated in float64. */
export function meanPool(tokens: TokenVector[], dim: number): Float32Array {
  const acc = new Float64Array(dim);
  for (const tok of tokens) {
    if (tok.vector.length !== dim) throw new DimensionMismatch(dim, tok.vector.length);
    for (let i = 0; i < dim; i++) acc[i] += tok.vector[i];
  }
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = acc[i] / tokens.length;
  return out;
}

function* batches<T>(items: T[], size: number): Generator<T[]> {
  for (let i = 0; i < items.length; i += size) yield items.slice(i, i + size);
}

/**
 * Encode every input row and write one MMEB1 record per row, in input order.
 * Empty texts produce an empty token list and an all-zero pooled vector
 * (collected as warnings rather than errors).
 */
export async function exportEmbeddings(job: ExportJob): Promise<ExportSummary> {
  const dim = job.dim ?? EMBED_DIM;
  const batchSize = job.batchSize ?? 16;
  if (batchSize < 1) throw new RangeError(`batch size must be >= 1, got ${batchSize}`);
  const rows = parseJsonl(readFileSync(job.input, "utf8"));

  const records: EmbeddingRecord[] = [];
  const warnings: string[] = [];
  for (const group of batches(rows, batchSize)) {
    const encoded = await job.encoder.encode(group.map((r) => r.text));
    if (encoded.length !== group.length) {
      throw new Error(`encoder returned ${encoded.length} results for ${group.length} texts`);
    }
    for (let i = 0; i < group.length; i++) {
      const { tokens } = encoded[i];
      if (tokens.length === 0) {
        warnings.push(`empty token list for ${group[i].id}; wrote zero pooled vector`);
        records.push({ id: group[i].id, tokens: [], pooled: new Float32Array(dim) });
      } else {
        records.push({ id: group[i].id, tokens, pooled: meanPool(tokens, dim) });
      }
    }
  }
  writeMmeb(job.output, records, dim);
  return { records: records.length, dim, warnings };
}
