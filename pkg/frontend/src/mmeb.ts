/**
 * MMEB1 binary embedding container.
 *
 * Layout (everything little-endian):
 *   magic    5 bytes   "MMEB1"
 *   version  u8        1
 *   dim      u32       vector dimension (768 for the tweet encoder)
 *   count    u64       number of records
 *   per record:
 *     id_len u16, id bytes (utf-8)
 *     n_tok  u32
 *     per token: len u16, text bytes (utf-8), dim x f32
 *     pooled dim x f32
 */

import { readFileSync, writeFileSync } from "node:fs";

export const EMBED_DIM = 768;
export const MAGIC = "MMEB1";
export const VERSION = 1;

export interface TokenVector {
  text: string;
  vector: Float32Array;
}

export interface EmbeddingRecord {
  id: string;
  tokens: TokenVector[];
  pooled: Float32Array;
}

export class MmebFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class BadMagic extends MmebFormatError {}

export class DimensionMismatch extends MmebFormatError {
  constructor(readonly expected: number, readonly got: number) {
    super(`embedding dimension mismatch: expected ${expected}, got ${got}`);
  }
}

function f32le(vec: Float32Array, dim: number): Buffer {
  if (vec.length !== dim) throw new DimensionMismatch(dim, vec.length);
  const buf = Buffer.allocUnsafe(4 * dim);
  for (let i = 0; i < dim; i++) buf.writeFloatLE(vec[i], 4 * i);
  return buf;
}

function u16str(text: string): Buffer {
  const bytes = Buffer.from(text, "utf8");
  if (bytes.length > 0xffff) {
    throw new MmebFormatError(`string field exceeds u16 length: ${bytes.length} bytes`);
  }
  const len = Buffer.allocUnsafe(2);
  len.writeUInt16LE(bytes.length, 0);
  return Buffer.concat([len, bytes]);
}

export function encodeMmeb(records: EmbeddingRecord[], dim: number = EMBED_DIM): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.allocUnsafe(13);
  header.writeUInt8(VERSION, 0);
  header.writeUInt32LE(dim, 1);
  header.writeBigUInt64LE(BigInt(records.length), 5);
  chunks.push(Buffer.from(MAGIC, "ascii"), header);
  for (const rec of records) {
    chunks.push(u16str(rec.id));
    const nTok = Buffer.allocUnsafe(4);
    nTok.writeUInt32LE(rec.tokens.length, 0);
    chunks.push(nTok);
    for (const tok of rec.tokens) {
      chunks.push(u16str(tok.text), f32le(tok.vector, dim));
    }
    chunks.push(f32le(rec.pooled, dim));
  }
  return Buffer.concat(chunks);
}

export function writeMmeb(path: string, records: EmbeddingRecord[], dim: number = EMBED_DIM): void {
  writeFileSync(path, encodeMmeb(records, dim));
}

class Cursor {
  offset = 0;
  constructor(private buf: Buffer) {}

  take(n: number): Buffer {
    if (this.offset + n > this.buf.length) {
      throw new MmebFormatError(
        `truncated file: wanted ${n} bytes at offset ${this.offset}, have ${this.buf.length - this.offset}`,
      );
    }
    const out = this.buf.subarray(this.offset, this.offset + n);
    this.offset += n;
    return out;
  }

  u8(): number {
    return this.take(1).readUInt8(0);
  }

  u16(): number {
    return this.take(2).readUInt16LE(0);
  }

  u32(): number {
    return this.take(4).readUInt32LE(0);
  }

  u64(): number {
    const v = this.take(8).readBigUInt64LE(0);
    if (v > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new MmebFormatError(`record count ${v} exceeds safe integer range`);
    }
    return Number(v);
  }

  str(): string {
    return this.take(this.u16()).toString("utf8");
  }

  f32vec(dim: number): Float32Array {
    const raw = this.take(4 * dim);
    const out = new Float32Array(dim);
    for (let i = 0; i < dim; i++) out[i] = raw.readFloatLE(4 * i);
    return out;
  }

  get exhausted(): boolean {
    return this.offset === this.buf.length;
  }
}

/** Structural parse of an MMEB1 buffer or file (no pooling re-verification). */
export function readMmeb(source: string | Buffer): { dim: number; records: EmbeddingRecord[] } {
  const buf = typeof source === "string" ? readFileSync(source) : source;
  const cur = new Cursor(buf);
  if (cur.take(5).toString("ascii") !== MAGIC) {
    throw new BadMagic("not an MMEB1 buffer");
  }
  const version = cur.u8();
  if (version !== VERSION) throw new BadMagic(`unsupported MMEB1 version ${version}`);
  const dim = cur.u32();
  const count = cur.u64();
  const records: EmbeddingRecord[] = [];
  for (let r = 0; r < count; r++) {
    const id = cur.str();
    const nTok = cur.u32();
    const tokens: TokenVector[] = [];
    for (let t = 0; t < nTok; t++) {
      tokens.push({ text: cur.str(), vector: cur.f32vec(dim) });
    }
    records.push({ id, tokens, pooled: cur.f32vec(dim) });
  }
  if (!cur.exhausted) throw new MmebFormatError("trailing bytes after final record");
  return { dim, records };
}
