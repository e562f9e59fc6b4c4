/**
 * Text -> per-token vector encoders.
 *
 * The real path wraps the pretrained tweet transformer through
 * `@huggingface/transformers` (last hidden layer, special tokens dropped).
 * The hashed encoder is a deterministic stand-in for tests and offline
 * pipelines: every token maps to a fixed pseudo-random 768-vector seeded
 * from its sha-256 digest, so outputs are bit-stable across runs and
 * platforms.
 */

import { createHash } from "node:crypto";

import { EMBED_DIM, TokenVector } from "./mmeb.js";

export const DEFAULT_MODEL = "vinai/bertweet-base";

export interface EncodedText {
  tokens: TokenVector[];
}

export interface Encoder {
  readonly name: string;
  encode(texts: string[]): Promise<EncodedText[]>;
}

export class EncoderUnavailable extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EncoderUnavailable";
  }
}

/** Whitespace tokenization: keeps hashtags, mentions and punctuation runs. */
export function tokenize(text: string): string[] {
  return text.match(/\S+/g) ?? [];
}

function xorshift128(seed: Buffer): () => number {
  let s0 = seed.readUInt32LE(0);
  let s1 = seed.readUInt32LE(4);
  let s2 = seed.readUInt32LE(8);
  let s3 = seed.readUInt32LE(12);
  if ((s0 | s1 | s2 | s3) === 0) s0 = 0x9e3779b9; // never all-zero state
  return () => {
    let t = s3;
    const s = s0;
    t ^= t << 11;
    t ^= t >>> 8;
    s3 = s2;
    s2 = s1;
    s1 = s;
    t ^= s ^ (s >>> 19);
    s0 = t;
    return t >>> 0;
  };
}

export function hashVector(token: string, dim: number = EMBED_DIM): Float32Array {
  const next = xorshift128(createHash("sha256").update(token, "utf8").digest());
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = (next() / 2 ** 32) * 2 - 1; // u32 -> [-1, 1), rounded to f32 on store
  }
  return out;
}

export class HashedEncoder implements Encoder {
  readonly name = "hashed";

  constructor(readonly dim: number = EMBED_DIM) {}

  async encode(texts: string[]): Promise<EncodedText[]> {
    return texts.map((text) => ({
      tokens: tokenize(text).map((tok) => ({ text: tok, vector: hashVector(tok, this.dim) })),
    }));
  }
}

// ---------------------------------------------------------------------------
// pretrained transformer path

type HubModule = {
  AutoTokenizer: { from_pretrained(model: string): Promise<unknown> };
  pipeline(task: string, model: string): Promise<unknown>;
};

/* eslint-disable @typescript-eslint/no-explicit-any */

class TransformerEncoder implements Encoder {
  constructor(
    readonly name: string,
    private readonly tokenizer: any,
    private readonly extractor: any,
  ) {}

  /** Structural special-token ids (cls/sep/pad/bos/eos/mask); unk is a word. */
  private specialIds(): Set<number> {
    const special = new Set<number>();
    const all = this.tokenizer.all_special_ids;
    if (Array.isArray(all)) for (const id of all) special.add(Number(id));
    for (const key of [
      "cls_token_id",
      "sep_token_id",
      "pad_token_id",
      "bos_token_id",
      "eos_token_id",
      "mask_token_id",
    ]) {
      const id = this.tokenizer[key];
      if (typeof id === "number") special.add(id);
    }
    const unk = this.tokenizer.unk_token_id;
    if (typeof unk === "number") special.delete(unk);
    return special;
  }

  async encode(texts: string[]): Promise<EncodedText[]> {
    const special = this.specialIds();
    const out: EncodedText[] = [];
    for (const text of texts) {
      const ids: number[] = Array.from(this.tokenizer.encode(text), Number);
      const hidden = await this.extractor(text, { pooling: "none" });
      const [, seq, dim] = hidden.dims as [number, number, number];
      if (seq !== ids.length) {
        throw new Error(`tokenizer/model length mismatch: ${ids.length} ids vs ${seq} states`);
      }
      const data = hidden.data as Float32Array;
      const tokens: TokenVector[] = [];
      for (let pos = 0; pos < seq; pos++) {
        if (special.has(ids[pos])) continue;
        const piece = String(this.tokenizer.decode([ids[pos]])).trim();
        tokens.push({ text: piece, vector: data.slice(pos * dim, (pos + 1) * dim) });
      }
      out.push({ tokens });
    }
    return out;
  }
}

/**
 * Load the pretrained tweet encoder. Rejects with EncoderUnavailable when the
 * transformers runtime is not installed or the model cannot be fetched.
 */
const HUB_MODULE = "@huggingface/transformers"; // optional peer, resolved at runtime

export async function loadTransformerEncoder(model: string = DEFAULT_MODEL): Promise<Encoder> {
  let hub: HubModule;
  try {
    hub = (await import(HUB_MODULE)) as HubModule;
  } catch (err) {
    throw new EncoderUnavailable(`@huggingface/transformers is not installed: ${String(err)}`);
  }
  try {
    const tokenizer = await hub.AutoTokenizer.from_pretrained(model);
    const extractor = await hub.pipeline("feature-extraction", model);
    return new TransformerEncoder(model, tokenizer, extractor);
  } catch (err) {
    throw new EncoderUnavailable(`cannot load encoder ${model}: ${String(err)}`);
  }
}
