import { describe, expect, it } from "vitest";

import {
  BadMagic,
  DimensionMismatch,
  EmbeddingRecord,
  MmebFormatError,
  encodeMmeb,
  readMmeb,
} from "../src/mmeb.js";

function vec(dim: number, fill: (i: number) => number): Float32Array {
  return Float32Array.from({ length: dim }, (_, i) => fill(i));
}

function sample(dim = 4): EmbeddingRecord[] {
  return [
    {
      id: "t0001",
      tokens: [
        { text: "hello", vector: vec(dim, (i) => i + 0.5) },
        { text: "#world", vector: vec(dim, (i) => -i) },
      ],
      pooled: vec(dim, (i) => (i + 0.5 - i) / 2),
    },
    { id: "t0002", tokens: [], pooled: new Float32Array(dim) }, // empty text
    {
      id: "claim/42",
      tokens: [{ text: "naïve café ☕", vector: vec(dim, () => 1e-3) }],
      pooled: vec(dim, () => 1e-3),
    },
  ];
}

describe("encodeMmeb/readMmeb", () => {
  it("round-trips records bit-exactly", () => {
    const records = sample();
    const { dim, records: back } = readMmeb(encodeMmeb(records, 4));
    expect(dim).toBe(4);
    expect(back.length).toBe(3);
    for (let r = 0; r < records.length; r++) {
      expect(back[r].id).toBe(records[r].id);
      expect(back[r].tokens.map((t) => t.text)).toEqual(records[r].tokens.map((t) => t.text));
      for (let t = 0; t < records[r].tokens.length; t++) {
        expect(Buffer.from(back[r].tokens[t].vector.buffer)).toEqual(
          Buffer.from(records[r].tokens[t].vector.buffer),
        );
      }
      expect(Buffer.from(back[r].pooled.buffer)).toEqual(Buffer.from(records[r].pooled.buffer));
    }
  });

  it("writes the declared header fields", () => {
    const buf = encodeMmeb(sample(), 4);
    expect(buf.subarray(0, 5).toString("ascii")).toBe("MMEB1");
    expect(buf.readUInt8(5)).toBe(1); // version
    expect(buf.readUInt32LE(6)).toBe(4); // dim
    expect(Number(buf.readBigUInt64LE(10))).toBe(3); // count
  });

  it("encodes deterministically", () => {
    expect(encodeMmeb(sample(), 4).equals(encodeMmeb(sample(), 4))).toBe(true);
  });

  it("defaults to dim 768", () => {
    const rec: EmbeddingRecord = { id: "a", tokens: [], pooled: new Float32Array(768) };
    expect(readMmeb(encodeMmeb([rec])).dim).toBe(768);
  });

  it("rejects wrong-length vectors at write time", () => {
    const bad: EmbeddingRecord = { id: "a", tokens: [], pooled: new Float32Array(3) };
    expect(() => encodeMmeb([bad], 4)).toThrow(DimensionMismatch);
  });

  it("rejects bad magic and unknown versions", () => {
    const buf = encodeMmeb(sample(), 4);
    const magicless = Buffer.from(buf);
    magicless.write("XXXXX", 0, "ascii");
    expect(() => readMmeb(magicless)).toThrow(BadMagic);
    const versioned = Buffer.from(buf);
    versioned.writeUInt8(9, 5);
    expect(() => readMmeb(versioned)).toThrow(/version 9/);
  });

  it("rejects truncated and padded buffers", () => {
    const buf = encodeMmeb(sample(), 4);
    expect(() => readMmeb(buf.subarray(0, buf.length - 3))).toThrow(MmebFormatError);
    expect(() => readMmeb(Buffer.concat([buf, Buffer.from([0])]))).toThrow(/trailing/);
  });

  it("rejects oversized string fields", () => {
    const rec: EmbeddingRecord = {
      id: "x".repeat(70_000),
      tokens: [],
      pooled: new Float32Array(4),
    };
    expect(() => encodeMmeb([rec], 4)).toThrow(/u16/);
  });
});
