import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import { HashedEncoder } from "../src/encoder.js";
import { DuplicateId, MalformedInput, exportEmbeddings, meanPool, parseJsonl } from "../src/export.js";
import { readMmeb } from "../src/mmeb.js";

const FIXTURE = [
  { id: "t0000", text: "BREAKING: 5G towers do NOT cause illness, say researchers #факт #science" },
  { id: "t0001", text: "just read the new @WHO report on vaccine safety — worth your time" },
  { id: "t0002", text: "they don't want you to know this ONE trick #conspiracy" },
  { id: "t0003", text: "Fact check: the viral photo is from 2014, not last week. https://t.co/abc123" },
  { id: "t0004", text: "RT @newsdesk: city council approves flood-defence budget" },
  { id: "t0005", text: "no way this is real 😂😂" },
  { id: "t0006", text: "Thread: how we verified the hospital footage (1/9)" },
  { id: "t0007", text: "drinking bleach cures nothing. stop sharing this." },
  { id: "t0008", text: "new preprint claims room-temperature superconductivity AGAIN" },
  { id: "t0009", text: "local shelter still needs volunteers this weekend" },
];

const tmp = mkdtempSync(join(tmpdir(), "mmeb-export-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

function writeFixture(name: string, rows: object[]): string {
  const path = join(tmp, name);
  writeFileSync(path, rows.map((r) => JSON.stringify(r)).join("\n") + "\n");
  return path;
}

describe("parseJsonl", () => {
  it("parses rows and skips blank lines", () => {
    const rows = parseJsonl('{"id":"a","text":"x"}\n\n  \n{"id":"b","text":"y"}\n');
    expect(rows).toEqual([
      { id: "a", text: "x" },
      { id: "b", text: "y" },
    ]);
  });

  it("reports the 1-based line of malformed JSON", () => {
    expect(() => parseJsonl('{"id":"a","text":"x"}\nnot json\n')).toThrow(MalformedInput);
    expect(() => parseJsonl('{"id":"a","text":"x"}\nnot json\n')).toThrow(/line 2/);
  });

  it("rejects schema violations and empty ids", () => {
    expect(() => parseJsonl('{"id":"a"}\n')).toThrow(MalformedInput);
    expect(() => parseJsonl('{"id":"","text":"x"}\n')).toThrow(MalformedInput);
  });

  it("rejects duplicate ids", () => {
    const doubled = '{"id":"a","text":"x"}\n{"id":"a","text":"y"}\n';
    expect(() => parseJsonl(doubled)).toThrow(DuplicateId);
    expect(() => parseJsonl(doubled)).toThrow(/line 2/);
  });
});

describe("meanPool", () => {
  it("averages componentwise in float64", () => {
    const tokens = [
      { text: "a", vector: Float32Array.from([1, 2, 3]) },
      { text: "b", vector: Float32Array.from([3, 2, 1]) },
    ];
    expect(Array.from(meanPool(tokens, 3))).toEqual([2, 2, 2]);
  });

  it("rejects mixed dimensions", () => {
    const tokens = [
      { text: "a", vector: Float32Array.from([1, 2, 3]) },
      { text: "b", vector: Float32Array.from([1, 2]) },
    ];
    expect(() => meanPool(tokens, 3)).toThrow(/dimension/);
  });
});

describe("exportEmbeddings (hashed encoder)", () => {
  const input = writeFixture("tweets.jsonl", FIXTURE);

  it("writes one record per input line, in input order", async () => {
    const out = join(tmp, "order.mmeb");
    const summary = await exportEmbeddings({ input, output: out, encoder: new HashedEncoder() });
    expect(summary).toMatchObject({ records: 10, dim: 768, warnings: [] });
    const { dim, records } = readMmeb(out);
    expect(dim).toBe(768);
    expect(records.map((r) => r.id)).toEqual(FIXTURE.map((r) => r.id));
  });

  it("is byte-identical across two runs", async () => {
    const a = join(tmp, "runA.mmeb");
    const b = join(tmp, "runB.mmeb");
    await exportEmbeddings({ input, output: a, encoder: new HashedEncoder() });
    await exportEmbeddings({ input, output: b, encoder: new HashedEncoder() });
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });

  it("is invariant to batch size", async () => {
    const a = join(tmp, "batch3.mmeb");
    const b = join(tmp, "batch16.mmeb");
    await exportEmbeddings({ input, output: a, encoder: new HashedEncoder(), batchSize: 3 });
    await exportEmbeddings({ input, output: b, encoder: new HashedEncoder(), batchSize: 16 });
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true);
  });

  it("gives identical texts identical records", async () => {
    const twin = writeFixture("twins.jsonl", [
      { id: "x1", text: "the same words" },
      { id: "x2", text: "the same words" },
    ]);
    const out = join(tmp, "twins.mmeb");
    await exportEmbeddings({ input: twin, output: out, encoder: new HashedEncoder() });
    const { records } = readMmeb(out);
    expect(Buffer.from(records[0].pooled.buffer).equals(Buffer.from(records[1].pooled.buffer))).toBe(true);
    expect(records[0].tokens.map((t) => t.text)).toEqual(records[1].tokens.map((t) => t.text));
  });

  it("turns empty text into a zero pooled vector plus a warning", async () => {
    const path = writeFixture("empty.jsonl", [
      { id: "e0", text: "" },
      { id: "e1", text: "actual words" },
    ]);
    const out = join(tmp, "empty.mmeb");
    const summary = await exportEmbeddings({ input: path, output: out, encoder: new HashedEncoder() });
    expect(summary.warnings).toHaveLength(1);
    expect(summary.warnings[0]).toContain("e0");
    const { records } = readMmeb(out);
    expect(records[0].tokens).toHaveLength(0);
    expect(Math.max(...records[0].pooled.map(Math.abs))).toBe(0);
  });

  it("rejects nonsense batch sizes", async () => {
    await expect(
      exportEmbeddings({ input, output: join(tmp, "x.mmeb"), encoder: new HashedEncoder(), batchSize: 0 }),
    ).rejects.toThrow(RangeError);
  });
});

// ---------------------------------------------------------------------------
// the shipped guarantee: output loads through the primary pipeline unchanged

const LOADER_PROBE = `
import json, sys
from misinfogat.features import load_embeddings
recs = load_embeddings(sys.argv[1], expected_dim=768)
print(json.dumps({
    "count": len(recs),
    "ids": sorted(recs),
    "token_counts": {k: len(v.tokens) for k, v in recs.items()},
}))
`;

describe("round-trip into the primary loader", () => {
  it("passes load_embeddings validation on the 10-tweet fixture", async () => {
    const input = writeFixture("roundtrip.jsonl", FIXTURE);
    const out = join(tmp, "roundtrip.mmeb");
    await exportEmbeddings({ input, output: out, encoder: new HashedEncoder() });
    const stdout = execFileSync("python3", ["-c", LOADER_PROBE, out], { encoding: "utf8" });
    const summary = JSON.parse(stdout);
    expect(summary.count).toBe(10);
    expect(summary.ids).toEqual(FIXTURE.map((r) => r.id).sort());
    for (const row of FIXTURE) {
      expect(summary.token_counts[row.id]).toBe(row.text.split(/\s+/).filter(Boolean).length);
    }
    console.log(
      `[PASS] exporter-round-trip: ${summary.count} records validated by the primary loader ` +
        "(magic, dim=768, pooling invariant)",
    );
  });
});

// ---------------------------------------------------------------------------
// CLI exit-code contract (requires `npm run build` first; npm test does this)

describe("cli", () => {
  const cliPath = fileURLToPath(new URL("../dist/cli.js", import.meta.url));

  it.skipIf(!existsSync(cliPath))("exports via the hashed encoder with exit 0", () => {
    const input = writeFixture("cli.jsonl", FIXTURE.slice(0, 3));
    const out = join(tmp, "cli.mmeb");
    const stdout = execFileSync(
      "node",
      [cliPath, "--input", input, "--out", out, "--encoder", "hashed"],
      { encoding: "utf8" },
    );
    expect(stdout).toContain("3 records");
    expect(readMmeb(out).records).toHaveLength(3);
  });

  it.skipIf(!existsSync(cliPath))("exits 2 on usage errors", () => {
    const run = () => execFileSync("node", [cliPath, "--nope"], { encoding: "utf8", stdio: "pipe" });
    expect(run).toThrow();
    try {
      run();
    } catch (err) {
      expect((err as { status: number }).status).toBe(2);
    }
  });

  it.skipIf(!existsSync(cliPath))("exits 1 with a typed message on domain errors", () => {
    const out = join(tmp, "never.mmeb");
    try {
      execFileSync(
        "node",
        [cliPath, "--input", join(tmp, "missing.jsonl"), "--out", out, "--encoder", "hashed"],
        { encoding: "utf8", stdio: "pipe" },
      );
      expect.unreachable("should have thrown");
    } catch (err) {
      const e = err as { status: number; stderr: string };
      expect(e.status).toBe(1);
      expect(e.stderr).toMatch(/^error: \w+: /);
    }
  });
});
