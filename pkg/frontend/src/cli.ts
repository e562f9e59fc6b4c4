#!/usr/bin/env node
/** mmeb-export: JSONL tweets -> MMEB1 embedding file. */

import { realpathSync } from "node:fs";
import { pathToFileURL } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { DEFAULT_MODEL, Encoder, HashedEncoder, loadTransformerEncoder } from "./encoder.js";
import { exportEmbeddings } from "./export.js";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .scriptName("mmeb-export")
    .usage("$0 --input tweets.jsonl --out embeddings.mmeb [--encoder bertweet|hashed]")
    .option("input", { type: "string", demandOption: true, describe: "JSONL of {id, text}" })
    .option("out", { type: "string", demandOption: true, describe: "MMEB1 output path" })
    .option("encoder", {
      choices: ["bertweet", "hashed"] as const,
      default: "bertweet" as const,
      describe: "pretrained transformer or the deterministic hashed stand-in",
    })
    .option("model", { type: "string", default: DEFAULT_MODEL })
    .option("batch-size", { type: "number", default: 16 })
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      if (err) throw err;
      throw new UsageError(msg ?? "invalid arguments");
    })
    .parse();

  const encoder: Encoder =
    args.encoder === "hashed" ? new HashedEncoder() : await loadTransformerEncoder(args.model);
  const summary = await exportEmbeddings({
    input: args.input,
    output: args.out,
    encoder,
    batchSize: args["batch-size"],
  });
  for (const warning of summary.warnings) console.error(`warning: ${warning}`);
  console.log(`wrote ${args.out}: ${summary.records} records, dim ${summary.dim}`);
  return 0;
}

class UsageError extends Error {}

const isMain = (() => {
  if (!process.argv[1]) return false;
  try {
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
})();

if (isMain) {
  main(hideBin(process.argv)).then(
    (code) => process.exit(code),
    (err) => {
      if (err instanceof UsageError) {
        console.error(err.message);
        process.exit(2);
      }
      const name = err instanceof Error ? err.name || err.constructor.name : "Error";
      const message = err instanceof Error ? err.message : String(err);
      console.error(`error: ${name}: ${message}`);
      process.exit(1);
    },
  );
}
