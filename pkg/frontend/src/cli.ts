#!/usr/bin/env node
// plotgen --in results.csv [--in more.csv] --out figs/ [--format svg]
//
// Exit codes: 0 figures written, 1 input data problems (schema mismatch,
// no rows), 2 usage errors.

import * as fs from "node:fs";
import * as path from "node:path";
import { pathToFileURL } from "node:url";

import { parseResultsCsv, ResultRow, SchemaError } from "./schema.js";
import { renderAll } from "./figure.js";

export class UsageError extends Error {}

export interface Options {
  inputs: string[];
  outDir: string;
  format: string;
}

export function parseArgs(argv: string[]): Options {
  const inputs: string[] = [];
  let outDir: string | undefined;
  let format = "svg";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]!;
    const next = () => {
      const value = argv[++i];
      if (value === undefined) throw new UsageError(`${arg} needs a value`);
      return value;
    };
    if (arg === "--in") inputs.push(next());
    else if (arg === "--out") outDir = next();
    else if (arg === "--format") format = next();
    else throw new UsageError(`unknown argument '${arg}'`);
  }
  if (inputs.length === 0) throw new UsageError("--in is required");
  if (outDir === undefined) throw new UsageError("--out is required");
  if (format !== "svg") {
    throw new UsageError(`unsupported format '${format}' (only svg)`);
  }
  return { inputs, outDir, format };
}

export function main(argv: string[]): number {
  let options: Options;
  try {
    options = parseArgs(argv);
  } catch (error) {
    console.error(`usage error: ${(error as Error).message}`);
    return 2;
  }
  try {
    const rows: ResultRow[] = [];
    for (const input of options.inputs) {
      rows.push(...parseResultsCsv(fs.readFileSync(input, "utf8")));
    }
    const figures = renderAll(rows);
    fs.mkdirSync(options.outDir, { recursive: true });
    for (const figure of figures) {
      const dest = path.join(options.outDir, figure.filename);
      fs.writeFileSync(dest, figure.svg);
      console.log(`wrote ${dest} (${figure.panel.series.length} series)`);
    }
    return 0;
  } catch (error) {
    if (error instanceof SchemaError) {
      console.error(`input error: ${error.message}`);
      return 1;
    }
    if ((error as NodeJS.ErrnoException).code !== undefined) {
      console.error(`input error: ${(error as Error).message}`);
      return 1;
    }
    throw error;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
