// The result-CSV contract this tool consumes. The column set and order are
// fixed by the producing benchmark; anything else is rejected up front so a
// drifting schema fails loudly instead of rendering nonsense.

export const CSV_COLUMNS = [
  "label",
  "kernel",
  "threads",
  "affinity",
  "mode",
  "mem_node",
  "best_rate_gbps",
  "avg_time_s",
  "min_time_s",
  "max_time_s",
  "validated",
  "unpinned",
] as const;

export interface ResultRow {
  label: string;
  kernel: string;
  threads: number;
  affinity: string;
  mode: string;
  memNode: number;
  bestRateGbps: number;
  avgTimeS: number;
  minTimeS: number;
  maxTimeS: number;
  validated: boolean;
  unpinned: boolean;
}

export class SchemaError extends Error {}

function parseNumber(text: string, column: string, line: number): number {
  const value = Number(text);
  if (text === "" || Number.isNaN(value)) {
    throw new SchemaError(`line ${line}: bad ${column} value '${text}'`);
  }
  return value;
}

function parseInt_(text: string, column: string, line: number): number {
  const value = parseNumber(text, column, line);
  if (!Number.isInteger(value)) {
    throw new SchemaError(`line ${line}: ${column} must be an integer, got '${text}'`);
  }
  return value;
}

function parseBool(text: string, column: string, line: number): boolean {
  if (text === "true") return true;
  if (text === "false") return false;
  throw new SchemaError(`line ${line}: ${column} must be true or false, got '${text}'`);
}

/** Parse one results CSV. Throws SchemaError naming the first problem found. */
export function parseResultsCsv(text: string): ResultRow[] {
  const lines = text.split("\n").filter((line) => line.trim() !== "");
  if (lines.length === 0) {
    throw new SchemaError(`missing column '${CSV_COLUMNS[0]}' (empty input)`);
  }
  const header = (lines[0] ?? "").split(",");
  for (const column of CSV_COLUMNS) {
    if (!header.includes(column)) {
      throw new SchemaError(`missing column '${column}'`);
    }
  }
  if (header.join(",") !== CSV_COLUMNS.join(",")) {
    throw new SchemaError("columns are present but not in the contract order");
  }
  if (lines.length === 1) {
    throw new SchemaError("no rows");
  }

  const rows: ResultRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = i + 1;
    const parts = (lines[i] ?? "").split(",");
    if (parts.length !== CSV_COLUMNS.length) {
      throw new SchemaError(
        `line ${line}: expected ${CSV_COLUMNS.length} fields, got ${parts.length}`
      );
    }
    const f = parts as string[];
    rows.push({
      label: f[0]!,
      kernel: f[1]!,
      threads: parseInt_(f[2]!, "threads", line),
      affinity: f[3]!,
      mode: f[4]!,
      memNode: parseInt_(f[5]!, "mem_node", line),
      bestRateGbps: parseNumber(f[6]!, "best_rate_gbps", line),
      avgTimeS: parseNumber(f[7]!, "avg_time_s", line),
      minTimeS: parseNumber(f[8]!, "min_time_s", line),
      maxTimeS: parseNumber(f[9]!, "max_time_s", line),
      validated: parseBool(f[10]!, "validated", line),
      unpinned: parseBool(f[11]!, "unpinned", line),
    });
  }
  return rows;
}
