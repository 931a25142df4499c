/**
 * Reader for the simulator's CSV schema:
 *   t, then per matrix entry L the columns re_L, im_L, se_re_L, se_im_L,
 *   then n, aborted.
 * Violations are reported with the offending line number.
 */

import { readFileSync } from "node:fs";

export type StyleRole =
  | "simulation-symbols"
  | "exact-line"
  | "approximation-dashed";

export interface Series {
  name: string;
  values: number[];
  se?: number[];
  role: StyleRole;
}

export interface CurveBundle {
  grid: number[];
  series: Series[];
}

export class CsvSchemaError extends Error {
  constructor(path: string, line: number, message: string) {
    super(`${path}:${line}: ${message}`);
    this.name = "CsvSchemaError";
  }
}

export interface ParsedRun {
  grid: number[];
  entryLabels: string[];
  /** column name (e.g. "re_ee") -> values over the grid */
  columns: Map<string, number[]>;
  n: number;
  aborted: number;
}

export function parseRunCsv(text: string, path = "<csv>"): ParsedRun {
  const lines = text.split(/\r?\n/).filter((ln) => ln.trim().length > 0);
  if (lines.length < 2) {
    throw new CsvSchemaError(path, 1, "need a header row and data rows");
  }
  const header = lines[0].split(",");
  if (header[0] !== "t") {
    throw new CsvSchemaError(path, 1, `first column must be 't', got '${header[0]}'`);
  }
  if (header[header.length - 2] !== "n" || header[header.length - 1] !== "aborted") {
    throw new CsvSchemaError(path, 1, "last columns must be 'n,aborted'");
  }
  const body = header.slice(1, -2);
  if (body.length === 0 || body.length % 4 !== 0) {
    throw new CsvSchemaError(path, 1, "entry columns must come in groups of four");
  }
  const entryLabels: string[] = [];
  for (let k = 0; k < body.length; k += 4) {
    const label = body[k].replace(/^re_/, "");
    const expect = [`re_${label}`, `im_${label}`, `se_re_${label}`, `se_im_${label}`];
    for (let j = 0; j < 4; j += 1) {
      if (body[k + j] !== expect[j]) {
        throw new CsvSchemaError(path, 1, `expected column '${expect[j]}', got '${body[k + j]}'`);
      }
    }
    entryLabels.push(label);
  }

  const columns = new Map<string, number[]>(body.map((c) => [c, []]));
  const grid: number[] = [];
  let n = -1;
  let aborted = -1;
  for (let row = 1; row < lines.length; row += 1) {
    const cells = lines[row].split(",");
    if (cells.length !== header.length) {
      throw new CsvSchemaError(path, row + 1,
        `expected ${header.length} columns, got ${cells.length}`);
    }
    const nums = cells.map((c) => Number(c));
    const bad = nums.findIndex((v) => Number.isNaN(v));
    if (bad >= 0) {
      throw new CsvSchemaError(path, row + 1, `'${cells[bad]}' is not a number`);
    }
    grid.push(nums[0]);
    body.forEach((name, k) => columns.get(name)!.push(nums[1 + k]));
    const rowN = nums[nums.length - 2];
    const rowAborted = nums[nums.length - 1];
    if (n < 0) {
      n = rowN;
      aborted = rowAborted;
    } else if (rowN !== n || rowAborted !== aborted) {
      throw new CsvSchemaError(path, row + 1, "inconsistent n/aborted counters");
    }
  }
  for (let g = 1; g < grid.length; g += 1) {
    if (!(grid[g] > grid[g - 1])) {
      throw new CsvSchemaError(path, g + 2, "time grid must increase strictly");
    }
  }
  return { grid, entryLabels, columns, n, aborted };
}

function seriesFrom(run: ParsedRun, entry: string, part: "re" | "im",
                    name: string, role: StyleRole): Series {
  const values = run.columns.get(`${part}_${entry}`);
  const se = run.columns.get(`se_${part}_${entry}`);
  if (!values || !se) {
    throw new Error(`entry '${entry}' not present in CSV`);
  }
  if (se.some((v) => v < 0)) {
    throw new Error(`negative standard error in entry '${entry}'`);
  }
  const withBars = se.some((v) => v > 0);
  return { name, values, se: withBars ? se : undefined, role };
}

/**
 * Parse a CSV file into a plot-ready bundle.  The series are derived from
 * the header: an 'ee' entry yields the excited-state population p(t); a
 * '+-' entry yields the real and imaginary coherence parts.
 */
export function loadCsv(path: string,
                        role: StyleRole = "simulation-symbols",
                        nameHint?: string): CurveBundle {
  const run = parseRunCsv(readFileSync(path, "utf8"), path);
  const series: Series[] = [];
  const tag = nameHint ? ` (${nameHint})` : "";
  if (run.entryLabels.includes("ee")) {
    series.push(seriesFrom(run, "ee", "re", `p(t)${tag}`, role));
  } else if (run.entryLabels.includes("+-")) {
    series.push(seriesFrom(run, "+-", "re", `Re coherence${tag}`, role));
    series.push(seriesFrom(run, "+-", "im", `Im coherence${tag}`, role));
  } else {
    throw new Error(
      `cannot derive plot series: entries are [${run.entryLabels.join(", ")}]`);
  }
  return { grid: run.grid, series };
}
