/** Typed access to the harness sweep CSV (Table-1 column schema). */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export const KNOWN_COLUMNS = [
  "Dataset", "Type", "Model", "Steps", "Seed",
  "NLL", "KL rate", "TV rate", "Ent rate", "Unigram L1",
  "2-gram Diversity", "3-gram Diversity", "Duplicate", "Other mass", "Support frac",
  "MAUVE",
] as const;

export interface SweepRow {
  dataset: string;
  type: string;
  model: string;
  steps: number | null;
  seed: string;
  metrics: Record<string, number>;
}

export interface SweepTable {
  rows: SweepRow[];
  /** columns present in the file but not in the known schema */
  unknownColumns: string[];
  /** known metric columns actually present */
  metricColumns: string[];
}

const META_COLUMNS = new Set(["Dataset", "Type", "Model", "Steps", "Seed"]);

export function parseSweepCsv(path: string): SweepTable {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new Error(`CSV parse error in ${path}: ${parsed.errors[0].message}`);
  }
  const fields = parsed.meta.fields ?? [];
  const known = new Set<string>(KNOWN_COLUMNS);
  const unknownColumns = fields.filter((f) => !known.has(f));
  const metricColumns = fields.filter((f) => known.has(f) && !META_COLUMNS.has(f));
  const rows: SweepRow[] = parsed.data.map((rec) => {
    const metrics: Record<string, number> = {};
    for (const col of metricColumns) {
      const value = Number(rec[col]);
      if (Number.isFinite(value)) metrics[col] = value;
    }
    return {
      dataset: rec["Dataset"] ?? "",
      type: rec["Type"] ?? "",
      model: rec["Model"] ?? "",
      steps: rec["Steps"] === "-" || rec["Steps"] === "" ? null : Number(rec["Steps"]),
      seed: rec["Seed"] ?? "",
      metrics,
    };
  });
  return { rows, unknownColumns, metricColumns };
}
