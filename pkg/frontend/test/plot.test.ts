import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseSweepCsv } from "../src/csv.js";
import { klOrdering, plotSweep } from "../src/plot.js";

const FIXTURES = join(__dirname, "..", "fixtures");
const FULL_CSV = join(FIXTURES, "text8_full_sweep.csv");

describe("sweep CSV parsing", () => {
  it("reads the harness schema", () => {
    const table = parseSweepCsv(FULL_CSV);
    expect(table.rows.length).toBe(33);
    expect(table.unknownColumns).toEqual([]);
    const ar = table.rows.find((r) => r.model === "AR");
    expect(ar?.steps).toBeNull();
    expect(ar?.metrics["KL rate"]).toBeCloseTo(0.0026, 6);
  });
});

describe("figure rendering", () => {
  it("renders the full sweep into a four-panel figure", () => {
    const dir = mkdtempSync(join(tmpdir(), "plot-"));
    const out = join(dir, "sweep.svg");
    const result = plotSweep(FULL_CSV, out);
    expect(existsSync(out)).toBe(true);
    expect(result.panels).toEqual(["KL rate", "NLL", "Ent rate", "3-gram Diversity"]);
    expect(result.notices.join(" ")).toMatch(/MAUVE/);
    const svg = readFileSync(out, "utf-8");
    expect(svg.startsWith("<svg")).toBe(true);
    for (const model of ["AR", "SEDD", "MDLM", "LLaDA", "ReMDM"]) {
      expect(svg).toContain(model);
    }
  });

  it("keeps the qualitative family ordering: one family stays separated", () => {
    const kl = klOrdering(FULL_CSV);
    const converging = ["SEDD", "MDLM", "ReMDM"].map((m) => kl.get(m) ?? Infinity);
    const outlier = kl.get("LLaDA") ?? 0;
    expect(outlier).toBeGreaterThan(10 * Math.max(...converging));
  });

  it("renders deterministically", () => {
    const dir = mkdtempSync(join(tmpdir(), "plot-det-"));
    const a = join(dir, "a.svg");
    const b = join(dir, "b.svg");
    plotSweep(FULL_CSV, a);
    plotSweep(FULL_CSV, b);
    // the renderer keeps a process-global class/id registry, so repeated
    // in-process renders differ only in those tokens; geometry and inline
    // styling must be identical (fresh CLI runs produce identical bytes)
    const normalize = (s: string) =>
      s
        .replace(/class="[^"]*"/g, "")
        .replace(/id="[^"]*"/g, "")
        .replace(/url\(#[^)]*\)/g, "url(#clip)")
        .replace(/<style[\s\S]*?<\/style>/g, "");
    expect(normalize(readFileSync(a, "utf-8"))).toBe(normalize(readFileSync(b, "utf-8")));
  });

  it("lists and skips unknown columns", () => {
    const dir = mkdtempSync(join(tmpdir(), "plot-cols-"));
    const src = readFileSync(FULL_CSV, "utf-8").trim().split(/\r?\n/);
    const extended = [src[0] + ",Mystery", ...src.slice(1).map((l) => l + ",1.0")].join("\n");
    const csvPath = join(dir, "extra.csv");
    writeFileSync(csvPath, extended);
    const result = plotSweep(csvPath, join(dir, "extra.svg"));
    expect(result.skippedColumns).toEqual(["Mystery"]);
    expect(result.notices.join(" ")).toMatch(/Mystery/);
  });

  it("handles a single-row CSV without crashing", () => {
    const dir = mkdtempSync(join(tmpdir(), "plot-single-"));
    const src = readFileSync(FULL_CSV, "utf-8").trim().split(/\r?\n/);
    const csvPath = join(dir, "single.csv");
    writeFileSync(csvPath, [src[0], src[10]].join("\n"));
    const result = plotSweep(csvPath, join(dir, "single.svg"));
    expect(existsSync(result.file)).toBe(true);
  });

  it("renders an optional MAUVE column as an extra panel", () => {
    const dir = mkdtempSync(join(tmpdir(), "plot-mauve-"));
    const src = readFileSync(FULL_CSV, "utf-8").trim().split(/\r?\n/);
    const extended = [src[0] + ",MAUVE", ...src.slice(1).map((l) => l + ",0.91")].join("\n");
    const csvPath = join(dir, "mauve.csv");
    writeFileSync(csvPath, extended);
    const result = plotSweep(csvPath, join(dir, "mauve.svg"));
    expect(result.panels).toContain("MAUVE");
  });
});
