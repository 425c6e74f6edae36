import { mkdtempSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { loadChainModel, scoreIds, tokenize } from "../src/chainlm.js";
import { genppl, ngramDiversity } from "../src/genppl.js";

const FIXTURES = join(__dirname, "..", "fixtures");
const EVALUATOR = join(FIXTURES, "chain.kern.json");
const BETAS = [1, 2, 5, 10, 25];

describe("chain language model evaluator", () => {
  it("loads the kernel dump and exposes a normalized model", () => {
    const model = loadChainModel(EVALUATOR);
    expect(model.vocabSize).toBe(27);
    for (const row of model.rows) {
      const sum = row.reduce((a, b) => a + b, 0);
      expect(sum).toBeCloseTo(1.0, 9);
      expect(Math.min(...row)).toBeGreaterThan(0);
    }
    expect(model.pi0.reduce((a, b) => a + b, 0)).toBeCloseTo(1.0, 9);
  });

  it("scores a document as initial law plus transition terms", () => {
    const model = loadChainModel(EVALUATOR);
    const ids = tokenize(model, "the cat");
    const { logProb, tokens } = scoreIds(model, ids);
    let want = Math.log(model.pi0[ids[0]]);
    for (let t = 1; t < ids.length; t++) want += Math.log(model.rows[ids[t - 1]][ids[t]]);
    expect(tokens).toBe(ids.length);
    expect(logProb).toBeCloseTo(want, 12);
  });

  it("fails with instructions when the evaluator is unavailable", () => {
    expect(() => loadChainModel("/nonexistent/model.json")).toThrow(/evaluator model unavailable/);
  });
});

describe("generative perplexity", () => {
  it("decreases monotonically under sharpened sampling while diversity collapses", () => {
    const model = loadChainModel(EVALUATOR);
    const ppl = BETAS.map((b) => genppl(join(FIXTURES, `ar_beta${b}.txt`), model).genppl);
    const div = BETAS.map((b) => ngramDiversity(join(FIXTURES, `ar_beta${b}.txt`), 3));
    for (let i = 1; i < BETAS.length; i++) {
      expect(ppl[i]).toBeLessThan(ppl[i - 1]);
      expect(div[i]).toBeLessThan(div[i - 1]);
    }
    // two orders of magnitude trend end to end is evaluator-dependent;
    // the direction plus a large ratio is the required property
    expect(ppl[0] / ppl[BETAS.length - 1]).toBeGreaterThan(2.0);
  });

  it("handles single-token documents without crashing", () => {
    const dir = mkdtempSync(join(tmpdir(), "genppl-"));
    const path = join(dir, "one.txt");
    writeFileSync(path, "a\nb\nz\n");
    const model = loadChainModel(EVALUATOR);
    const result = genppl(path, model);
    expect(Number.isFinite(result.genppl)).toBe(true);
    expect(result.documents).toBe(3);
  });

  it("records the evaluator and truncation length and caches by content", () => {
    const model = loadChainModel(EVALUATOR);
    const dir = mkdtempSync(join(tmpdir(), "genppl-cache-"));
    const first = genppl(join(FIXTURES, "ar_beta1.txt"), model, 256, dir);
    expect(first.maxLength).toBe(256);
    expect(first.evaluator).toContain("chain-lm");
    const files = readdirSync(dir);
    expect(files.length).toBe(1);
    const second = genppl(join(FIXTURES, "ar_beta1.txt"), model, 256, dir);
    expect(second).toEqual(first);
    expect(readdirSync(dir).length).toBe(1);
  });

  it("truncation changes the scored token count", () => {
    const model = loadChainModel(EVALUATOR);
    const full = genppl(join(FIXTURES, "ar_beta1.txt"), model, 1024);
    const cut = genppl(join(FIXTURES, "ar_beta1.txt"), model, 64);
    expect(cut.tokensScored).toBeLessThan(full.tokensScored);
  });
});
