import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { embed, kmeansLabels, mauve, mauveFromDocs, readDocs } from "../src/mauve.js";

const FIXTURES = join(__dirname, "..", "fixtures");

describe("mauve", () => {
  it("self-comparison scores near one", () => {
    const docs = readDocs(join(FIXTURES, "ar_reference.txt"));
    const score = mauveFromDocs(docs, docs);
    expect(score).toBeGreaterThan(0.95);
    expect(score).toBeLessThanOrEqual(1.0 + 1e-9);
  });

  it("collapses under strong sharpening", () => {
    const reference = join(FIXTURES, "ar_reference.txt");
    const faithful = mauve(join(FIXTURES, "sedd_beta1.txt"), reference);
    const sharpened = mauve(join(FIXTURES, "sedd_beta8.txt"), reference);
    expect(sharpened).toBeLessThan(0.5 * faithful);
  });

  it("is deterministic for a fixed seed and sensitive to it only mildly", () => {
    const reference = join(FIXTURES, "ar_reference.txt");
    const a = mauve(join(FIXTURES, "sedd_beta1.txt"), reference, { seed: 7 });
    const b = mauve(join(FIXTURES, "sedd_beta1.txt"), reference, { seed: 7 });
    expect(a).toBe(b);
  });

  it("rejects empty sets", () => {
    expect(() => mauveFromDocs([], ["x"])).toThrow(/non-empty/);
  });
});

describe("featurizer and quantization", () => {
  it("embeddings are L2-normalized and deterministic", () => {
    const v = embed("the same time and the same time", 3, 64);
    let norm = 0;
    for (const x of v) norm += x * x;
    expect(Math.sqrt(norm)).toBeCloseTo(1.0, 9);
    expect(Array.from(embed("abc", 3, 64))).toEqual(Array.from(embed("abc", 3, 64)));
  });

  it("k-means separates clearly distinct groups", () => {
    const a = Array.from({ length: 10 }, (_, i) => embed(`aaaa aaa aa${i}`, 3, 64));
    const b = Array.from({ length: 10 }, (_, i) => embed(`zzzz zzz zz${i}`, 3, 64));
    const labels = kmeansLabels([...a, ...b], 2, 7);
    const first = new Set(labels.slice(0, 10));
    const second = new Set(labels.slice(10));
    expect(first.size).toBe(1);
    expect(second.size).toBe(1);
    expect([...first][0]).not.toBe([...second][0]);
  });
});
