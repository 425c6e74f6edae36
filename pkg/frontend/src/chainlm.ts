/**
 * Markov-chain language model evaluator.
 *
 * Loads the JSON kernel dump produced by the primary toolkit and scores
 * text under the chain's own law: log pi0(x_1) + sum log P(x_t | x_{t-1}).
 * The evaluator's tokenizer is the 27-symbol character map for char-level
 * kernels, or a caller-supplied id map otherwise.
 */

import { readFileSync } from "node:fs";

export interface ChainModel {
  name: string;
  vocabSize: number;
  epsilon: number;
  /** dense effective rows, rows[i][j] = P(j | i) */
  rows: number[][];
  pi0: number[];
  charToId: Map<string, number>;
}

const TEXT8_CHARS = " abcdefghijklmnopqrstuvwxyz";

interface KernelDump {
  format: string;
  vocab_size: number;
  epsilon: number;
  nu: number[];
  rows: [number, number][][];
}

/** Stationary distribution by power iteration on the dense rows. */
function stationary(rows: number[][], tol = 1e-12, maxIters = 100000): number[] {
  const v = rows.length;
  let pi = new Array<number>(v).fill(1 / v);
  for (let iter = 0; iter < maxIters; iter++) {
    const next = new Array<number>(v).fill(0);
    for (let i = 0; i < v; i++) {
      const w = pi[i];
      const row = rows[i];
      for (let j = 0; j < v; j++) next[j] += w * row[j];
    }
    let norm = 0;
    for (let j = 0; j < v; j++) norm += next[j];
    let residual = 0;
    for (let j = 0; j < v; j++) {
      next[j] /= norm;
      residual += Math.abs(next[j] - pi[j]);
    }
    pi = next;
    if (residual < tol) return pi;
  }
  throw new Error("power iteration did not converge");
}

export function loadChainModel(path: string, name?: string): ChainModel {
  let dump: KernelDump;
  try {
    dump = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new Error(
      `evaluator model unavailable: cannot read kernel dump at '${path}' (${err}). ` +
        `Export one with the primary toolkit's kernel text dump, then pass its path.`,
    );
  }
  if (dump.format !== "samplerlab-kernel") {
    throw new Error(`evaluator model unavailable: '${path}' is not a kernel text dump`);
  }
  const v = dump.vocab_size;
  const nuSum = dump.nu.reduce((a, b) => a + b, 0);
  const rows: number[][] = [];
  for (let i = 0; i < v; i++) {
    const row = new Array<number>(v).fill(0);
    for (let j = 0; j < v; j++) row[j] = (dump.epsilon * dump.nu[j]) / nuSum;
    for (const [j, p] of dump.rows[i]) row[j] += (1 - dump.epsilon) * p;
    rows.push(row);
  }
  const charToId = new Map<string, number>();
  if (v === TEXT8_CHARS.length) {
    for (let i = 0; i < TEXT8_CHARS.length; i++) charToId.set(TEXT8_CHARS[i], i);
  }
  return {
    name: name ?? `chain-lm(${path.split("/").pop()})`,
    vocabSize: v,
    epsilon: dump.epsilon,
    rows,
    pi0: stationary(rows),
    charToId,
  };
}

/** Tokenize one document under the evaluator's own tokenizer. */
export function tokenize(model: ChainModel, text: string): number[] {
  if (model.charToId.size === 0) {
    throw new Error("evaluator has no character tokenizer; supply token ids instead");
  }
  const ids: number[] = [];
  for (const ch of text) {
    const id = model.charToId.get(ch);
    if (id !== undefined) ids.push(id);
  }
  return ids;
}

/** Total log-likelihood and token count of one document. */
export function scoreIds(model: ChainModel, ids: number[]): { logProb: number; tokens: number } {
  if (ids.length === 0) return { logProb: 0, tokens: 0 };
  let lp = Math.log(model.pi0[ids[0]]);
  for (let t = 1; t < ids.length; t++) {
    lp += Math.log(model.rows[ids[t - 1]][ids[t]]);
  }
  return { logProb: lp, tokens: ids.length };
}
