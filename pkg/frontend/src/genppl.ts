/**
 * Generative perplexity of exported text under a named evaluator model:
 * GenPPL = exp(mean token-level negative log-likelihood), with documents
 * truncated to a fixed maximum length. Results are cached by
 * (file hash, evaluator name, max length) so sweeps rerun cheaply.
 */

import { createHash } from "node:crypto";
import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { ChainModel, scoreIds, tokenize } from "./chainlm.js";

export interface GenPPLResult {
  genppl: number;
  nll: number;
  documents: number;
  tokensScored: number;
  evaluator: string;
  maxLength: number;
}

export function fileSha256(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex").slice(0, 16);
}

function cachePath(cacheDir: string, key: string): string {
  return join(cacheDir, `genppl-${key}.json`);
}

export function genppl(
  textPath: string,
  model: ChainModel,
  maxLength = 1024,
  cacheDir?: string,
): GenPPLResult {
  let key = "";
  if (cacheDir) {
    key = createHash("sha256")
      .update(`${fileSha256(textPath)}|${model.name}|${maxLength}`)
      .digest("hex")
      .slice(0, 16);
    const hit = cachePath(cacheDir, key);
    if (existsSync(hit)) return JSON.parse(readFileSync(hit, "utf-8"));
  }
  const lines = readFileSync(textPath, "utf-8").split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) throw new Error(`no documents in ${textPath}`);
  let logProb = 0;
  let tokens = 0;
  for (const line of lines) {
    const ids = tokenize(model, line).slice(0, maxLength);
    const scored = scoreIds(model, ids);
    logProb += scored.logProb;
    tokens += scored.tokens;
  }
  if (tokens === 0) throw new Error(`no scorable tokens in ${textPath}`);
  const nll = -logProb / tokens;
  const result: GenPPLResult = {
    genppl: Math.exp(nll),
    nll,
    documents: lines.length,
    tokensScored: tokens,
    evaluator: model.name,
    maxLength,
  };
  if (cacheDir) {
    mkdirSync(cacheDir, { recursive: true });
    writeFileSync(cachePath(cacheDir, key), JSON.stringify(result, null, 2));
  }
  return result;
}

/** Pooled distinct-over-total character n-gram ratio of a text export. */
export function ngramDiversity(textPath: string, n: number): number {
  const lines = readFileSync(textPath, "utf-8").split("\n").filter((l) => l.length >= n);
  const seen = new Set<string>();
  let total = 0;
  for (const line of lines) {
    for (let i = 0; i + n <= line.length; i++) {
      seen.add(line.slice(i, i + n));
      total += 1;
    }
  }
  if (total === 0) throw new Error("no n-grams in export");
  return seen.size / total;
}
