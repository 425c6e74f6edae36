/**
 * MAUVE between a generated text set and a reference set.
 *
 * Documents are embedded as L2-normalized hashed character n-gram count
 * vectors (a deterministic offline featurizer standing in for a
 * pretrained-LM embedding), quantized with seeded k-means over the joint
 * set, and compared through the standard divergence frontier: the score
 * is the area under the curve of
 *   ( exp(-c * KL(Q || R_a)), exp(-c * KL(P || R_a)) ),  R_a = a P + (1-a) Q.
 */

import { readFileSync } from "node:fs";

export interface MauveOptions {
  nGram?: number;
  dims?: number;
  clusters?: number;
  scale?: number; // frontier scaling constant c
  gridSize?: number;
  seed?: number;
}

const DEFAULTS: Required<MauveOptions> = {
  nGram: 3,
  dims: 512,
  clusters: 16,
  scale: 5,
  gridSize: 25,
  seed: 7,
};

/** FNV-1a over a string, for feature hashing. */
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

export function embed(doc: string, nGram: number, dims: number): Float64Array {
  const v = new Float64Array(dims);
  for (let i = 0; i + nGram <= doc.length; i++) {
    v[fnv1a(doc.slice(i, i + nGram)) % dims] += 1;
  }
  let norm = 0;
  for (let d = 0; d < dims; d++) norm += v[d] * v[d];
  norm = Math.sqrt(norm) || 1;
  for (let d = 0; d < dims; d++) v[d] /= norm;
  return v;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function sqDist(a: Float64Array, b: Float64Array): number {
  let d = 0;
  for (let i = 0; i < a.length; i++) {
    const diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

/** Seeded k-means (k-means++ init, fixed iteration cap); returns labels. */
export function kmeansLabels(points: Float64Array[], k: number, seed: number, iters = 50): number[] {
  const n = points.length;
  const dims = points[0].length;
  const rand = mulberry32(seed);
  const centers: Float64Array[] = [Float64Array.from(points[Math.floor(rand() * n)])];
  const dist = new Float64Array(n).fill(Infinity);
  while (centers.length < Math.min(k, n)) {
    let total = 0;
    for (let i = 0; i < n; i++) {
      dist[i] = Math.min(dist[i], sqDist(points[i], centers[centers.length - 1]));
      total += dist[i];
    }
    if (total <= 0) break; // all remaining points coincide with a center
    let target = rand() * total;
    let pick = n - 1;
    for (let i = 0; i < n; i++) {
      target -= dist[i];
      if (target <= 0) {
        pick = i;
        break;
      }
    }
    centers.push(Float64Array.from(points[pick]));
  }
  const labels = new Array<number>(n).fill(0);
  for (let iter = 0; iter < iters; iter++) {
    let moved = false;
    for (let i = 0; i < n; i++) {
      let best = 0;
      let bestDist = Infinity;
      for (let c = 0; c < centers.length; c++) {
        let dist = 0;
        const ctr = centers[c];
        const p = points[i];
        for (let d = 0; d < dims; d++) {
          const diff = p[d] - ctr[d];
          dist += diff * diff;
        }
        if (dist < bestDist) {
          bestDist = dist;
          best = c;
        }
      }
      if (labels[i] !== best) moved = true;
      labels[i] = best;
    }
    if (!moved && iter > 0) break;
    for (let c = 0; c < centers.length; c++) {
      const ctr = centers[c];
      ctr.fill(0);
      let count = 0;
      for (let i = 0; i < n; i++) {
        if (labels[i] === c) {
          count += 1;
          for (let d = 0; d < dims; d++) ctr[d] += points[i][d];
        }
      }
      if (count > 0) for (let d = 0; d < dims; d++) ctr[d] /= count;
    }
  }
  return labels;
}

function kl(p: number[], q: number[]): number {
  let out = 0;
  for (let i = 0; i < p.length; i++) {
    if (p[i] > 0) out += p[i] * Math.log(p[i] / q[i]);
  }
  return out;
}

export function divergenceFrontierArea(p: number[], q: number[], scale: number, gridSize: number): number {
  const pts: [number, number][] = [[0, 1], [1, 0]];
  for (let g = 1; g <= gridSize; g++) {
    const a = g / (gridSize + 1);
    const mix = p.map((pi, i) => a * pi + (1 - a) * q[i]);
    pts.push([Math.exp(-scale * kl(q, mix)), Math.exp(-scale * kl(p, mix))]);
  }
  pts.sort((u, v) => u[0] - v[0] || u[1] - v[1]);
  let area = 0;
  for (let i = 1; i < pts.length; i++) {
    area += (pts[i][0] - pts[i - 1][0]) * 0.5 * (pts[i][1] + pts[i - 1][1]);
  }
  return area;
}

export function mauveFromDocs(generated: string[], reference: string[], options: MauveOptions = {}): number {
  const opt = { ...DEFAULTS, ...options };
  if (generated.length === 0 || reference.length === 0) {
    throw new Error("generated and reference sets must both be non-empty");
  }
  const points = [...generated, ...reference].map((d) => embed(d, opt.nGram, opt.dims));
  const labels = kmeansLabels(points, opt.clusters, opt.seed);
  const k = Math.max(...labels) + 1;
  const smooth = 1e-6;
  const q = new Array<number>(k).fill(smooth); // generated
  const p = new Array<number>(k).fill(smooth); // reference
  labels.slice(0, generated.length).forEach((c) => (q[c] += 1));
  labels.slice(generated.length).forEach((c) => (p[c] += 1));
  const qn = q.reduce((a, b) => a + b, 0);
  const pn = p.reduce((a, b) => a + b, 0);
  for (let c = 0; c < k; c++) {
    q[c] /= qn;
    p[c] /= pn;
  }
  return divergenceFrontierArea(p, q, opt.scale, opt.gridSize);
}

export function readDocs(path: string): string[] {
  return readFileSync(path, "utf-8").split("\n").filter((l) => l.length > 0);
}

export function mauve(generatedPath: string, referencePath: string, options: MauveOptions = {}): number {
  return mauveFromDocs(readDocs(generatedPath), readDocs(referencePath), options);
}
