/**
 * Render sweep figures from the harness CSV: one panel per metric over
 * diffusion steps, one line per sampler, the step-free baseline drawn as
 * a dashed horizontal reference. Uses echarts server-side SVG rendering;
 * styling is fixed so reruns produce identical files.
 */

import { writeFileSync } from "node:fs";
import * as echarts from "echarts";

import { parseSweepCsv, SweepRow } from "./csv.js";

const PANEL_METRICS = ["KL rate", "NLL", "Ent rate", "3-gram Diversity"];
const OPTIONAL_METRICS = ["MAUVE"];

const PALETTE: Record<string, string> = {
  AR: "#444444",
  SEDD: "#1f77b4",
  MDLM: "#2ca02c",
  LLaDA: "#d62728",
  ReMDM: "#9467bd",
  "ReMDM-loop": "#8c564b",
};

function colorFor(model: string): string {
  if (PALETTE[model]) return PALETTE[model];
  const base = model.split("(")[0];
  return PALETTE[base] ?? "#ff7f0e";
}

export interface PlotResult {
  file: string;
  panels: string[];
  skippedColumns: string[];
  omittedPanels: string[];
  notices: string[];
}

export function plotSweep(csvPath: string, outFile: string, width = 1200, height = 900): PlotResult {
  const table = parseSweepCsv(csvPath);
  const notices: string[] = [];
  if (table.unknownColumns.length > 0) {
    notices.push(`skipping unknown columns: ${table.unknownColumns.join(", ")}`);
  }
  const present = new Set(table.metricColumns);
  const panels = PANEL_METRICS.filter((m) => present.has(m));
  const omittedPanels = [...PANEL_METRICS, ...OPTIONAL_METRICS].filter((m) => !present.has(m));
  for (const metric of OPTIONAL_METRICS) {
    if (present.has(metric)) panels.push(metric);
    else notices.push(`optional column '${metric}' missing: panel omitted`);
  }
  if (panels.length === 0) throw new Error("no plottable metric columns in CSV");

  const stepped = table.rows.filter((r) => r.steps !== null);
  const baselines = table.rows.filter((r) => r.steps === null);
  let steps = [...new Set(stepped.map((r) => r.steps as number))].sort((a, b) => a - b);
  if (steps.length === 0) steps = [1]; // baseline-only table: one reference point
  const models = [...new Set(stepped.map((r) => r.model))];

  const cols = 2;
  const rows = Math.ceil(panels.length / cols);
  const grids: object[] = [];
  const xAxes: object[] = [];
  const yAxes: object[] = [];
  const series: object[] = [];

  panels.forEach((metric, idx) => {
    const r = Math.floor(idx / cols);
    const c = idx % cols;
    grids.push({
      left: `${6 + c * 50}%`,
      top: `${9 + r * (86 / rows)}%`,
      width: "38%",
      height: `${70 / rows}%`,
    });
    const xAxis: Record<string, unknown> = { gridIndex: idx, type: "log", logBase: 2, name: "steps" };
    if (steps.length > 1) {
      xAxis.min = steps[0];
      xAxis.max = steps[steps.length - 1];
    }
    xAxes.push(xAxis);
    yAxes.push({ gridIndex: idx, type: "value", name: metric, scale: true });
    for (const model of models) {
      const pts = stepped
        .filter((r2) => r2.model === model && r2.metrics[metric] !== undefined)
        .sort((a, b) => (a.steps as number) - (b.steps as number))
        .map((r2) => [r2.steps, r2.metrics[metric]]);
      if (pts.length === 0) continue;
      series.push({
        name: model,
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: pts,
        symbolSize: 5,
        lineStyle: { width: 2 },
        itemStyle: { color: colorFor(model) },
        color: colorFor(model),
      });
    }
    for (const base of baselines) {
      if (base.metrics[metric] === undefined) continue;
      series.push({
        name: base.model,
        type: "line",
        xAxisIndex: idx,
        yAxisIndex: idx,
        data: steps.map((s) => [s, base.metrics[metric]]),
        symbol: "none",
        lineStyle: { width: 2, type: "dashed" },
        itemStyle: { color: colorFor(base.model) },
        color: colorFor(base.model),
      });
    }
  });

  const chart = echarts.init(null, undefined, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  chart.setOption({
    animation: false,
    legend: { top: 2, data: [...new Set([...baselines, ...stepped].map((r) => r.model))] },
    grid: grids,
    xAxis: xAxes,
    yAxis: yAxes,
    series,
  });
  const svg = chart.renderToSVGString();
  chart.dispose();
  writeFileSync(outFile, svg);
  return { file: outFile, panels, skippedColumns: table.unknownColumns, omittedPanels, notices };
}

/** Largest-step KL by model: used to check the qualitative family ordering. */
export function klOrdering(csvPath: string): Map<string, number> {
  const table = parseSweepCsv(csvPath);
  const stepped = table.rows.filter((r) => r.steps !== null && r.metrics["KL rate"] !== undefined);
  const maxStep = Math.max(...stepped.map((r) => r.steps as number));
  const out = new Map<string, number>();
  for (const row of stepped) {
    if (row.steps === maxStep) out.set(row.model, row.metrics["KL rate"]);
  }
  return out;
}

export { parseSweepCsv, SweepRow };
