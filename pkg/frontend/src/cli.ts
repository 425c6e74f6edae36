/**
 * Bridge CLI.
 *
 *   genppl --text <export.txt> --evaluator <kernel.json> [--max-length N] [--cache DIR]
 *   mauve  --generated <a.txt> --reference <b.txt> [--clusters K] [--seed S]
 *   plot   --csv <sweep.csv> --out <figure.svg>
 *
 * Emits one JSON record per invocation on stdout.
 */

import { parseArgs } from "node:util";

import { loadChainModel } from "./chainlm.js";
import { genppl } from "./genppl.js";
import { mauve } from "./mauve.js";
import { plotSweep } from "./plot.js";

function fail(message: string): never {
  console.error(message);
  process.exit(2);
}

export function runCli(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === "genppl") {
    const { values } = parseArgs({
      args: rest,
      options: {
        text: { type: "string" },
        evaluator: { type: "string" },
        "max-length": { type: "string", default: "1024" },
        cache: { type: "string" },
      },
    });
    if (!values.text || !values.evaluator) fail("genppl needs --text and --evaluator");
    const model = loadChainModel(values.evaluator);
    const result = genppl(values.text, model, Number(values["max-length"]), values.cache);
    console.log(JSON.stringify(result, null, 2));
    return 0;
  }
  if (command === "mauve") {
    const { values } = parseArgs({
      args: rest,
      options: {
        generated: { type: "string" },
        reference: { type: "string" },
        clusters: { type: "string", default: "16" },
        seed: { type: "string", default: "7" },
      },
    });
    if (!values.generated || !values.reference) fail("mauve needs --generated and --reference");
    const score = mauve(values.generated, values.reference, {
      clusters: Number(values.clusters),
      seed: Number(values.seed),
    });
    console.log(JSON.stringify({ mauve: score, generated: values.generated,
                                 reference: values.reference }, null, 2));
    return 0;
  }
  if (command === "plot") {
    const { values } = parseArgs({
      args: rest,
      options: {
        csv: { type: "string" },
        out: { type: "string" },
      },
    });
    if (!values.csv || !values.out) fail("plot needs --csv and --out");
    const result = plotSweep(values.csv, values.out);
    for (const note of result.notices) console.error(note);
    console.log(JSON.stringify(result, null, 2));
    return 0;
  }
  fail("usage: cli.js {genppl,mauve,plot} ...");
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(runCli(process.argv.slice(2)));
}
