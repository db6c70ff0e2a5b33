/**
 * Command line entry points, one per figure kind. Each reads artifacts,
 * renders a single SVG, writes it to --out, and prints the output path.
 * Exit codes: 0 success, 1 artifact violates its format, 2 bad invocation.
 */

import { existsSync, writeFileSync } from "node:fs";
import { parseArgs, type ParseArgsConfig } from "node:util";
import { FormatError, UsageError } from "./errors.js";
import { loadStatsCsv } from "./csv.js";
import { loadReport, loadScenario } from "./schema.js";
import { renderManifold } from "./manifold.js";
import { renderLadder } from "./ladder.js";
import { renderAgreement } from "./agreement.js";

/** Everything a figure run needs, assembled from flags before any I/O. */
export interface PlotSpec {
  kind: "manifold" | "ladder" | "agreement";
  inputs: string[];
  axes: number[] | null;
  out: string;
}

function checkInputsExist(spec: PlotSpec): void {
  for (const path of spec.inputs) {
    if (!existsSync(path)) {
      throw new FormatError(`input ${path} does not exist`);
    }
  }
}

type Flags = Record<string, string>;

function parseFlags(argv: string[], usage: string, config: ParseArgsConfig["options"]): Flags {
  let values: Record<string, unknown>;
  try {
    ({ values } = parseArgs({ args: argv, options: config, strict: true, allowPositionals: false }));
  } catch (err) {
    throw new UsageError(`${(err as Error).message}\n${usage}`);
  }
  return values as Flags;
}

function required(flags: Flags, name: string, usage: string): string {
  const value = flags[name];
  if (value === undefined || value === "") {
    throw new UsageError(`missing --${name}\n${usage}`);
  }
  return value;
}

function parseAxes(spec: string | undefined, usage: string): number[] | null {
  if (spec === undefined) return null;
  const axes = spec.split(",").map((part) => Number(part.trim()));
  if (axes.length === 0 || axes.some((a) => !Number.isInteger(a))) {
    throw new UsageError(`--axes must be a comma list of integers, got ${JSON.stringify(spec)}\n${usage}`);
  }
  return axes;
}

function emit(path: string, svg: string): void {
  writeFileSync(path, svg);
  console.log(`wrote ${path}`);
}

function run(body: () => void): number {
  try {
    body();
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(err.message);
      return 2;
    }
    if (err instanceof FormatError) {
      console.error(err.message);
      return 1;
    }
    throw err;
  }
}

// ---------------------------------------------------------------------------
// plot-manifold

const MANIFOLD_USAGE =
  "usage: plot-manifold --scenario scenario.json --report report_<detector>.json --out figure.svg [--axes 0,1,2]";

export function runManifoldCli(argv: string[]): number {
  return run(() => {
    const flags = parseFlags(argv, MANIFOLD_USAGE, {
      scenario: { type: "string" },
      report: { type: "string" },
      out: { type: "string" },
      axes: { type: "string" },
    });
    const scenarioPath = required(flags, "scenario", MANIFOLD_USAGE);
    const reportPath = required(flags, "report", MANIFOLD_USAGE);
    const spec: PlotSpec = {
      kind: "manifold",
      inputs: [scenarioPath, reportPath],
      axes: parseAxes(flags.axes, MANIFOLD_USAGE),
      out: required(flags, "out", MANIFOLD_USAGE),
    };
    checkInputsExist(spec);
    const scenario = loadScenario(scenarioPath);
    const report = loadReport(reportPath);
    emit(spec.out, renderManifold(scenario, report, spec.axes));
  });
}

// ---------------------------------------------------------------------------
// plot-ladder

const LADDER_USAGE = "usage: plot-ladder --stats stats.csv --out figure.svg";

export function runLadderCli(argv: string[]): number {
  return run(() => {
    const flags = parseFlags(argv, LADDER_USAGE, {
      stats: { type: "string" },
      out: { type: "string" },
    });
    const spec: PlotSpec = {
      kind: "ladder",
      inputs: [required(flags, "stats", LADDER_USAGE)],
      axes: null,
      out: required(flags, "out", LADDER_USAGE),
    };
    checkInputsExist(spec);
    emit(spec.out, renderLadder(loadStatsCsv(spec.inputs[0]!)));
  });
}

// ---------------------------------------------------------------------------
// plot-agreement

const AGREEMENT_USAGE = "usage: plot-agreement --stats stats.csv --out figure.svg";

export function runAgreementCli(argv: string[]): number {
  return run(() => {
    const flags = parseFlags(argv, AGREEMENT_USAGE, {
      stats: { type: "string" },
      out: { type: "string" },
    });
    const spec: PlotSpec = {
      kind: "agreement",
      inputs: [required(flags, "stats", AGREEMENT_USAGE)],
      axes: null,
      out: required(flags, "out", AGREEMENT_USAGE),
    };
    checkInputsExist(spec);
    emit(spec.out, renderAgreement(loadStatsCsv(spec.inputs[0]!)));
  });
}
