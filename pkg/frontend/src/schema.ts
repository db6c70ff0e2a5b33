/**
 * Wire types for the conefold artifacts, mirroring docs/formats.md in the
 * main repository. Every loader rejects unknown keys so a drifted artifact
 * fails loudly instead of rendering nonsense.
 */

import { readFileSync } from "node:fs";
import { z } from "zod";
import { FormatError } from "./errors.js";

const header = z
  .object({
    tool_version: z.string(),
    seed: z.number().int(),
    config_hash: z.string().length(64),
  })
  .strict();

const numbers = z.array(z.number());
const matrix = z.array(numbers);

const fold = z
  .object({
    kind: z.enum(["elliptic", "saddle", "mixed"]),
    s: z.number().int(),
    c_T: z.number().int(),
    center: numbers,
    rotation: matrix,
    scale: z.number(),
    hessians: z.array(matrix),
    gradients: matrix,
  })
  .strict();

const bump = z
  .object({
    center: numbers,
    radius: z.number(),
    direction: numbers,
    amplitude: z.number(),
    mode: z.string(),
    c1_bound: z.number(),
  })
  .strict();

export const scenarioSchema = z
  .object({
    header,
    d: z.number().int(),
    n: z.number().int(),
    c_T: z.number().int(),
    s: z.number().int(),
    lambda: numbers,
    base_matrix: matrix,
    surgery: z.object({ rho: z.number(), mu: z.number() }).strict().nullable(),
    epsilon: z.number(),
    alpha: z.number(),
    seed: z.number().int(),
    fold,
    perturbations: z.array(bump),
  })
  .strict();

const tangencyClass = z
  .object({
    cT: z.number().int(),
    dT: z.number().int(),
    kT: z.number().int(),
  })
  .strict();

const geometry = z
  .object({
    patch: matrix,
    patch_shape: z.array(z.number().int()),
    leaf: matrix,
    leaf_shape: z.array(z.number().int()),
    leaf_half_width: z.number(),
  })
  .strict();

export const reportSchema = z
  .object({
    header,
    detector: z.enum(["newton", "sweep"]),
    t_star: numbers,
    point: numbers,
    class: tangencyClass,
    residual_norm: z.number(),
    principal_angles: numbers,
    iterations: z.number().int(),
    leaf_parameter: z.number().nullable(),
    geometry,
  })
  .strict();

export const agreementSchema = z
  .object({
    header,
    distance: z.number(),
    class_equal: z.boolean(),
    agree: z.boolean(),
  })
  .strict();

const rungStats = z
  .object({
    trials: z.number().int(),
    magnitude: z.number(),
    successes: z.number().int(),
    max_residual: z.number(),
    displacement: numbers,
    displacement_slope: z.number(),
    success_rate: z.number(),
  })
  .strict();

export const summarySchema = z
  .object({
    header,
    trials_per_magnitude: z.number().int(),
    stats: z.array(rungStats),
    displacement_slope: z.number(),
    monotone_ok: z.boolean(),
    envelope_ok: z.boolean(),
    certificate_consistent: z.boolean(),
  })
  .strict();

export type Scenario = z.infer<typeof scenarioSchema>;
export type Report = z.infer<typeof reportSchema>;
export type Agreement = z.infer<typeof agreementSchema>;
export type Summary = z.infer<typeof summarySchema>;

function loadJson<T>(path: string, schema: z.ZodType<T>, what: string): T {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new FormatError(`cannot read ${what} at ${path}: ${(err as Error).message}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new FormatError(`${what} at ${path} is not JSON: ${(err as Error).message}`);
  }
  const parsed = schema.safeParse(doc);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    const where = issue && issue.path.length ? ` at ${issue.path.join(".")}` : "";
    const detail = issue ? issue.message : "invalid document";
    throw new FormatError(`${what} at ${path} violates the schema${where}: ${detail}`);
  }
  return parsed.data;
}

export const loadScenario = (path: string): Scenario =>
  loadJson(path, scenarioSchema, "scenario");
export const loadReport = (path: string): Report => loadJson(path, reportSchema, "report");
export const loadSummary = (path: string): Summary =>
  loadJson(path, summarySchema, "summary");
