/**
 * Reader for the robustness stats.csv table. The writer never quotes and
 * never embeds separators inside a field, so an exact split on commas is the
 * whole grammar; anything that does not round-trip is a format violation.
 */

import { readFileSync } from "node:fs";
import { FormatError } from "./errors.js";

export const CSV_COLUMNS = [
  "magnitude",
  "trial",
  "seed",
  "detector",
  "success",
  "residual",
  "displacement",
  "detector_agreement",
] as const;

export interface TrialRow {
  magnitude: number;
  trial: number;
  seed: number;
  detector: "newton" | "sweep";
  success: boolean;
  residual: number | null;
  displacement: number | null;
  detectorAgreement: boolean | null;
}

function parseNumber(cell: string, column: string, line: number): number {
  const value = Number(cell);
  if (cell === "" || !Number.isFinite(value)) {
    throw new FormatError(`stats.csv line ${line}: ${column} is not a finite number (${JSON.stringify(cell)})`);
  }
  return value;
}

function parseOptionalNumber(cell: string, column: string, line: number): number | null {
  if (cell === "") return null;
  return parseNumber(cell, column, line);
}

function parseBool(cell: string, column: string, line: number): boolean {
  if (cell === "true") return true;
  if (cell === "false") return false;
  throw new FormatError(`stats.csv line ${line}: ${column} must be true or false (${JSON.stringify(cell)})`);
}

export function parseStatsCsv(text: string): TrialRow[] {
  if (text.trim() === "") {
    throw new FormatError("stats.csv is empty");
  }
  const lines = text.split("\n");
  const head = lines[0]!.replace(/\r$/, "").split(",");
  if (head.length !== CSV_COLUMNS.length || head.some((name, i) => name !== CSV_COLUMNS[i])) {
    throw new FormatError(`stats.csv header mismatch: expected ${CSV_COLUMNS.join(",")} got ${head.join(",")}`);
  }
  const rows: TrialRow[] = [];
  for (let i = 1; i < lines.length; i += 1) {
    const raw = lines[i]!.replace(/\r$/, "");
    if (raw === "") continue;
    const cells = raw.split(",");
    if (cells.length !== CSV_COLUMNS.length) {
      throw new FormatError(`stats.csv line ${i + 1}: expected ${CSV_COLUMNS.length} cells, got ${cells.length}`);
    }
    const lineNo = i + 1;
    const detector = cells[3]!;
    if (detector !== "newton" && detector !== "sweep") {
      throw new FormatError(`stats.csv line ${lineNo}: unknown detector ${JSON.stringify(detector)}`);
    }
    const agreementCell = cells[7]!;
    rows.push({
      magnitude: parseNumber(cells[0]!, "magnitude", lineNo),
      trial: parseNumber(cells[1]!, "trial", lineNo),
      seed: parseNumber(cells[2]!, "seed", lineNo),
      detector,
      success: parseBool(cells[4]!, "success", lineNo),
      residual: parseOptionalNumber(cells[5]!, "residual", lineNo),
      displacement: parseOptionalNumber(cells[6]!, "displacement", lineNo),
      detectorAgreement: agreementCell === "" ? null : parseBool(agreementCell, "detector_agreement", lineNo),
    });
  }
  if (rows.length === 0) {
    throw new FormatError("stats.csv has no trial rows");
  }
  return rows;
}

export function loadStatsCsv(path: string): TrialRow[] {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new FormatError(`cannot read stats.csv at ${path}: ${(err as Error).message}`);
  }
  return parseStatsCsv(text);
}
