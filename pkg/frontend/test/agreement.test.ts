/** Agreement figure: detector pairing, annotation counts, failure modes. */

import { fileURLToPath } from "node:url";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it, vi } from "vitest";
import { loadStatsCsv, parseStatsCsv, CSV_COLUMNS } from "../src/csv.js";
import { pairTrials, renderAgreement } from "../src/agreement.js";
import { runAgreementCli } from "../src/cli.js";
import { FormatError } from "../src/errors.js";

const fixture = (rel: string): string => fileURLToPath(new URL(`./fixtures/${rel}`, import.meta.url));

const HEADER = CSV_COLUMNS.join(",");

describe("pairing", () => {
  it("keeps exactly the trials where both detectors succeeded", () => {
    const rows = loadStatsCsv(fixture("ladder12/stats.csv"));
    const pairs = pairTrials(rows);
    const bothSucceeded = new Map<string, number>();
    for (const row of rows) {
      if (!row.success) continue;
      const key = `${row.magnitude}|${row.trial}`;
      bothSucceeded.set(key, (bothSucceeded.get(key) ?? 0) + 1);
    }
    const expected = [...bothSucceeded.values()].filter((n) => n === 2).length;
    expect(pairs.length).toBe(expected);
    expect(pairs.length).toBeGreaterThan(0);
  });

  it("fails when the run never exercised both detectors", () => {
    const rows = loadStatsCsv(fixture("ladder23/stats.csv"));
    expect(rows.every((r) => r.detector === "newton")).toBe(true);
    expect(() => pairTrials(rows)).toThrow(FormatError);
    expect(() => pairTrials(rows)).toThrow("both detectors");
  });
});

describe("figure", () => {
  const rows = loadStatsCsv(fixture("ladder12/stats.csv"));
  const svg = renderAgreement(rows);

  it("annotates the agreed fraction and draws one dot per pair", () => {
    const pairs = pairTrials(rows);
    const agreed = pairs.filter((p) => p.agreed).length;
    expect(svg).toContain(`agreement ${agreed}/${pairs.length}`);
    expect(svg).toContain(`data-agreed="${agreed}"`);
    expect(svg).toContain(`data-pairs="${pairs.length}"`);
    const dots = (svg.match(/class="pair-agree"/g) ?? []).length + (svg.match(/class="pair-disagree"/g) ?? []).length;
    expect(dots).toBe(pairs.length);
    expect(svg).toContain('class="diagonal"');
  });

  it("marks disagreements in their own class", () => {
    const crafted = parseStatsCsv(
      [
        HEADER,
        "0.01,0,1,newton,true,1e-11,0.001,true",
        "0.01,0,1,sweep,true,1e-12,0.001,true",
        "0.01,1,2,newton,true,1e-11,0.002,false",
        "0.01,1,2,sweep,true,1e-12,0.009,false",
      ].join("\n"),
    );
    const out = renderAgreement(crafted);
    expect(out.match(/class="pair-agree"/g)).toHaveLength(1);
    expect(out.match(/class="pair-disagree"/g)).toHaveLength(1);
    expect(out).toContain("agreement 1/2");
  });

  it("is deterministic", () => {
    expect(renderAgreement(rows)).toBe(svg);
  });
});

describe("plot-agreement command", () => {
  const dir = mkdtempSync(join(tmpdir(), "agreement-"));
  afterAll(() => rmSync(dir, { recursive: true, force: true }));

  it("writes the figure and returns 0", () => {
    const out = join(dir, "agree.svg");
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    expect(runAgreementCli(["--stats", fixture("ladder12/stats.csv"), "--out", out])).toBe(0);
    log.mockRestore();
    expect(readFileSync(out, "utf8")).toContain("data-pairs");
  });

  it("returns 1 with a message on a single-detector run", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = runAgreementCli(["--stats", fixture("ladder23/stats.csv"), "--out", join(dir, "x.svg")]);
    expect(err).toHaveBeenCalledWith(expect.stringContaining("both detectors"));
    err.mockRestore();
    expect(code).toBe(1);
  });

  it("returns 2 when flags are wrong", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(runAgreementCli(["--stats", fixture("ladder12/stats.csv")])).toBe(2);
    expect(runAgreementCli(["--nope"])).toBe(2);
    err.mockRestore();
  });
});
