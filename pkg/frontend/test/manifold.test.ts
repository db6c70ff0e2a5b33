/** Manifold figure: projection geometry and failure modes. */

import { fileURLToPath } from "node:url";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it, vi } from "vitest";
import { loadReport, loadScenario } from "../src/schema.js";
import { renderManifold } from "../src/manifold.js";
import { runManifoldCli } from "../src/cli.js";
import { FormatError } from "../src/errors.js";

const fixture = (rel: string): string => fileURLToPath(new URL(`./fixtures/${rel}`, import.meta.url));

interface Pt {
  x: number;
  y: number;
}

function polylines(svg: string, className: string): Pt[][] {
  const out: Pt[][] = [];
  const pattern = /<polyline points="([^"]+)"[^>]*class="([a-z-]+)"/g;
  for (const match of svg.matchAll(pattern)) {
    if (match[2] !== `${className}-line`) continue;
    out.push(
      match[1]!.split(" ").map((pair) => {
        const [x, y] = pair.split(",").map(Number);
        return { x: x!, y: y! };
      }),
    );
  }
  return out;
}

function marker(svg: string): Pt {
  const match = svg.match(/<circle cx="([-\d.]+)" cy="([-\d.]+)" r="5\.00" id="tangency-point"/);
  expect(match).not.toBeNull();
  return { x: Number(match![1]), y: Number(match![2]) };
}

const sub = (a: Pt, b: Pt): Pt => ({ x: a.x - b.x, y: a.y - b.y });
const norm = (v: Pt): number => Math.hypot(v.x, v.y);
const cross = (a: Pt, b: Pt): number => a.x * b.y - a.y * b.x;

/** Unsigned angle between two directions, treating v and -v as equal. */
function lineAngle(a: Pt, b: Pt): number {
  const dot = Math.abs(a.x * b.x + a.y * b.y);
  return Math.acos(Math.min(1, dot / (norm(a) * norm(b))));
}

/** Largest distance from interior vertices to the chord through the endpoints. */
function bowing(path: Pt[]): number {
  const chord = sub(path[path.length - 1]!, path[0]!);
  const length = norm(chord);
  let worst = 0;
  for (const p of path) {
    worst = Math.max(worst, Math.abs(cross(chord, sub(p, path[0]!))) / length);
  }
  return worst;
}

describe("plane scenario (d=2)", () => {
  const scenario = loadScenario(fixture("line11/scenario.json"));
  const report = loadReport(fixture("line11/report_newton.json"));
  const svg = renderManifold(scenario, report, null);

  it("draws one patch curve and one leaf curve through the tangency point", () => {
    const patch = polylines(svg, "patch");
    const leaf = polylines(svg, "leaf");
    expect(patch).toHaveLength(1);
    expect(leaf).toHaveLength(1);
    const m = marker(svg);
    const nearest = (path: Pt[]): number => Math.min(...path.map((p) => norm(sub(p, m))));
    expect(nearest(patch[0]!)).toBeLessThan(0.02);
    expect(nearest(leaf[0]!)).toBeLessThan(0.02);
  });

  it("shows a curved patch tangent to a straight leaf at the point", () => {
    const patch = polylines(svg, "patch")[0]!;
    const leaf = polylines(svg, "leaf")[0]!;
    const m = marker(svg);

    // The leaf is a straight line; the patch is visibly bowed.
    expect(bowing(leaf)).toBeLessThan(0.5);
    expect(bowing(patch)).toBeGreaterThan(5);

    // At the marker the two share a direction: tangency, not a crossing.
    let vertex = 0;
    for (let i = 1; i < patch.length; i += 1) {
      if (norm(sub(patch[i]!, m)) < norm(sub(patch[vertex]!, m))) vertex = i;
    }
    expect(vertex).toBeGreaterThan(0);
    expect(vertex).toBeLessThan(patch.length - 1);
    const patchDir = sub(patch[vertex + 1]!, patch[vertex - 1]!);
    const leafDir = sub(leaf[leaf.length - 1]!, leaf[0]!);
    expect(lineAngle(patchDir, leafDir)).toBeLessThan(0.05);

    // The parabola stays on one side of its tangent line.
    const sides = patch.map((p) => cross(leafDir, sub(p, m)) / norm(leafDir));
    const below = sides.filter((s) => s < -0.5).length;
    const above = sides.filter((s) => s > 0.5).length;
    expect(Math.min(below, above)).toBe(0);
    expect(Math.max(below, above)).toBeGreaterThan(patch.length / 2);
  });

  it("is deterministic", () => {
    expect(renderManifold(scenario, report, null)).toBe(svg);
  });
});

describe("space scenario (d=3)", () => {
  const scenario = loadScenario(fixture("surf12/scenario.json"));
  const report = loadReport(fixture("surf12/report_newton.json"));
  const svg = renderManifold(scenario, report, null);

  it("draws the paraboloid and plane as grid wireframes", () => {
    expect(polylines(svg, "patch")).toHaveLength(41 + 41);
    expect(polylines(svg, "leaf")).toHaveLength(32 + 32);
    marker(svg);
  });

  it("projects the plane to straight wires and the paraboloid to curved ones", () => {
    const leafBows = polylines(svg, "leaf").map(bowing);
    expect(Math.max(...leafBows)).toBeLessThan(0.5);
    const patchBows = polylines(svg, "patch").map(bowing);
    expect(Math.max(...patchBows)).toBeGreaterThan(5);
  });

  it("honors an explicit axis choice", () => {
    const other = renderManifold(scenario, report, [2, 0]);
    expect(other).not.toBe(svg);
    expect(other).toContain("axes 2, 0");
  });
});

describe("high-dimensional scenario (d=8)", () => {
  const scenario = loadScenario(fixture("cloud23/scenario.json"));
  const report = loadReport(fixture("cloud23/report_newton.json"));

  it("falls back to point clouds when the grids have more than two axes", () => {
    const svg = renderManifold(scenario, report, [0, 3, 6]);
    expect(polylines(svg, "patch")).toHaveLength(0);
    expect(polylines(svg, "leaf")).toHaveLength(0);
    expect(svg.match(/class="patch-point"/g)).toHaveLength(4 * 4 * 4 * 4 * 4 * 4);
    expect(svg.match(/class="leaf-point"/g)).toHaveLength(10 * 10 * 10);
  });

  it("rejects out-of-range and repeated axes", () => {
    expect(() => renderManifold(scenario, report, [0, 8])).toThrow(FormatError);
    expect(() => renderManifold(scenario, report, [1, 1])).toThrow(FormatError);
    expect(() => renderManifold(scenario, report, [0])).toThrow(FormatError);
  });
});

describe("plot-manifold command", () => {
  const dir = mkdtempSync(join(tmpdir(), "manifold-"));
  afterAll(() => rmSync(dir, { recursive: true, force: true }));

  it("writes the figure and returns 0", () => {
    const out = join(dir, "fig.svg");
    const log = vi.spyOn(console, "log").mockImplementation(() => {});
    const code = runManifoldCli([
      "--scenario",
      fixture("line11/scenario.json"),
      "--report",
      fixture("line11/report_newton.json"),
      "--out",
      out,
    ]);
    log.mockRestore();
    expect(code).toBe(0);
    expect(readFileSync(out, "utf8")).toContain("tangency-point");
  });

  it("returns 1 when the report file is missing", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = runManifoldCli([
      "--scenario",
      fixture("line11/scenario.json"),
      "--report",
      join(dir, "absent.json"),
      "--out",
      join(dir, "fig2.svg"),
    ]);
    err.mockRestore();
    expect(code).toBe(1);
  });

  it("returns 1 when the report violates the schema", () => {
    const doc = JSON.parse(readFileSync(fixture("line11/report_newton.json"), "utf8")) as Record<string, unknown>;
    delete doc.residual_norm;
    const broken = join(dir, "broken.json");
    writeFileSync(broken, JSON.stringify(doc));
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    const code = runManifoldCli([
      "--scenario",
      fixture("line11/scenario.json"),
      "--report",
      broken,
      "--out",
      join(dir, "fig3.svg"),
    ]);
    expect(err).toHaveBeenCalled();
    err.mockRestore();
    expect(code).toBe(1);
  });

  it("returns 2 on unknown flags or missing arguments", () => {
    const err = vi.spyOn(console, "error").mockImplementation(() => {});
    expect(runManifoldCli(["--bogus", "x"])).toBe(2);
    expect(runManifoldCli(["--scenario", fixture("line11/scenario.json")])).toBe(2);
    expect(
      runManifoldCli([
        "--scenario",
        fixture("line11/scenario.json"),
        "--report",
        fixture("line11/report_newton.json"),
        "--out",
        join(dir, "fig4.svg"),
        "--axes",
        "a,b",
      ]),
    ).toBe(2);
    err.mockRestore();
  });
});
