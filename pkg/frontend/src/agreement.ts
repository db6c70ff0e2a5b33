/**
 * Agreement figure: for every trial where both detectors converged, the
 * newton displacement against the sweep displacement on matched log-log
 * axes. Points on the diagonal mean the two independent detectors located
 * the same tangency.
 */

import { scaleLog } from "d3-scale";
import { FormatError } from "./errors.js";
import type { TrialRow } from "./csv.js";
import { circle, document, el, line, text } from "./svg.js";

const WIDTH = 640;
const HEIGHT = 640;
const BOX = { x: 90, y: 70, width: 480, height: 480 };

interface Pair {
  newton: number | null;
  sweep: number | null;
  agreed: boolean;
}

export function pairTrials(rows: TrialRow[]): Pair[] {
  const byTrial = new Map<string, { newton?: TrialRow; sweep?: TrialRow }>();
  for (const row of rows) {
    const key = `${row.magnitude}|${row.trial}`;
    const cell = byTrial.get(key) ?? {};
    cell[row.detector] = row;
    byTrial.set(key, cell);
  }
  const pairs: Pair[] = [];
  for (const cell of byTrial.values()) {
    if (!cell.newton?.success || !cell.sweep?.success) continue;
    pairs.push({
      newton: cell.newton.displacement,
      sweep: cell.sweep.displacement,
      agreed: cell.newton.detectorAgreement === true,
    });
  }
  if (pairs.length === 0) {
    throw new FormatError("no trials with both detectors successful; nothing to compare");
  }
  return pairs;
}

const tickLabel = (value: number): string => {
  const exponent = Math.round(Math.log10(value));
  return exponent === 0 ? "1" : `1e${exponent}`;
};

export function renderAgreement(rows: TrialRow[]): string {
  const pairs = pairTrials(rows);
  const agreed = pairs.filter((p) => p.agreed).length;

  const positives = pairs
    .flatMap((p) => [p.newton, p.sweep])
    .filter((v): v is number => v !== null && v > 0);
  const domain: [number, number] = positives.length
    ? [Math.min(...positives), Math.max(...positives)]
    : [1e-12, 1];

  const xScale = scaleLog().domain(domain).range([BOX.x, BOX.x + BOX.width]).nice();
  const yScale = scaleLog().domain(domain).range([BOX.y + BOX.height, BOX.y]).nice();

  const floorX = BOX.x;
  const floorY = BOX.y + BOX.height;
  const toX = (v: number | null): number => (v !== null && v > 0 ? xScale(v) : floorX);
  const toY = (v: number | null): number => (v !== null && v > 0 ? yScale(v) : floorY);

  const body: string[] = [];

  const ticks = xScale.ticks().filter((t) => {
    const exponent = Math.log10(t);
    return Math.abs(exponent - Math.round(exponent)) < 1e-9;
  });
  for (const tick of ticks) {
    const x = xScale(tick);
    const y = yScale(tick);
    body.push(line(x, floorY, x, floorY + 6, { stroke: "#444444", "stroke-width": "1" }));
    body.push(text(x, floorY + 20, tickLabel(tick), { "font-size": "11", "text-anchor": "middle", fill: "#444444" }));
    body.push(line(BOX.x - 6, y, BOX.x, y, { stroke: "#444444", "stroke-width": "1" }));
    body.push(text(BOX.x - 10, y + 4, tickLabel(tick), { "font-size": "11", "text-anchor": "end", fill: "#444444" }));
  }

  const [lo, hi] = xScale.domain() as [number, number];
  body.push(
    line(xScale(lo), yScale(lo), xScale(hi), yScale(hi), {
      stroke: "#888888",
      "stroke-width": "1",
      "stroke-dasharray": "5 4",
      class: "diagonal",
    }),
  );

  for (const pair of pairs) {
    body.push(
      circle(toX(pair.newton), toY(pair.sweep), 3.5, {
        class: pair.agreed ? "pair-agree" : "pair-disagree",
        fill: pair.agreed ? "#2a7f3f" : "#c03a2b",
        "fill-opacity": "0.7",
        stroke: "none",
      }),
    );
  }

  body.push(
    text(BOX.x + 12, BOX.y + 22, `agreement ${agreed}/${pairs.length}`, {
      id: "agreement-annotation",
      "data-agreed": String(agreed),
      "data-pairs": String(pairs.length),
      "font-size": "13",
      fill: "#222222",
    }),
  );

  body.push(
    text(WIDTH / 2, 34, "detector agreement on displacement", {
      "font-size": "16",
      "text-anchor": "middle",
      fill: "#222222",
    }),
  );
  body.push(
    text(WIDTH / 2, floorY + 40, "newton displacement", { "font-size": "12", "text-anchor": "middle", fill: "#555555" }),
  );
  body.push(
    text(28, BOX.y + BOX.height / 2, "sweep displacement", {
      "font-size": "12",
      "text-anchor": "middle",
      fill: "#555555",
      transform: `rotate(-90 28 ${BOX.y + BOX.height / 2})`,
    }),
  );

  body.push(
    el("rect", {
      x: BOX.x,
      y: BOX.y,
      width: BOX.width,
      height: BOX.height,
      fill: "none",
      stroke: "#cccccc",
      "stroke-width": "1",
    }),
  );
  return document(WIDTH, HEIGHT, body);
}
