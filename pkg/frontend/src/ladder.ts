/**
 * Ladder figure: displacement of the detected tangency against perturbation
 * magnitude on log-log axes, with the through-origin fit and per-rung
 * success rates. The slope is recomputed here from the raw trial rows with
 * the same estimator the experiment uses (successful newton rows, slope =
 * sum(m*d) / sum(m*m)), so the figure stands on its own rather than quoting
 * the summary file.
 */

import { scaleLog } from "d3-scale";
import { FormatError } from "./errors.js";
import type { TrialRow } from "./csv.js";
import { circle, document, el, line, text } from "./svg.js";

const WIDTH = 800;
const HEIGHT = 600;
const SCATTER = { x: 90, y: 60, width: 640, height: 330 };
const BARS = { x: 90, y: 450, width: 640, height: 110 };

export function fittedSlope(rows: TrialRow[]): number {
  let md = 0;
  let mm = 0;
  for (const row of rows) {
    if (row.detector !== "newton" || !row.success) continue;
    if (row.displacement === null) {
      throw new FormatError(`successful newton trial ${row.trial} at magnitude ${row.magnitude} has no displacement`);
    }
    md += row.magnitude * row.displacement;
    mm += row.magnitude * row.magnitude;
  }
  return mm === 0 ? 0 : md / mm;
}

function logTicks(scale: ReturnType<typeof scaleLog>): number[] {
  return scale.ticks().filter((t) => {
    const exponent = Math.log10(t);
    return Math.abs(exponent - Math.round(exponent)) < 1e-9;
  });
}

const tickLabel = (value: number): string => {
  const exponent = Math.round(Math.log10(value));
  return exponent === 0 ? "1" : `1e${exponent}`;
};

interface Box {
  x: number;
  y: number;
  width: number;
  height: number;
}

function frame(box: Box): string {
  return el("rect", {
    x: box.x,
    y: box.y,
    width: box.width,
    height: box.height,
    fill: "none",
    stroke: "#cccccc",
    "stroke-width": "1",
  });
}

export function renderLadder(rows: TrialRow[]): string {
  const slope = fittedSlope(rows);

  const positiveMags = rows.map((r) => r.magnitude).filter((m) => m > 0);
  const positiveDisps = rows
    .filter((r) => r.success && r.displacement !== null && r.displacement > 0)
    .map((r) => r.displacement as number);
  const positiveResiduals = rows
    .filter((r) => r.detector === "newton" && r.success && r.residual !== null && r.residual > 0)
    .map((r) => r.residual as number);

  const xDomain: [number, number] = positiveMags.length
    ? [Math.min(...positiveMags), Math.max(...positiveMags)]
    : [1e-6, 1];
  const yValues = [...positiveDisps, ...positiveResiduals];
  const yDomain: [number, number] = yValues.length
    ? [Math.min(...yValues), Math.max(...yValues)]
    : [1e-12, 1];

  const xScale = scaleLog()
    .domain(xDomain)
    .range([SCATTER.x, SCATTER.x + SCATTER.width])
    .nice();
  const yScale = scaleLog()
    .domain(yDomain)
    .range([SCATTER.y + SCATTER.height, SCATTER.y])
    .nice();

  const floorX = SCATTER.x;
  const floorY = SCATTER.y + SCATTER.height;
  const toX = (m: number): number => (m > 0 ? xScale(m) : floorX);
  const toY = (d: number | null): number => (d !== null && d > 0 ? yScale(d) : floorY);

  const body: string[] = [];

  for (const tick of logTicks(xScale)) {
    const x = xScale(tick);
    body.push(line(x, floorY, x, floorY + 6, { stroke: "#444444", "stroke-width": "1" }));
    body.push(text(x, floorY + 20, tickLabel(tick), { "font-size": "11", "text-anchor": "middle", fill: "#444444" }));
  }
  for (const tick of logTicks(yScale)) {
    const y = yScale(tick);
    body.push(line(SCATTER.x - 6, y, SCATTER.x, y, { stroke: "#444444", "stroke-width": "1" }));
    body.push(text(SCATTER.x - 10, y + 4, tickLabel(tick), { "font-size": "11", "text-anchor": "end", fill: "#444444" }));
  }

  if (slope > 0) {
    // The fit d = slope * m is a straight unit-slope line on log-log axes.
    // Clip it to the plotted rectangle in data space before drawing.
    const [mLo, mHi] = xScale.domain() as [number, number];
    const [dLo, dHi] = yScale.domain() as [number, number];
    const lo = Math.max(mLo, dLo / slope);
    const hi = Math.min(mHi, dHi / slope);
    if (lo < hi) {
      body.push(
        line(xScale(lo), yScale(slope * lo), xScale(hi), yScale(slope * hi), {
          stroke: "#555555",
          "stroke-width": "1",
          "stroke-dasharray": "6 3",
          class: "fit-line",
        }),
      );
    }
  }

  for (const row of rows) {
    if (!row.success) continue;
    const cx = toX(row.magnitude);
    const cy = toY(row.displacement);
    if (row.detector === "newton") {
      body.push(circle(cx, cy, 3, { class: "trial-newton", fill: "#4878a8", stroke: "none" }));
      body.push(circle(cx, toY(row.residual), 1.6, { class: "trial-residual", fill: "#999999", stroke: "none" }));
    } else {
      body.push(circle(cx, cy, 3, { class: "trial-sweep", fill: "none", stroke: "#b0413e", "stroke-width": "1.2" }));
    }
  }

  body.push(
    text(SCATTER.x + 12, SCATTER.y + 20, `slope = ${String(slope)}`, {
      id: "slope-annotation",
      "data-slope": String(slope),
      "font-size": "13",
      fill: "#222222",
    }),
  );

  const legendX = SCATTER.x + SCATTER.width - 120;
  body.push(circle(legendX, SCATTER.y + 16, 3, { fill: "#4878a8", stroke: "none" }));
  body.push(text(legendX + 10, SCATTER.y + 20, "newton", { "font-size": "11", fill: "#444444" }));
  body.push(circle(legendX, SCATTER.y + 32, 3, { fill: "none", stroke: "#b0413e", "stroke-width": "1.2" }));
  body.push(text(legendX + 10, SCATTER.y + 36, "sweep", { "font-size": "11", fill: "#444444" }));
  body.push(circle(legendX, SCATTER.y + 48, 1.6, { fill: "#999999", stroke: "none" }));
  body.push(text(legendX + 10, SCATTER.y + 52, "newton residual", { "font-size": "11", fill: "#444444" }));

  // Success-rate bars, one per rung, aligned with the scatter's magnitude axis.
  const magnitudes: number[] = [];
  for (const row of rows) {
    if (!magnitudes.includes(row.magnitude)) magnitudes.push(row.magnitude);
  }
  const barsBottom = BARS.y + BARS.height;
  for (const magnitude of magnitudes) {
    const newton = rows.filter((r) => r.detector === "newton" && r.magnitude === magnitude);
    if (newton.length === 0) continue;
    const rate = newton.filter((r) => r.success).length / newton.length;
    const cx = toX(magnitude);
    const barHeight = rate * BARS.height;
    body.push(
      el("rect", {
        x: cx - 12,
        y: barsBottom - barHeight,
        width: 24,
        height: barHeight,
        class: "success-bar",
        fill: "#88a8c8",
        stroke: "#4878a8",
        "stroke-width": "1",
      }),
    );
    body.push(
      text(cx, barsBottom - barHeight - 5, rate.toFixed(2), {
        "font-size": "10",
        "text-anchor": "middle",
        fill: "#444444",
      }),
    );
  }
  body.push(line(BARS.x, barsBottom, BARS.x + BARS.width, barsBottom, { stroke: "#444444", "stroke-width": "1" }));
  body.push(text(BARS.x - 10, BARS.y + 6, "1", { "font-size": "11", "text-anchor": "end", fill: "#444444" }));
  body.push(text(BARS.x - 10, barsBottom + 4, "0", { "font-size": "11", "text-anchor": "end", fill: "#444444" }));
  body.push(
    text(BARS.x, BARS.y - 10, "newton success rate per magnitude", { "font-size": "12", fill: "#555555" }),
  );

  body.push(
    text(WIDTH / 2, 30, "tangency displacement against perturbation magnitude", {
      "font-size": "16",
      "text-anchor": "middle",
      fill: "#222222",
    }),
  );
  body.push(text(WIDTH / 2, floorY + 38, "perturbation magnitude", { "font-size": "12", "text-anchor": "middle", fill: "#555555" }));
  body.push(
    text(24, SCATTER.y + SCATTER.height / 2, "displacement, residual", {
      "font-size": "12",
      "text-anchor": "middle",
      fill: "#555555",
      transform: `rotate(-90 24 ${SCATTER.y + SCATTER.height / 2})`,
    }),
  );

  body.push(frame(SCATTER));
  body.push(frame(BARS));
  return document(WIDTH, HEIGHT, body);
}
