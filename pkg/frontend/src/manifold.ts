/**
 * Manifold figure: the sampled fold patch, the tangent leaf through the
 * detected point, and the point itself, projected onto two or three chosen
 * coordinates. The renderer only projects and draws; every number it shows
 * comes straight from the artifacts.
 */

import { scaleLinear } from "d3-scale";
import { FormatError } from "./errors.js";
import type { Report, Scenario } from "./schema.js";
import { checkAxes, defaultAxes, projectPoints, type Planar } from "./project.js";
import { circle, document, el, fitViewport, line, polyline, text, type Viewport } from "./svg.js";

const WIDTH = 800;
const HEIGHT = 600;
const BOX = { x: 80, y: 70, width: 650, height: 460 };

const PATCH_STYLE = { stroke: "#4878a8", "stroke-width": "1" };
const LEAF_STYLE = { stroke: "#b0413e", "stroke-width": "1.2" };

function checkGrid(points: number[][], shape: number[], what: string, d: number): void {
  const expected = shape.reduce((acc, n) => acc * n, 1);
  if (shape.length === 0 || shape.some((n) => n < 1)) {
    throw new FormatError(`${what}_shape ${JSON.stringify(shape)} is not a valid grid shape`);
  }
  if (points.length !== expected) {
    throw new FormatError(`${what} has ${points.length} points but ${what}_shape implies ${expected}`);
  }
  for (const p of points) {
    if (p.length !== d) {
      throw new FormatError(`${what} point has ${p.length} coordinates, scenario dimension is ${d}`);
    }
  }
}

/**
 * Turn a row-major grid of projected points into drawable paths. One axis
 * gives a single polyline, two give the row and column wires of the grid,
 * and anything higher is drawn as a point cloud (empty path list).
 */
function wirePaths(points: Planar[], shape: number[]): Planar[][] {
  if (shape.length === 1) return [points];
  if (shape.length === 2) {
    const [rows, cols] = shape as [number, number];
    const paths: Planar[][] = [];
    for (let r = 0; r < rows; r += 1) paths.push(points.slice(r * cols, (r + 1) * cols));
    for (let c = 0; c < cols; c += 1) {
      const column: Planar[] = [];
      for (let r = 0; r < rows; r += 1) column.push(points[r * cols + c]!);
      paths.push(column);
    }
    return paths;
  }
  return [];
}

function drawLayer(
  projected: Planar[],
  shape: number[],
  view: Viewport,
  className: string,
  style: Record<string, string>,
): string[] {
  const pixel = projected.map((p) => ({ u: view.toX(p.u), v: view.toY(p.v) }));
  const paths = wirePaths(pixel, shape);
  if (paths.length === 0) {
    return pixel.map((p) =>
      circle(p.u, p.v, 1.4, { class: `${className}-point`, fill: style.stroke!, stroke: "none" }),
    );
  }
  return paths.map((path) => polyline(path, { class: `${className}-line`, ...style }));
}

function linearTicks(view: Viewport, projected: Planar[]): string[] {
  const us = projected.map((p) => p.u);
  const vs = projected.map((p) => p.v);
  const uScale = scaleLinear()
    .domain([Math.min(...us), Math.max(...us)])
    .nice();
  const vScale = scaleLinear()
    .domain([Math.min(...vs), Math.max(...vs)])
    .nice();
  const parts: string[] = [];
  const bottom = BOX.y + BOX.height;
  const format = (value: number): string => String(Number(value.toPrecision(6)));
  for (const tick of uScale.ticks(6)) {
    const x = view.toX(tick);
    if (x < BOX.x - 1 || x > BOX.x + BOX.width + 1) continue;
    parts.push(line(x, bottom, x, bottom + 6, { stroke: "#444444", "stroke-width": "1" }));
    parts.push(text(x, bottom + 20, format(tick), { "font-size": "11", "text-anchor": "middle", fill: "#444444" }));
  }
  for (const tick of vScale.ticks(6)) {
    const y = view.toY(tick);
    if (y < BOX.y - 1 || y > bottom + 1) continue;
    parts.push(line(BOX.x - 6, y, BOX.x, y, { stroke: "#444444", "stroke-width": "1" }));
    parts.push(text(BOX.x - 10, y + 4, format(tick), { "font-size": "11", "text-anchor": "end", fill: "#444444" }));
  }
  parts.push(line(BOX.x, bottom, BOX.x + BOX.width, bottom, { stroke: "#444444", "stroke-width": "1" }));
  parts.push(line(BOX.x, BOX.y, BOX.x, bottom, { stroke: "#444444", "stroke-width": "1" }));
  return parts;
}

function axisTriad(axes: number[]): string[] {
  const basis = axes.map((_, i) => {
    const e = new Array<number>(axes.length).fill(0);
    e[i] = 1;
    return e;
  });
  const local = axes.map((_, i) => i);
  const projected = projectPoints(basis, local);
  const ox = BOX.x + 34;
  const oy = BOX.y + BOX.height - 34;
  const parts: string[] = [];
  projected.forEach((dir, i) => {
    const x = ox + 30 * dir.u;
    const y = oy - 30 * dir.v;
    parts.push(line(ox, oy, x, y, { stroke: "#444444", "stroke-width": "1.2" }));
    parts.push(
      text(ox + 40 * dir.u, oy - 40 * dir.v + 4, `x${axes[i]}`, {
        "font-size": "11",
        "text-anchor": "middle",
        fill: "#444444",
      }),
    );
  });
  return parts;
}

export function renderManifold(scenario: Scenario, report: Report, axesOption: number[] | null): string {
  const d = scenario.d;
  if (report.point.length !== d) {
    throw new FormatError(`report point has ${report.point.length} coordinates, scenario dimension is ${d}`);
  }
  const axes = axesOption ?? defaultAxes(d);
  checkAxes(axes, d);

  const geometry = report.geometry;
  checkGrid(geometry.patch, geometry.patch_shape, "patch", d);
  checkGrid(geometry.leaf, geometry.leaf_shape, "leaf", d);

  const patch = projectPoints(geometry.patch, axes);
  const leaf = projectPoints(geometry.leaf, axes);
  const marker = projectPoints([report.point], axes)[0]!;
  const view = fitViewport([...patch, ...leaf, marker], BOX);

  const body: string[] = [];
  body.push(...drawLayer(patch, geometry.patch_shape, view, "patch", PATCH_STYLE));
  body.push(...drawLayer(leaf, geometry.leaf_shape, view, "leaf", LEAF_STYLE));
  body.push(
    circle(view.toX(marker.u), view.toY(marker.v), 5, {
      id: "tangency-point",
      fill: "#e69f00",
      stroke: "#222222",
      "stroke-width": "1.5",
    }),
  );

  if (axes.length === 2) {
    body.push(...linearTicks(view, [...patch, ...leaf, marker]));
  } else {
    body.push(...axisTriad(axes));
  }

  const klass = report.class;
  body.push(
    text(WIDTH / 2, 32, `fold patch and tangent leaf (${scenario.fold.kind}, ${report.detector} detector)`, {
      "font-size": "16",
      "text-anchor": "middle",
      fill: "#222222",
    }),
  );
  body.push(
    text(WIDTH / 2, 52, `axes ${axes.join(", ")}   class (cT, dT, kT) = (${klass.cT}, ${klass.dT}, ${klass.kT})`, {
      "font-size": "12",
      "text-anchor": "middle",
      fill: "#555555",
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
