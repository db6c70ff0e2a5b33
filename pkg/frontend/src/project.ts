/**
 * Coordinate projection for the manifold figure. Two selected axes map
 * straight onto the page; three go through a fixed orthographic camera so
 * repeated renders of the same artifact are pixel-identical.
 */

import { FormatError } from "./errors.js";

const AZIMUTH = (-50 * Math.PI) / 180;
const ELEVATION = (22 * Math.PI) / 180;

export interface Planar {
  u: number;
  v: number;
}

export function checkAxes(axes: number[], dimension: number): void {
  if (axes.length !== 2 && axes.length !== 3) {
    throw new FormatError(`need 2 or 3 projection axes, got ${axes.length}`);
  }
  for (const axis of axes) {
    if (!Number.isInteger(axis) || axis < 0 || axis >= dimension) {
      throw new FormatError(`axis ${axis} out of range for dimension ${dimension}`);
    }
  }
  if (new Set(axes).size !== axes.length) {
    throw new FormatError(`projection axes must be distinct, got ${axes.join(",")}`);
  }
}

/** Default view: the first two or three coordinates, whichever exist. */
export function defaultAxes(dimension: number): number[] {
  const count = Math.min(3, dimension);
  return Array.from({ length: count }, (_, i) => i);
}

export function projectPoints(points: number[][], axes: number[]): Planar[] {
  const cosA = Math.cos(AZIMUTH);
  const sinA = Math.sin(AZIMUTH);
  const cosE = Math.cos(ELEVATION);
  const sinE = Math.sin(ELEVATION);
  return points.map((p, index) => {
    const coords = axes.map((axis) => {
      const value = p[axis];
      if (value === undefined || !Number.isFinite(value)) {
        throw new FormatError(`point ${index} has no finite coordinate ${axis}`);
      }
      return value;
    });
    if (axes.length === 2) {
      return { u: coords[0]!, v: coords[1]! };
    }
    const [x, y, zc] = coords as [number, number, number];
    return {
      u: cosA * x + sinA * y,
      v: -sinA * sinE * x + cosA * sinE * y + cosE * zc,
    };
  });
}
