/**
 * Minimal SVG assembly. Figures are concatenated element strings with all
 * styling inline, so the output opens in any viewer with no stylesheet or
 * script dependencies. Numbers are written with a stable short format to
 * keep repeated renders byte-identical.
 */

export type Attrs = Record<string, string | number>;

export const fmt = (x: number): string => {
  if (!Number.isFinite(x)) throw new Error(`non-finite coordinate ${x}`);
  const short = x.toFixed(2);
  return short === "-0.00" ? "0.00" : short;
};

const escapeText = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

const escapeAttr = (s: string): string => escapeText(s).replace(/"/g, "&quot;");

export function el(tag: string, attrs: Attrs, body = ""): string {
  const parts = Object.entries(attrs).map(
    ([key, value]) => `${key}="${typeof value === "number" ? fmt(value) : escapeAttr(value)}"`,
  );
  const open = parts.length ? `<${tag} ${parts.join(" ")}` : `<${tag}`;
  return body === "" ? `${open}/>` : `${open}>${body}</${tag}>`;
}

export const text = (x: number, y: number, content: string, attrs: Attrs = {}): string =>
  el("text", { x, y, "font-family": "sans-serif", ...attrs }, escapeText(content));

export const line = (x1: number, y1: number, x2: number, y2: number, attrs: Attrs): string =>
  el("line", { x1, y1, x2, y2, ...attrs });

export const circle = (cx: number, cy: number, r: number, attrs: Attrs): string =>
  el("circle", { cx, cy, r, ...attrs });

export const polyline = (points: Array<{ u: number; v: number }>, attrs: Attrs): string =>
  el("polyline", {
    points: points.map((p) => `${fmt(p.u)},${fmt(p.v)}`).join(" "),
    fill: "none",
    ...attrs,
  });

export function document(width: number, height: number, body: string[]): string {
  const open = `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`;
  const background = el("rect", { x: 0, y: 0, width, height, fill: "white" });
  return [open, background, ...body, "</svg>", ""].join("\n");
}

/**
 * Map data coordinates onto a pixel box, preserving aspect ratio. Degenerate
 * spans (a single point, a flat line) fall back to a unit span so the figure
 * still renders instead of dividing by zero.
 */
export interface Viewport {
  toX(u: number): number;
  toY(v: number): number;
}

export function fitViewport(
  points: Array<{ u: number; v: number }>,
  box: { x: number; y: number; width: number; height: number },
): Viewport {
  let uMin = Infinity;
  let uMax = -Infinity;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const p of points) {
    uMin = Math.min(uMin, p.u);
    uMax = Math.max(uMax, p.u);
    vMin = Math.min(vMin, p.v);
    vMax = Math.max(vMax, p.v);
  }
  if (!Number.isFinite(uMin)) {
    uMin = 0;
    uMax = 1;
    vMin = 0;
    vMax = 1;
  }
  const uSpan = uMax - uMin || 1;
  const vSpan = vMax - vMin || 1;
  const scale = Math.min(box.width / uSpan, box.height / vSpan);
  const uMid = (uMin + uMax) / 2;
  const vMid = (vMin + vMax) / 2;
  const xMid = box.x + box.width / 2;
  const yMid = box.y + box.height / 2;
  return {
    toX: (u) => xMid + (u - uMid) * scale,
    // SVG y grows downward; data v grows upward.
    toY: (v) => yMid - (v - vMid) * scale,
  };
}
