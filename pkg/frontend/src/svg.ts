/**
 * Deterministic SVG renderer: simulation series as diamond symbols with
 * error bars, exact solutions as continuous lines, approximations dashed,
 * plus axes and a legend.  Pure function of its inputs.
 */

import { ticks as d3ticks } from "d3-array";
import { scaleLinear } from "d3-scale";
import { line as d3line } from "d3-shape";

import { CurveBundle, Series } from "./csv.js";

export interface RenderOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width?: number;
  height?: number;
  yMin?: number;
  yMax?: number;
  maxSymbols?: number;
}

const PALETTE = ["#1f4e9c", "#c23b22", "#2e7d32", "#7b1fa2", "#b8860b",
  "#00695c"];

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : String(Number(v.toPrecision(6)));
}

/** Vertical range the plot should focus on: the deterministic reference
 * curves if any are present (Monte Carlo tails can be orders of magnitude
 * off-scale late in a run), otherwise every series. */
function yDomain(bundles: CurveBundle[], opts: RenderOptions): [number, number] {
  if (opts.yMin !== undefined && opts.yMax !== undefined) {
    return [opts.yMin, opts.yMax];
  }
  const lineSeries: Series[] = [];
  const all: Series[] = [];
  for (const b of bundles) {
    for (const s of b.series) {
      all.push(s);
      if (s.role !== "simulation-symbols") lineSeries.push(s);
    }
  }
  const basis = lineSeries.length > 0 ? lineSeries : all;
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of basis) {
    for (const v of s.values) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.08 * (hi - lo);
  return [opts.yMin ?? lo - pad, opts.yMax ?? hi + pad];
}

function diamond(x: number, y: number, r: number): string {
  return `M ${fmt(x)} ${fmt(y - r)} L ${fmt(x + r)} ${fmt(y)} ` +
    `L ${fmt(x)} ${fmt(y + r)} L ${fmt(x - r)} ${fmt(y)} Z`;
}

/** Indices of at most maxCount evenly strided points (always includes the
 * first point; deterministic). */
export function thinIndices(n: number, maxCount: number): number[] {
  const stride = Math.max(1, Math.ceil(n / maxCount));
  const out: number[] = [];
  for (let i = 0; i < n; i += stride) out.push(i);
  return out;
}

export function renderComparison(bundles: CurveBundle[],
                                 opts: RenderOptions): string {
  if (bundles.length === 0 || bundles.every((b) => b.series.length === 0)) {
    throw new Error("nothing to render: no series in any bundle");
  }
  const grid = bundles[0].grid;
  for (const b of bundles) {
    if (b.grid.length !== grid.length
        || b.grid.some((t, i) => t !== grid[i])) {
      throw new Error("bundles disagree on the time grid");
    }
    for (const s of b.series) {
      if (s.values.length !== grid.length) {
        throw new Error(`series '${s.name}' does not span the grid`);
      }
    }
  }

  const width = opts.width ?? 840;
  const height = opts.height ?? 525;
  const margin = { left: 72, right: 24, top: 48, bottom: 56 };
  const innerW = width - margin.left - margin.right;
  const innerH = height - margin.top - margin.bottom;
  const [y0, y1] = yDomain(bundles, opts);
  const x = scaleLinear([grid[0], grid[grid.length - 1]], [0, innerW]);
  const y = scaleLinear([y0, y1], [innerH, 0]);
  const maxSymbols = opts.maxSymbols ?? 40;

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}" ` +
    `font-family="Helvetica, Arial, sans-serif">`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(`<defs><clipPath id="plot-area">` +
    `<rect x="0" y="0" width="${fmt(innerW)}" height="${fmt(innerH)}"/>` +
    `</clipPath></defs>`);
  parts.push(`<text class="title" x="${fmt(width / 2)}" y="28" ` +
    `text-anchor="middle" font-size="17">${opts.title}</text>`);
  parts.push(`<g transform="translate(${margin.left},${margin.top})">`);

  // axes
  parts.push(`<g class="axes" stroke="black" stroke-width="1">`);
  parts.push(`<line x1="0" y1="${fmt(innerH)}" x2="${fmt(innerW)}" ` +
    `y2="${fmt(innerH)}"/>`);
  parts.push(`<line x1="0" y1="0" x2="0" y2="${fmt(innerH)}"/>`);
  for (const t of d3ticks(grid[0], grid[grid.length - 1], 8)) {
    const px = x(t);
    parts.push(`<line x1="${fmt(px)}" y1="${fmt(innerH)}" x2="${fmt(px)}" ` +
      `y2="${fmt(innerH + 5)}"/>`);
    parts.push(`<text x="${fmt(px)}" y="${fmt(innerH + 20)}" ` +
      `text-anchor="middle" font-size="12" stroke="none">${fmt(t)}</text>`);
  }
  for (const t of d3ticks(y0, y1, 7)) {
    const py = y(t);
    parts.push(`<line x1="-5" y1="${fmt(py)}" x2="0" y2="${fmt(py)}"/>`);
    parts.push(`<text x="-9" y="${fmt(py + 4)}" text-anchor="end" ` +
      `font-size="12" stroke="none">${fmt(t)}</text>`);
  }
  parts.push(`</g>`);
  parts.push(`<text class="x-label" x="${fmt(innerW / 2)}" ` +
    `y="${fmt(innerH + 42)}" text-anchor="middle" font-size="14">` +
    `${opts.xLabel}</text>`);
  parts.push(`<text class="y-label" transform="rotate(-90)" ` +
    `x="${fmt(-innerH / 2)}" y="-50" text-anchor="middle" font-size="14">` +
    `${opts.yLabel}</text>`);

  // series
  const legend: { name: string; color: string; role: string }[] = [];
  let colorIdx = 0;
  for (const b of bundles) {
    for (const s of b.series) {
      const color = PALETTE[colorIdx % PALETTE.length];
      colorIdx += 1;
      legend.push({ name: s.name, color, role: s.role });
      parts.push(`<g class="series" data-name="${s.name}" ` +
        `data-role="${s.role}" clip-path="url(#plot-area)">`);
      if (s.role === "simulation-symbols") {
        const idx = thinIndices(grid.length, maxSymbols);
        if (s.se) {
          parts.push(`<g class="errorbars" stroke="${color}" ` +
            `stroke-width="1">`);
          for (const i of idx) {
            if (!s.se[i]) continue;
            const px = x(grid[i]);
            const lo = y(s.values[i] - s.se[i]);
            const hi = y(s.values[i] + s.se[i]);
            parts.push(`<line class="errorbar" x1="${fmt(px)}" ` +
              `y1="${fmt(lo)}" x2="${fmt(px)}" y2="${fmt(hi)}"/>`);
            parts.push(`<line x1="${fmt(px - 3)}" y1="${fmt(lo)}" ` +
              `x2="${fmt(px + 3)}" y2="${fmt(lo)}"/>`);
            parts.push(`<line x1="${fmt(px - 3)}" y1="${fmt(hi)}" ` +
              `x2="${fmt(px + 3)}" y2="${fmt(hi)}"/>`);
          }
          parts.push(`</g>`);
        }
        parts.push(`<g class="symbols" fill="${color}">`);
        for (const i of idx) {
          parts.push(`<path class="symbol" ` +
            `d="${diamond(x(grid[i]), y(s.values[i]), 4)}"/>`);
        }
        parts.push(`</g>`);
      } else {
        const gen = d3line<number>()
          .x((_, i) => x(grid[i]))
          .y((v) => y(v));
        const dash = s.role === "approximation-dashed"
          ? ` stroke-dasharray="7 4"` : "";
        parts.push(`<path class="curve" d="${gen(s.values)}" fill="none" ` +
          `stroke="${color}" stroke-width="1.8"${dash}/>`);
      }
      parts.push(`</g>`);
    }
  }

  // legend
  parts.push(`<g class="legend" font-size="12">`);
  legend.forEach((entry, k) => {
    const ly = 8 + 18 * k;
    parts.push(`<g class="legend-entry" ` +
      `transform="translate(${fmt(innerW - 190)},${fmt(ly)})">`);
    if (entry.role === "simulation-symbols") {
      parts.push(`<path d="${diamond(10, 0, 4)}" fill="${entry.color}"/>`);
    } else {
      const dash = entry.role === "approximation-dashed"
        ? ` stroke-dasharray="7 4"` : "";
      parts.push(`<line x1="0" y1="0" x2="20" y2="0" ` +
        `stroke="${entry.color}" stroke-width="1.8"${dash}/>`);
    }
    parts.push(`<text x="26" y="4">${entry.name}</text>`);
    parts.push(`</g>`);
  });
  parts.push(`</g>`);

  parts.push(`</g>`);
  parts.push(`</svg>`);
  return parts.join("\n");
}
