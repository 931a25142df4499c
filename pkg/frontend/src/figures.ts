/** Figure assembly for the two shipped comparisons. */

import { writeFileSync } from "node:fs";

import { CurveBundle, loadCsv } from "./csv.js";
import { renderComparison, RenderOptions } from "./svg.js";

export interface JcFigureArgs {
  sim: string;
  exact: string;
  markov?: string;
  out: string;
  title?: string;
}

export interface SpinFigureArgs {
  sim: string;
  exact: string;
  out: string;
  title?: string;
}

export function jcFigure(args: JcFigureArgs): string {
  const bundles: CurveBundle[] = [
    loadCsv(args.sim, "simulation-symbols", "simulation"),
    loadCsv(args.exact, "exact-line", "exact"),
  ];
  if (args.markov) {
    bundles.push(loadCsv(args.markov, "approximation-dashed", "Born-Markov"));
  }
  const opts: RenderOptions = {
    title: args.title ?? "Two-state atom in a Lorentzian bosonic bath",
    xLabel: "t  [1/λ]",
    yLabel: "excited-state population p(t)",
  };
  const svg = renderComparison(bundles, opts);
  writeFileSync(args.out, svg, "utf8");
  return svg;
}

export function spinFigure(args: SpinFigureArgs): string {
  const bundles: CurveBundle[] = [
    loadCsv(args.sim, "simulation-symbols", "simulation"),
    loadCsv(args.exact, "exact-line", "exact"),
  ];
  const opts: RenderOptions = {
    title: args.title ?? "Central-spin coherence in a spin bath",
    xLabel: "t  [1/ω₀]",
    yLabel: "coherence",
  };
  const svg = renderComparison(bundles, opts);
  writeFileSync(args.out, svg, "utf8");
  return svg;
}
