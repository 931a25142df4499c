#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { spinFigure } from "./figures.js";

const argv = yargs(hideBin(process.argv))
  .usage("plot-spin --sim CSV --exact CSV --out IMG")
  .option("sim", { type: "string", demandOption: true,
    describe: "simulation CSV (symbols with error bars)" })
  .option("exact", { type: "string", demandOption: true,
    describe: "exact-solution CSV (continuous lines)" })
  .option("out", { type: "string", demandOption: true,
    describe: "output SVG path" })
  .option("title", { type: "string" })
  .strict()
  .parseSync();

spinFigure({ sim: argv.sim, exact: argv.exact, out: argv.out,
  title: argv.title });
console.log(`wrote ${argv.out}`);
