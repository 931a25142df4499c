#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { jcFigure } from "./figures.js";

const argv = yargs(hideBin(process.argv))
  .usage("plot-jc --sim CSV --exact CSV [--markov CSV] --out IMG")
  .option("sim", { type: "string", demandOption: true,
    describe: "simulation CSV (symbols with error bars)" })
  .option("exact", { type: "string", demandOption: true,
    describe: "exact-solution CSV (continuous line)" })
  .option("markov", { type: "string",
    describe: "memoryless-approximation CSV (dashed line)" })
  .option("out", { type: "string", demandOption: true,
    describe: "output SVG path" })
  .option("title", { type: "string" })
  .strict()
  .parseSync();

jcFigure({ sim: argv.sim, exact: argv.exact, markov: argv.markov,
  out: argv.out, title: argv.title });
console.log(`wrote ${argv.out}`);
