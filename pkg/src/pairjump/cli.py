"""Command line interface: simulate | reference | compare | pjm-table."""

from __future__ import annotations

import argparse
import sys

from . import runner


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--trajectories", type=int, help="override n_trajectories")
    p.add_argument("--workers", type=int, help="override worker count")
    p.add_argument("--output", help="override the output CSV path")
    p.add_argument("--stepper", choices=["euler", "thinning"],
                   help="override the stepper")


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    pairs = {"seed": args.seed, "n_trajectories": args.trajectories,
             "workers": args.workers, "output": args.output,
             "stepper": getattr(args, "stepper", None)}
    return {k: str(v) for k, v in pairs.items() if v is not None}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pairjump",
        description="Monte Carlo simulation of exact open-system dynamics "
                    "via a pair-state jump process")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a trajectory ensemble")
    _add_config_options(p_sim)

    p_ref = sub.add_parser("reference", help="emit a deterministic curve")
    _add_config_options(p_ref)
    p_ref.add_argument("--reference", required=True,
                       choices=list(runner.REFERENCE_KINDS))
    p_ref.add_argument("--epsilon-cut", type=float,
                       help="block-sum truncation for spin_block")

    p_cmp = sub.add_parser("compare", help="z-score a simulation against a "
                                           "reference CSV")
    p_cmp.add_argument("sim_csv")
    p_cmp.add_argument("ref_csv")
    p_cmp.add_argument("--z-limit", type=float, default=4.0)
    p_cmp.add_argument("--min-frac", type=float, default=0.95)
    p_cmp.add_argument("--max-z", type=float, default=None)

    p_pjm = sub.add_parser("pjm-table", help="tabulate the unpolarized "
                                             "bath weights P(j, m)")
    p_pjm.add_argument("--n-spins", type=int, required=True)
    p_pjm.add_argument("--output", help="CSV path (defaults to stdout)")

    args = parser.parse_args(argv)

    if args.command == "simulate":
        cfg = runner.load_config(args.config, _overrides(args))
        if not cfg.output:
            parser.error("no output path (config 'output' or --output)")
        result = runner.run_simulate(cfg)
        print(f"wrote {result.output_path}: n={result.estimate.n}, "
              f"aborted={result.estimate.aborted}, "
              f"rate bound {result.rate_bound:.6g}")
        return 0

    if args.command == "reference":
        over = _overrides(args)
        if args.epsilon_cut is not None:
            over["epsilon_cut"] = str(args.epsilon_cut)
        cfg = runner.load_config(args.config, over)
        if not cfg.output:
            parser.error("no output path (config 'output' or --output)")
        result = runner.run_reference(cfg, args.reference)
        msg = f"wrote {result.output_path}: {args.reference}"
        if result.discarded_weight is not None:
            msg += f", discarded weight {result.discarded_weight:.3e}"
        print(msg)
        return 0

    if args.command == "compare":
        report = runner.run_compare(args.sim_csv, args.ref_csv)
        frac = report.frac_within(args.z_limit)
        n_vals = report.z_re.size + report.z_im.size
        print(f"compared {n_vals} values ({len(report.grid)} grid points x "
              f"{len(report.entry_labels)} entries x re/im)")
        print(f"max |z| = {report.max_abs_z:.4g}")
        print(f"fraction with |z| <= {args.z_limit:g}: {frac:.4f}")
        ok = report.passes(args.z_limit, args.min_frac, args.max_z)
        print("PASS" if ok else "FAIL")
        return 0 if ok else 1

    if args.command == "pjm-table":
        rows = runner.run_pjm_table(args.n_spins, args.output)
        if args.output:
            print(f"wrote {args.output}: {len(rows)} ladders")
        else:
            print("j,p_per_pair,ladder_weight,cumulative")
            for j, p, w, c in rows:
                print(f"{j:g},{p:.15e},{w:.15e},{c:.15e}")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
