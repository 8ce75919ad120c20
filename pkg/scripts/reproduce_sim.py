"""Run the built-in two-atom benchmark and write its per-stage CSV.

Equivalent to ``cmlab reproduce-sim``; kept as a plain script so the
experiment stays hackable without going through the installed entry point.
"""

import argparse
import sys

from cmlab.cli import DEFAULT_SIM_N, DEFAULT_SIM_SEED, cmd_reproduce_sim


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=DEFAULT_SIM_N,
                    help="samples per schedule")
    ap.add_argument("--seed", type=int, default=DEFAULT_SIM_SEED)
    ap.add_argument("--out", default="reproduce_sim.csv")
    args = ap.parse_args()
    return cmd_reproduce_sim(n=args.n, seed=args.seed, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
