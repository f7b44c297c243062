#!/usr/bin/env python3
"""Out-of-sample time-consistency residual over a refinement ladder, replicated over seeds."""
import argparse

import numpy as np
from _common import write_csv

from bsdelab.generators import builtin, terminal_of_w
from bsdelab.gexpectation import SolverConfig, independent_seed, time_consistency

TERMINALS = {"w2": (lambda x: x * x, "W_T^2"), "cos": (np.cos, "cos(W_T)")}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--driver", default="kappa_abs_z")
    ap.add_argument("--terminal", default="w2", choices=sorted(TERMINALS))
    ap.add_argument("--levels", nargs="+", default=["16:4096", "32:16384", "64:65536"], help="N:M pairs")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--t1", type=float, default=0.25)
    ap.add_argument("--t2", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    g = builtin(args.driver)
    xi = terminal_of_w(*TERMINALS[args.terminal])
    rows = []
    for level in args.levels:
        N, M = (int(v) for v in level.split(":"))
        res = [time_consistency(g, xi, SolverConfig(N=N, M=M, seed=independent_seed(args.seed, 10 + r)),
                                args.t1, args.t2)["residual"] for r in range(args.reps)]
        rows.append((N, M, float(np.mean(res)), float(np.std(res)), *res))
    write_csv(args.out, ["N", "M", "mean_residual", "sd_residual"] + [f"rep{r}" for r in range(args.reps)], rows)


if __name__ == "__main__":
    main()
