#!/usr/bin/env python3
"""Duality residual against random test processes under (N, M) refinement."""
import argparse

import numpy as np
from _common import write_csv

from bsdelab.duality import random_test_process, transposition_residual
from bsdelab.generators import builtin, terminal_affine_w, terminal_of_w
from bsdelab.gexpectation import SolverConfig, independent_seed
from bsdelab.solver import solve_lsmc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--driver", default="kappa_abs_z")
    ap.add_argument("--terminal", default="w", choices=["w", "cos"])
    ap.add_argument("--levels", nargs="+", default=["64:16384", "128:65536"], help="N:M pairs")
    ap.add_argument("--tests", type=int, default=20)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--riemann", default="predictable", choices=["predictable", "left"])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    g = builtin(args.driver)
    xi = terminal_affine_w() if args.terminal == "w" else terminal_of_w(np.cos, "cos(W_T)")
    rows = []
    for level in args.levels:
        N, M = (int(v) for v in level.split(":"))
        for r in range(args.reps):
            cfg = SolverConfig(N=N, M=M, seed=independent_seed(args.seed, 20 + r))
            ctx = cfg.context()
            sol = solve_lsmc(g, xi, ctx)
            tests = [random_test_process(ctx, k, seed=0) for k in range(args.tests)]
            reps = transposition_residual(sol, g, xi, tests, riemann=args.riemann)
            rows.append((N, M, r, float(np.mean([x.residual for x in reps])), float(np.mean([x.se for x in reps])),
                         float(max(x.residual / x.tolerance for x in reps)), all(x.passed for x in reps)))
    write_csv(args.out, ["N", "M", "rep", "mean_residual", "mean_se", "worst_ratio", "all_passed"], rows)


if __name__ == "__main__":
    main()
