#!/usr/bin/env python3
"""Difference-quotient errors along an eps ladder for one driver and probe.

    python3 scripts/representation_ladder.py --driver kappa_abs_z --z 1 --out ladder.csv
"""
import argparse

from _common import write_csv

from bsdelab.generators import builtin
from bsdelab.gexpectation import SolverConfig
from bsdelab.representation import RepresentationProbe, difference_quotient_brownian


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--driver", default="kappa_abs_z", help="catalog spec, e.g. 'linear(0,1,0)'")
    ap.add_argument("--t", type=float, default=0.0)
    ap.add_argument("--y", type=float, default=0.0)
    ap.add_argument("--z", type=float, default=1.0)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    ap.add_argument("--N", type=int, default=40)
    ap.add_argument("--M", type=int, default=2**14)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sub-solver", default="lsmc", choices=["auto", "lsmc", "closed-form", "tree"])
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    cfg = SolverConfig(N=args.N, M=args.M, seed=args.seed)
    probe = RepresentationProbe(args.t, args.y, args.z, epsilons=tuple(args.eps))
    rep = difference_quotient_brownian(builtin(args.driver), probe, cfg, sub_solver=args.sub_solver)
    rows = [(e, d, err, se, avg, rep.target) for e, d, err, se, avg in
            zip(rep.epsilons, rep.estimates, rep.errors, rep.ses, rep.averaged)]
    write_csv(args.out, ["eps", "D_eps", "l2_error", "se", "averaged_driver", "target"], rows)
    v = rep.verdict()
    print(f"final error {v['final_error']:.3g}, inversions {v['inversions']}, passed {v['passed']}")


if __name__ == "__main__":
    main()
