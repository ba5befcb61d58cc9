"""Relative SSE gap between the ECF upper and lower bounds as a function of the CSI split."""
import argparse

import numpy as np

from cellfree_fronthaul import allocation as A
from cellfree_fronthaul.config import desk_scale, paper_scale
from cellfree_fronthaul.netmodel import make_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", choices=("desk", "paper"), default="paper")
    ap.add_argument("--xi", type=float, default=0.9)
    ap.add_argument("--capacity", type=float, default=1.0)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    cfg = (paper_scale if args.scale == "paper" else desk_scale)(xi_t=args.xi, xi_r=args.xi)
    fracs = np.linspace(0.1, 0.9, 9)
    print("seed  searched-split  gap@searched  " + "  ".join(f"f={f:.1f}" for f in fracs))
    for seed in range(args.seeds):
        beta = make_scenario(cfg, seed)[1].beta

        def gap(plan):
            ub = A.sse_of("ECF-UB", beta, plan, 1.0, cfg)
            return (ub - A.sse_of("ECF-LB", beta, plan, 1.0, cfg)) / ub

        best = A.split_search(args.capacity, "ECF-UB", beta, cfg).plan
        row = [gap(A.build_plan("ECF", beta, args.capacity, cfg, f)) for f in fracs]
        print(f"{seed:<6d}{best.fraction:<16.3f}{100 * gap(best):<14.2f}"
              + "  ".join(f"{100 * g:5.2f}" for g in row))


if __name__ == "__main__":
    main()
