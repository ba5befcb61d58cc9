"""Closed-form CSI-capacity threshold against the exact crossover of the high-SNR limits."""
import argparse

import numpy as np

from cellfree_fronthaul import allocation as A
from cellfree_fronthaul.config import desk_scale
from cellfree_fronthaul.netmodel import make_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--geometries", type=int, default=10)
    ap.add_argument("--margin", type=float, default=1.2)
    args = ap.parse_args()
    print("xi_t  xi_r  applicable  crossover=0  median C_th  median a/c over R")
    for xt in (1.0, 0.9, 0.8, 0.7):
        for xr in (1.0, 0.9, 0.8, 0.7):
            cfg = desk_scale(xi_t=xt, xi_r=xr)
            cth, cross, lead = [], [], []
            for seed in range(args.geometries):
                beta = make_scenario(cfg, seed)[1].beta
                for row in beta:
                    rep = A.prop1_threshold(row, cfg, margin=args.margin)
                    ok = rep.applicable
                    cth += list(rep.C_th[ok])
                    cross += list(rep.crossover[ok])
                    # a/c = sum gamma_inf / (K gamma_inf_k); R = sum beta / theta1
                    lead += list(rep.ratio_margin[ok] / (row.sum() / rep.theta1[ok]))
            n = len(cth)
            if n == 0:
                print(f"{xt:<6g}{xr:<6g}{0:<12d}")
                continue
            print(f"{xt:<6g}{xr:<6g}{n:<12d}{int(np.sum(np.array(cross) == 0)):<13d}"
                  f"{np.median(cth):<13.4g}{np.median(lead):.4g}")


if __name__ == "__main__":
    main()
