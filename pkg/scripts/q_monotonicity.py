"""How often one UE's MRC SINR goes up when a single AP's pilot or CSI quantization gets worse."""
import argparse

import numpy as np

from cellfree_fronthaul import rates as R
from cellfree_fronthaul.config import desk_scale
from cellfree_fronthaul.estimation import apply_csi_quantization, cfe_stats, ecf_stats
from cellfree_fronthaul.netmodel import make_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=400)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    up = {"pilot": [], "csi": []}
    for _ in range(args.cases):
        xt, xr = rng.uniform(0.5, 1.0, 2)
        cfg = desk_scale(M=10, K=3, xi_t=xt, xi_r=xr)
        beta = make_scenario(cfg, int(rng.integers(1 << 30)))[1].beta
        m, f = int(rng.integers(cfg.M)), rng.uniform(1.1, 100)
        Qd = np.full(cfg.M, 1e-13)
        Qp2 = Qd.copy()
        Qp2[m] *= f
        a = R.cfe_terms(beta, cfe_stats(beta, Qd, cfg), Qd, 1.0, cfg).sinr
        b = R.cfe_terms(beta, cfe_stats(beta, Qp2, cfg), Qd, 1.0, cfg).sinr
        up["pilot"].append(np.max(b / a - 1))
        s = ecf_stats(beta, cfg)
        q = 0.1 * s.gamma
        q2 = q.copy()
        q2[m] = np.minimum(q2[m] * f, s.gamma[m])
        a = R.ecf_ub_terms(beta, apply_csi_quantization(s, q), Qd, 1.0, cfg).sinr
        b = R.ecf_ub_terms(beta, apply_csi_quantization(s, q2), Qd, 1.0, cfg).sinr
        up["csi"].append(np.max(b / a - 1))
    for k, v in up.items():
        v = np.array(v)
        print(f"{k:6s} cases with a SINR increase: {np.sum(v > 1e-12)}/{len(v)}, largest +{100 * v.max():.1f}%")


if __name__ == "__main__":
    main()
