"""5%-outage SSE and per-UE SE: split search plus power control against the equal-split baseline."""
import argparse

from cellfree_fronthaul import cli
from cellfree_fronthaul.config import desk_scale


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--realizations", type=int, default=100)
    ap.add_argument("--capacity", type=float, default=0.5)
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--xi", type=float, default=1.0)
    args = ap.parse_args()
    spec = cli.ExperimentSpec(config=desk_scale(xi_t=args.xi, xi_r=args.xi), strategies=("CFE", "ECF-UB"),
                              capacity=args.capacity, realizations=args.realizations, jobs=args.jobs)
    res = cli.run_cdf(spec)
    print("variant    strategy  kind  " + "  ".join(f"p{p:<6d}" for p in cli.PERCENTILES))
    for r in res["percentiles"]:
        print(f"{r['variant']:<11s}{r['strategy']:<10s}{r['kind']:<6s}"
              + "  ".join(f"{r[f'p{p}']:<7.3f}" for p in cli.PERCENTILES))


if __name__ == "__main__":
    main()
