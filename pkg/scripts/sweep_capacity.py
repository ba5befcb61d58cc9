"""Mean SSE versus per-AP fronthaul capacity for each strategy, two hardware settings."""
import argparse

from cellfree_fronthaul import cli
from cellfree_fronthaul.config import desk_scale, paper_scale


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", choices=("desk", "paper"), default="desk")
    ap.add_argument("--grid", default="0.1,0.2,0.5,1,2,4")
    ap.add_argument("--realizations", type=int, default=20)
    ap.add_argument("--xi", default="1,0.9")
    ap.add_argument("--power-opt", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    base = paper_scale() if args.scale == "paper" else desk_scale()
    grid = tuple(float(x) for x in args.grid.split(","))
    for xi in (float(x) for x in args.xi.split(",")):
        spec = cli.ExperimentSpec(config=base.replace(xi_t=xi, xi_r=xi), strategies=cli.ALL_STRATEGIES,
                                  grid=grid, realizations=args.realizations, power_opt=args.power_opt,
                                  jobs=args.jobs)
        rows = cli.aggregate(cli.run_sweep(spec))
        print(f"\nxi_t = xi_r = {xi}")
        print("C      " + "".join(f"{s:>10s}" for s in cli.ALL_STRATEGIES))
        for C in grid:
            m = {r["strategy"]: r["sse_mean"] for r in rows if r["grid_value"] == C}
            print(f"{C:<7g}" + "".join(f"{m[s]:10.3f}" for s in cli.ALL_STRATEGIES))


if __name__ == "__main__":
    main()
