"""Experiment driver: sweeps, CDFs, oracle validation and the analytic reports.

Every run goes scenario -> estimation stats -> fronthaul allocation -> power
control (optional) -> rates, and writes CSV with a ``#`` header block that
records the configuration, seed and version.  Rows are sorted before writing,
so ``--jobs`` never changes the output.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import allocation as A
from . import oracle as O
from . import poweropt as P
from . import rates as R
from .config import ConfigError, SystemConfig, desk_scale, paper_scale
from .netmodel import make_scenario

log = logging.getLogger("cellfree_fronthaul")

AXES = ("C", "xi", "xi_t", "xi_r", "M", "K", "rho")
ALL_STRATEGIES = ("CFE", "ECF-UB", "ECF-LB", "EMCF")
PERCENTILES = (5, 10, 50, 90, 95)


@dataclass
class ExperimentSpec:
    config: SystemConfig = field(default_factory=desk_scale)
    strategies: tuple = ("CFE", "ECF-UB", "EMCF")
    axis: str = "C"
    grid: tuple = (0.5, 1.0, 2.0, 4.0)
    capacity: float = 1.0       # per-AP C when the axis is not C
    realizations: int = 20
    power_opt: bool = False
    mode: str = "proposed"      # equal | proposed
    seed: int = 0
    out: str | None = None
    draws: int = 100_000
    jobs: int = 1
    config_source: str = "desk"

    def validate(self):
        if not self.grid:
            raise ConfigError("sweep grid is empty")
        if self.realizations < 1:
            raise ConfigError("need at least one realization")
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if self.mode not in ("equal", "proposed"):
            raise ConfigError(f"unknown allocation mode {self.mode!r}")
        bad = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}")
        return self


@dataclass
class RateReport:
    grid_value: float
    realization: int
    strategy: str
    rates: np.ndarray
    sse: float
    ee: float
    eta: np.ndarray
    fraction: float | None = None
    note: str = ""

    def __post_init__(self):
        if abs(self.sse - float(np.sum(self.rates))) > 1e-12:
            raise ValueError("SSE must equal the sum of per-UE rates")


# ---------------------------------------------------------------------------
# pipeline


def _point_config(spec: ExperimentSpec, value) -> tuple[SystemConfig, float]:
    cfg, C = spec.config, spec.capacity
    if spec.axis == "C":
        C = float(value)
    elif spec.axis == "xi":
        cfg = cfg.replace(xi_t=float(value), xi_r=float(value))
    elif spec.axis in ("xi_t", "xi_r"):
        cfg = cfg.replace(**{spec.axis: float(value)})
    elif spec.axis in ("M", "K"):
        cfg = cfg.replace(**{spec.axis: int(value), **({"tau": None} if spec.axis == "K" else {})})
    elif spec.axis == "rho":
        cfg = cfg.replace(rho_p=float(value), rho_u=float(value))
    return cfg, C


def _geometry_seeds(seed: int, n: int):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def optimize_strategy(strategy, beta, C, config: SystemConfig, mode="proposed", power_opt=False,
                      search=True):
    """Allocation, optional power control and rates for one strategy.

    Returns ``(plan, eta, result, note)`` where ``result`` is a SinrBreakdown
    or EmcfResult evaluated at ``eta``.
    """
    K = beta.shape[1]
    eta = np.ones(K)
    note = []
    if strategy == "EMCF":
        plan = A.build_plan("EMCF", beta, C, config, mode=mode)
        if power_opt:
            note.append("no GP for EMCF; full power")
        return plan, eta, A.evaluate("EMCF", beta, plan, eta, config), "; ".join(note)

    if search and mode == "proposed":
        plan = A.split_search(C, strategy, beta, config, mode=mode).plan
    else:
        plan = A.build_plan(strategy, beta, C, config, 0.5, mode=mode)
    if power_opt:
        stats = A.stats_for(plan, beta, config)
        try:
            prob = P.build_gp(strategy, beta, stats, plan, config)
        except P.GpInfeasibleError as exc:
            note.append(f"LB GP infeasible ({exc}); UB coefficients used")
            prob = P.build_gp("ECF-UB", beta, stats, plan, config)
        eta = P.solve_sse(prob).eta
        # data quantization follows the new powers; the CSI part of the plan is unchanged
        plan = A.build_plan(strategy, beta, C, config, plan.fraction, eta, mode=mode)
    return plan, eta, A.evaluate(strategy, beta, plan, eta, config), "; ".join(note)


def _sweep_task(args):
    spec, gi, value, r, geo_seed = args
    cfg, C = _point_config(spec, value)
    out = []
    try:
        _, lsm = make_scenario(cfg, geo_seed)
        beta = lsm.beta
        for strat in spec.strategies:
            plan, eta, res, note = optimize_strategy(strat, beta, C, cfg, spec.mode, spec.power_opt)
            ee = R.energy_efficiency(res.rate, plan, eta, cfg)
            out.append(RateReport(float(value), r, strat, np.asarray(res.rate), R.sum_se(res.rate), ee, eta,
                                  plan.fraction, note))
    except Exception as exc:  # a failing grid point is logged as a diagnostic row
        log.error("grid point %s realization %d failed: %s", value, r, exc)
        out.append(RateReport(float(value), r, "ERROR", np.zeros(0), 0.0, 0.0, np.zeros(0), None,
                              f"{type(exc).__name__}: {exc}"))
    return gi, r, out


def _map(fn, tasks, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_sweep(spec: ExperimentSpec) -> list[RateReport]:
    spec.validate()
    log.info("pipeline: stats -> allocation -> %s -> rates", "GP" if spec.power_opt else "full power")
    seeds = _geometry_seeds(spec.seed, spec.realizations)
    tasks = [(spec, gi, v, r, seeds[r]) for gi, v in enumerate(spec.grid) for r in range(spec.realizations)]
    results = sorted(_map(_sweep_task, tasks, spec.jobs), key=lambda t: (t[0], t[1]))
    return [rep for _, _, reps in results for rep in reps]


def aggregate(reports: list[RateReport]) -> list[dict]:
    rows = []
    keys = sorted({(r.grid_value, r.strategy) for r in reports if r.strategy != "ERROR"},
                  key=lambda t: (t[0], ALL_STRATEGIES.index(t[1])))
    for value, strat in keys:
        sel = [r for r in reports if r.grid_value == value and r.strategy == strat]
        sse = np.array([r.sse for r in sel])
        row = {"grid_value": value, "strategy": strat, "n": len(sel), "sse_mean": sse.mean(),
               "ee_mean": float(np.mean([r.ee for r in sel]))}
        for p in PERCENTILES:
            row[f"sse_p{p}"] = float(np.percentile(sse, p))
        rows.append(row)
    return rows


def run_cdf(spec: ExperimentSpec) -> dict:
    """Per-UE SE and SSE samples: optimized (split search + GP) vs baseline (equal split, full power)."""
    spec.validate()
    if spec.realizations < 100:
        raise ConfigError("CDF output needs at least 100 realizations")
    cfg = spec.config
    seeds = _geometry_seeds(spec.seed, spec.realizations)
    tasks = [(cfg, spec.capacity, tuple(s for s in spec.strategies if s != "EMCF"), r, seeds[r])
             for r in range(spec.realizations)]
    results = sorted(_map(_cdf_task, tasks, spec.jobs), key=lambda t: t[0])
    samples = {}
    for _, per in results:
        for key, (ue, sse) in per.items():
            d = samples.setdefault(key, {"ue": [], "sse": []})
            d["ue"].extend(ue)
            d["sse"].append(sse)
    out = {"samples": [], "percentiles": []}
    for (variant, strat), d in sorted(samples.items()):
        for kind in ("sse", "ue"):
            x = np.sort(np.asarray(d[kind]))
            F = np.arange(1, len(x) + 1) / len(x)
            out["samples"].extend({"variant": variant, "strategy": strat, "kind": kind, "value": float(v),
                                   "cdf": float(f)} for v, f in zip(x, F))
            row = {"variant": variant, "strategy": strat, "kind": kind}
            row.update({f"p{p}": float(np.percentile(x, p)) for p in PERCENTILES})
            out["percentiles"].append(row)
    return out


def _cdf_task(args):
    cfg, C, strategies, r, geo_seed = args
    _, lsm = make_scenario(cfg, geo_seed)
    beta = lsm.beta
    per = {}
    for strat in strategies:
        _, _, res, _ = optimize_strategy(strat, beta, C, cfg, "proposed", power_opt=True)
        per[("optimized", strat)] = (list(res.rate), R.sum_se(res.rate))
        plan = A.equal_split(C, strat, beta, cfg)
        base = A.evaluate(strat, beta, plan, 1.0, cfg)
        per[("baseline", strat)] = (list(base.rate), R.sum_se(base.rate))
    return r, per


def run_validation(spec: ExperimentSpec, scale=None) -> tuple[list, bool]:
    """Oracle pairing suite on one desk-scale geometry."""
    cfg = spec.config
    _, lsm = make_scenario(cfg, spec.seed)
    beta = lsm.beta
    plans = {s: A.build_plan(s, beta, spec.capacity, cfg) for s in O.SUITE_STRATEGIES}
    rows = O.validation_suite(beta, cfg, plans, draws=spec.draws, seed=spec.seed, scale=scale)
    return rows, all(r.passed for r in rows)


def run_power_opt(spec: ExperimentSpec) -> list[dict]:
    cfg = spec.config
    _, lsm = make_scenario(cfg, spec.seed)
    beta = lsm.beta
    rows = []
    for strat in spec.strategies:
        if strat == "EMCF":
            continue
        plan = A.split_search(spec.capacity, strat, beta, cfg).plan if spec.mode == "proposed" else \
            A.equal_split(spec.capacity, strat, beta, cfg)
        stats = A.stats_for(plan, beta, cfg)
        try:
            prob = P.build_gp(strat, beta, stats, plan, cfg)
        except P.GpInfeasibleError:
            prob = P.build_gp("ECF-UB", beta, stats, plan, cfg)
        gp = P.solve_gp(prob)
        sol = P.solve_sse(prob)
        full = float(np.sum(np.log1p(prob.sinr(1.0))))
        for r in sol.to_rows(prob):
            r.update(strategy=strat, eta_gp=float(gp.eta[r["k"]]),
                     sse_full=cfg.data_fraction * full / np.log(2),
                     sse_opt=cfg.data_fraction * float(np.sum(np.log1p(prob.sinr(sol.eta)))) / np.log(2),
                     gp_log_objective=gp.objective)
            rows.append(r)
    return rows


def run_threshold(spec: ExperimentSpec) -> list[dict]:
    cfg = spec.config
    _, lsm = make_scenario(cfg, spec.seed)
    rows = []
    for m, row in enumerate(lsm.beta):
        rep = A.prop1_threshold(row, cfg)
        for k in range(cfg.K):
            rows.append({"m": m, "k": k, "theta1": rep.theta1[k], "theta2": rep.theta2[k],
                         "gamma_inf": rep.gamma_inf[k], "applicable": int(rep.applicable[k]),
                         "C_th": rep.C_th[k], "crossover": rep.crossover[k]})
    return rows


def run_limits(spec: ExperimentSpec) -> list[dict]:
    cfg = spec.config.replace(K=1, tau=None)
    rows = []
    for r, s in enumerate(_geometry_seeds(spec.seed, spec.realizations)):
        _, lsm = make_scenario(cfg, s)
        C = spec.capacity
        rep = A.prop2_limits(lsm.beta[:, 0], C / 2, C / 2, cfg)
        rows.append({"realization": r, "sinr_cfe_inf": rep.sinr_cfe, "sinr_ecf_inf": rep.sinr_ecf,
                     "ecf_minus_cfe": rep.sinr_ecf - rep.sinr_cfe})
    return rows


# ---------------------------------------------------------------------------
# output


def version_string() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if isinstance(v, np.ndarray):
        return ";".join(f"{float(x):.10g}" for x in v)
    return str(v)


def write_csv(rows: list[dict], path, spec: ExperimentSpec, command: str) -> None:
    header = [f"# command: {command}", f"# version: {version_string()}", f"# seed: {spec.seed}",
              f"# config_source: {spec.config_source}"]
    header += [f"# config.{k}: {v}" for k, v in spec.config.to_dict().items()]
    skip = {"config", "out", "jobs", "config_source"}
    header += [f"# spec.{k}: {v}" for k, v in asdict(spec).items() if k not in skip]
    cols = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows([_fmt(r[c]) for c in cols] for r in rows)
    text = "\n".join(header) + "\n" + buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _report_rows(reports: list[RateReport]) -> list[dict]:
    return [{"grid_value": r.grid_value, "realization": r.realization, "strategy": r.strategy,
             "sse": r.sse, "ee": r.ee, "fraction": "" if r.fraction is None else r.fraction,
             "rates": r.rates, "eta": r.eta, "note": r.note} for r in reports]


def _suffix(path, tag):
    if path in (None, "-"):
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{tag}{p.suffix or '.csv'}"))


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _spec_from_args(args) -> ExperimentSpec:
    if args.config:
        cfg, source = SystemConfig.from_file(args.config), str(args.config)
    elif args.scale == "paper":
        cfg, source = paper_scale(), "paper"
    else:
        cfg, source = desk_scale(), "desk"
    overrides = {k: getattr(args, k) for k in ("M", "K", "T", "xi_t", "xi_r", "rho_p", "rho_u")
                 if getattr(args, k, None) is not None}
    if "K" in overrides:
        overrides["tau"] = None
    if overrides:
        cfg = cfg.replace(**overrides)
    strategies = tuple(s.strip().upper() for s in args.strategies.split(","))
    spec = ExperimentSpec(cfg, strategies, args.axis, _floats(args.grid), args.capacity, args.realizations,
                          args.power_opt, args.mode, args.seed, args.out, args.draws, args.jobs, source)
    return spec.validate()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with system parameters")
    common.add_argument("--scale", choices=("desk", "paper"), default="desk")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output CSV (default stdout)")
    common.add_argument("--strategies", default="CFE,ECF-UB,EMCF")
    common.add_argument("--axis", default="C", choices=AXES)
    common.add_argument("--grid", default="0.5,1,2,4")
    common.add_argument("--capacity", type=float, default=1.0, help="per-AP fronthaul capacity")
    common.add_argument("--realizations", type=int, default=20)
    common.add_argument("--power-opt", action="store_true")
    common.add_argument("--mode", choices=("equal", "proposed"), default="proposed")
    common.add_argument("--draws", type=int, default=100_000)
    common.add_argument("--jobs", type=int, default=1)
    for name, kind in (("M", int), ("K", int), ("T", int), ("xi_t", float), ("xi_r", float),
                       ("rho_p", float), ("rho_u", float)):
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cellfree-fronthaul", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("sweep", "SSE/EE versus one parameter"),
                       ("cdf", "per-UE SE and SSE distributions, optimized vs baseline"),
                       ("validate", "Monte-Carlo pairing suite"),
                       ("power-opt", "GP power control on one geometry"),
                       ("threshold", "CSI-capacity threshold report per AP and UE"),
                       ("limits", "single-UE high-SNR SINR limits")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = _spec_from_args(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    cmd = args.command
    try:
        if cmd == "sweep":
            reports = run_sweep(spec)
            write_csv(_report_rows(reports), spec.out, spec, cmd)
            if spec.out not in (None, "-"):
                write_csv(aggregate(reports), _suffix(spec.out, "summary"), spec, cmd)
            return 0
        if cmd == "cdf":
            res = run_cdf(spec)
            write_csv(res["samples"], spec.out, spec, cmd)
            write_csv(res["percentiles"], _suffix(spec.out, "percentiles") if spec.out else None, spec, cmd)
            return 0
        if cmd == "validate":
            rows, ok = run_validation(spec)
            write_csv([{"strategy": r.strategy, "term": r.term, "k": r.k, "closed_form": r.closed_form,
                        "closed_alt": "" if r.closed_alt is None else r.closed_alt, "empirical": r.mean,
                        "se": r.se, "rel_dev": "" if r.rel_dev is None else r.rel_dev, "draws": r.draws,
                        "pass": int(bool(r.passed))} for r in rows], spec.out, spec, cmd)
            if not ok:
                print(f"validation failed on {sum(not r.passed for r in rows)} of {len(rows)} pairings",
                      file=sys.stderr)
            return 0 if ok else 1
        if cmd == "power-opt":
            write_csv(run_power_opt(spec), spec.out, spec, cmd)
            return 0
        if cmd == "threshold":
            write_csv(run_threshold(spec), spec.out, spec, cmd)
            return 0
        if cmd == "limits":
            write_csv(run_limits(spec), spec.out, spec, cmd)
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
