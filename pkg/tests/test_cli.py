import csv
import subprocess
import sys

import numpy as np
import pytest

from cellfree_fronthaul import cli
from cellfree_fronthaul.config import desk_scale

SMALL = ["--M", "20", "--K", "3"]


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["sweep", "--grid", "", *SMALL]) == 2
    assert cli.main(["sweep", "--realizations", "0", *SMALL]) == 2
    assert cli.main(["sweep", "--strategies", "CFE,XYZ", *SMALL]) == 2
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["cdf", "--realizations", "5", *SMALL]) == 2
    assert cli.main(["threshold", *SMALL, "--out", str(tmp_path / "t.csv")]) == 0
    with pytest.raises(SystemExit):
        cli.main(["nope"])


def test_config_file(tmp_path):
    cfgf = tmp_path / "sys.cfg"
    cfgf.write_text("# small\nM = 12\nK = 2\nxi_t = 0.9\n")
    out = tmp_path / "l.csv"
    assert cli.main(["limits", "--config", str(cfgf), "--realizations", "4", "--out", str(out)]) == 0
    text = out.read_text()
    assert f"# config_source: {cfgf}" in text and "# config.M: 12" in text
    rows = _rows(out)
    assert len(rows) == 4 and all(float(r["ecf_minus_cfe"]) >= 0 for r in rows)


def test_sweep_deterministic_and_jobs_invariant(tmp_path):
    args = ["sweep", *SMALL, "--realizations", "3", "--grid", "0.5,2", "--strategies", "CFE,ECF-UB,EMCF"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert cli.main([*args, "--out", str(a)]) == 0
    assert cli.main([*args, "--out", str(b)]) == 0
    assert cli.main([*args, "--out", str(c), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert (tmp_path / "a_summary.csv").exists()
    rows = _rows(a)
    assert len(rows) == 2 * 3 * 3
    for r in rows:
        rates = [float(x) for x in r["rates"].split(";")]
        assert abs(sum(rates) - float(r["sse"])) <= 1e-9
    d = tmp_path / "d.csv"
    assert cli.main([*args, "--out", str(d), "--seed", "1"]) == 0
    assert _rows(d) != rows


def test_header_block(tmp_path):
    out = tmp_path / "p.csv"
    assert cli.main(["power-opt", *SMALL, "--strategies", "CFE,ECF-UB", "--out", str(out)]) == 0
    head = [ln for ln in out.read_text().splitlines() if ln.startswith("#")]
    keys = {ln.split(":")[0] for ln in head}
    assert {"# command", "# version", "# seed", "# config.xi_t", "# spec.strategies"} <= keys
    rows = _rows(out)
    assert len(rows) == 2 * 3
    for r in rows:
        assert float(r["sse_opt"]) >= float(r["sse_full"]) - 1e-9
        assert float(r["kkt_residual"]) <= 1e-8


def test_sse_monotone_in_capacity():
    spec = cli.ExperimentSpec(config=desk_scale(), strategies=("CFE", "ECF-UB", "EMCF"), realizations=3)
    agg = cli.aggregate(cli.run_sweep(spec))
    for strat in spec.strategies:
        means = [r["sse_mean"] for r in agg if r["strategy"] == strat]
        assert len(means) == 4 and np.all(np.diff(means) >= -1e-9)


def test_ue_hardware_matters_more():
    base = desk_scale()
    def mean_sse(cfg):
        spec = cli.ExperimentSpec(config=cfg, strategies=("CFE", "ECF-UB"), grid=(1.0,), realizations=5)
        return {r["strategy"]: r["sse_mean"] for r in cli.aggregate(cli.run_sweep(spec))}
    t, r = mean_sse(base.replace(xi_t=0.8)), mean_sse(base.replace(xi_r=0.8))
    for s in t:
        assert t[s] < r[s]


def test_cdf_ordering(tmp_path):
    spec = cli.ExperimentSpec(config=desk_scale().replace(M=16, K=3, tau=None), strategies=("CFE", "ECF-UB"),
                              capacity=0.5, realizations=100, jobs=2)
    res = cli.run_cdf(spec)
    pct = {(r["variant"], r["strategy"], r["kind"]): r for r in res["percentiles"]}
    for s in spec.strategies:
        assert pct[("optimized", s, "sse")]["p5"] >= pct[("baseline", s, "sse")]["p5"]
    for key in {(r["variant"], r["strategy"], r["kind"]) for r in res["samples"]}:
        F = [r["cdf"] for r in res["samples"] if (r["variant"], r["strategy"], r["kind"]) == key]
        assert np.all(np.diff(F) > 0) and F[-1] == 1.0


def test_validate_and_fault_injection(tmp_path):
    cfg = desk_scale().replace(M=20, K=3, tau=None)
    spec = cli.ExperimentSpec(config=cfg, draws=50_000)
    rows, ok = cli.run_validation(spec)
    assert ok and len(rows) == 9 * 3 * 2
    rows, ok = cli.run_validation(spec, scale={"iui": 1.05})
    assert not ok
    assert {r.term for r in rows if not r.passed} == {"iui"}
    out = tmp_path / "v.csv"
    assert cli.main(["validate", *SMALL, "--draws", "50000", "--out", str(out)]) == 0
    assert len(_rows(out)) == 54


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cellfree_fronthaul", "threshold", "--M", "4", "--K", "2"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    body = [ln for ln in res.stdout.splitlines() if not ln.startswith("#")]
    assert body[0].startswith("m,k,theta1") and len(body) == 1 + 8
