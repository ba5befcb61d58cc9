import numpy as np
import pytest

from cellfree_fronthaul import allocation as A
from cellfree_fronthaul import oracle as O
from cellfree_fronthaul import rates as R
from cellfree_fronthaul.estimation import apply_csi_quantization, ecf_stats
from conftest import scenario


def _close(emp, closed, se, rel=0.02, n_se=3.0):
    return abs(emp - closed) <= max(rel * abs(closed), n_se * se)


def test_ideal_reference():
    cfg, beta = scenario(0, M=10, K=3)
    res = O.mc_terms_cfe(beta, cfg, 0.0, np.zeros(10), draws=60_000, seed=1)
    ref = O.ideal_mrc_sinr(beta, cfg)
    for k in range(3):
        assert _close(res.sinr_empirical[k], ref[k], res.sinr_se[k])


def test_terms_uncorrelated_and_qn():
    cfg, beta = scenario(1, M=10, K=3, xi_t=0.8, xi_r=0.9)
    plan = A.build_plan("CFE", beta, 0.5, cfg)
    res = O.mc_terms_cfe(beta, cfg, plan.Q_p, plan.Q_d, draws=60_000, seed=2)
    for e in res.by_term("qn"):
        assert _close(e.mean, e.closed_form, e.se)
    # E|sum of terms|^2 equals the sum of E|term|^2 when the terms are pairwise uncorrelated
    for k in range(3):
        den = sum(e.mean for e in res.estimates if e.k == k and e.term != "ds")
        se = np.sqrt(sum(e.se**2 for e in res.estimates if e.k == k and e.term != "ds"))
        ds = next(e.closed_form for e in res.estimates if e.k == k and e.term == "ds")
        assert abs(ds / den - res.sinr_empirical[k]) <= 3 * res.sinr_empirical[k] * se / den + 3 * res.sinr_se[k]


def test_ecf_gamma_prime_and_sandwich():
    cfg, beta = scenario(2, M=20, K=4, xi_t=0.9, xi_r=0.9)
    plan = A.build_plan("ECF", beta, 1.0, cfg)
    res = O.mc_terms_ecf(beta, cfg, plan.Q_p, plan.Q_d, draws=40_000, seed=3)
    stats = apply_csi_quantization(ecf_stats(beta, cfg), plan.Q_p)
    assert np.allclose(res.gamma_empirical.sum(axis=0), stats.gamma_prime.sum(axis=0), rtol=0.02)
    lb = R.ecf_lb_terms(beta, stats, plan.Q_d, 1.0, cfg).sinr
    ub = R.ecf_ub_terms(beta, stats, plan.Q_d, 1.0, cfg).sinr
    se = res.sinr_se
    assert np.all(lb <= res.sinr_empirical + 2 * se)
    assert np.all(res.sinr_empirical <= ub + 2 * se)


def test_ecf_without_csi_quantization_matches_cfe_in_moments():
    cfg, beta = scenario(3, M=10, K=3, xi_t=0.9)
    Qd = np.full(10, 1e-13)
    a = O.mc_terms_cfe(beta, cfg, 0.0, Qd, draws=40_000, seed=4)
    b = O.mc_terms_ecf(beta, cfg, 0.0, Qd, draws=40_000, seed=5)
    for ea, eb in zip(a.estimates, b.estimates):
        assert ea.term == eb.term
        assert abs(ea.mean - eb.mean) <= max(0.02 * abs(ea.mean), 4 * np.hypot(ea.se, eb.se))


def test_emcf_diagonal_offdiagonal_and_optimality():
    cfg, beta = scenario(4, M=5, K=3, xi_t=0.7, xi_r=0.9)
    Q = np.full((5, 3), 1e-24)
    res = O.mc_emcf(beta, cfg, Q, draws=60_000, seed=6)
    stats = ecf_stats(beta, cfg)
    psi = R.emcf_psi_diag(beta, stats, 1.0, cfg)
    assert np.all(np.abs(res.psi_diag - psi) <= np.maximum(0.03 * psi, 3 * res.psi_se))
    assert np.all(res.sinr_analytic_u <= res.sinr_sample_u * (1 + 1e-9) + 1e-12)
    k = 0
    b, Kz = R.emcf_covariance(beta, stats, Q, 1.0, cfg, k, "derived")
    off = ~np.eye(5, dtype=bool)
    big = off & (np.abs(Kz) > 10 * res.K_z_se[k])
    assert big.any()
    assert np.all(np.abs(res.K_z[k].real[big] - Kz[big]) <= np.maximum(0.03 * np.abs(Kz[big]),
                                                                       3 * res.K_z_se[k][big]))


def test_emcf_offdiagonals_vanish_without_ue_distortion():
    cfg, beta = scenario(4, M=5, K=3, xi_t=1.0, xi_r=0.9)
    res = O.mc_emcf(beta, cfg, np.full((5, 3), 1e-24), draws=40_000, seed=7)
    off = ~np.eye(5, dtype=bool)
    for k in range(3):
        assert np.all(np.abs(res.K_z[k].real[off]) <= 4 * res.K_z_se[k][off])


def test_seeded_and_converging():
    cfg, beta = scenario(5, M=8, K=2)
    a = O.mc_terms_cfe(beta, cfg, 0.0, np.zeros(8), draws=20_000, seed=11)
    b = O.mc_terms_cfe(beta, cfg, 0.0, np.zeros(8), draws=20_000, seed=11)
    assert [e.mean for e in a.estimates] == [e.mean for e in b.estimates]
    c = O.mc_terms_cfe(beta, cfg, 0.0, np.zeros(8), draws=80_000, seed=12)
    ratio = np.array([x.se / y.se for x, y in zip(a.estimates, c.estimates) if y.se > 0])
    assert np.all((ratio > 1.6) & (ratio < 2.5))


def test_judge_relations():
    e = O.McEstimate("CFE", "iui", 0, 1.0, 0.01, 100, 1.01)
    assert e.judge(0.02).passed and e.rel_dev == pytest.approx(-0.01 / 1.01)
    assert not O.McEstimate("CFE", "iui", 0, 1.0, 0.001, 100, 1.2).judge(0.02).passed
    br = O.McEstimate("ECF", "sinr", 0, 1.5, 0.01, 100, 2.0, closed_alt=1.0)
    assert br.judge(0.0, relation="bracket").passed
    br.mean = 2.5
    assert not br.judge(0.02, relation="bracket").passed
    with pytest.raises(ValueError):
        e.judge(0.02, relation="nope")


def test_report_writer(tmp_path):
    rows = [O.McEstimate("CFE", "rn", 0, 1.0, 0.01, 100, 1.0).judge(0.02)]
    O.write_report(rows, tmp_path / "r.csv")
    O.write_report(rows, tmp_path / "r.json")
    assert (tmp_path / "r.csv").read_text().count("\n") == 2
    assert '"term": "rn"' in (tmp_path / "r.json").read_text()
