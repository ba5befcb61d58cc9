"""Monte-Carlo validator for the closed-form statistics and SINR terms.

Every draw simulates pilot reception, estimation, (de)quantization and one data
symbol.  Each interference term is formed from its defining expression and its
second moment is averaged over draws.  Draws are processed in batches with one
independent seed sub-stream per batch, so results do not depend on batch
scheduling.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rates as R
from .config import SystemConfig
from .estimation import EstimationStats, apply_csi_quantization, cfe_stats, ecf_stats
from .signal import (ChannelRealization, add_quantization, complex_normal, draw_channels, make_pilots,
                     project_pilots, receive_data, receive_pilot, streams)


@dataclass
class McEstimate:
    strategy: str
    term: str
    k: int
    mean: float
    se: float
    draws: int
    closed_form: float
    rel_dev: float | None = None
    passed: bool | None = None
    closed_alt: float | None = None  # second closed form when the pairing is a bracket

    def judge(self, rel_tol: float, n_se: float = 3.0, relation: str = "eq") -> "McEstimate":
        """``relation``: ``eq`` (agreement), ``le`` (closed <= empirical), ``ge``, or ``bracket``
        (empirical between ``closed_form`` and ``closed_alt``)."""
        if self.closed_form != 0:
            self.rel_dev = (self.mean - self.closed_form) / abs(self.closed_form)
        slack = max(rel_tol * abs(self.closed_form), n_se * self.se)
        if relation == "eq":
            self.passed = abs(self.mean - self.closed_form) <= slack
        elif relation == "le":
            self.passed = self.closed_form <= self.mean + n_se * self.se
        elif relation == "ge":
            self.passed = self.closed_form >= self.mean - n_se * self.se
        elif relation == "bracket":
            lo, hi = sorted((self.closed_form, self.closed_alt))
            pad = max(rel_tol * abs(hi), n_se * self.se)
            self.passed = lo - pad <= self.mean <= hi + pad
        else:
            raise ValueError(relation)
        self.passed = bool(self.passed)
        return self


class _Moments:
    """Running first and second moments of a real-valued per-draw quantity."""

    def __init__(self, shape=()):
        self.n = 0
        self.s1 = np.zeros(shape)
        self.s2 = np.zeros(shape)

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.n += x.shape[0]
        self.s1 += x.sum(axis=0)
        self.s2 += (x**2).sum(axis=0)

    @property
    def mean(self):
        return self.s1 / self.n

    @property
    def se(self):
        var = np.maximum(self.s2 / self.n - self.mean**2, 0.0)
        return np.sqrt(var / self.n)


def _batches(draws: int, batch: int, seed):
    sizes = [batch] * (draws // batch) + ([draws % batch] if draws % batch else [])
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(len(sizes))
    return zip(sizes, seeds)


def _mrc_terms(g, est, data, q_d, config, eta):
    """Per-draw |term|^2 for MRC with channel estimate ``est`` (shape (B, M, K))."""
    ru, xt, xr = config.rho_u, config.xi_t, config.xi_r
    S = np.einsum("bmk,bmj->bkj", est.conj(), g)   # S[k, j] = sum_m conj(est_mk) g_mj
    amp = np.sqrt(ru * eta * xr * xt)                # (K,)
    K = g.shape[-1]
    off = 1.0 - np.eye(K)
    return S, {
        "iui": (np.abs(S * amp[None, None, :] * data.s[:, None, :]) ** 2 * off).sum(axis=2),
        "thi": (np.abs(np.sqrt(xr) * S * data.w_t[:, None, :]) ** 2).sum(axis=2),
        "rhi": np.abs(np.einsum("bm,bmk->bk", data.w_r, est.conj())) ** 2,
        "rn": np.abs(np.einsum("bm,bmk->bk", data.n, est.conj())) ** 2,
        "qn": np.abs(np.einsum("bm,bmk->bk", q_d, est.conj())) ** 2,
    }, amp


def _simulate_mrc(beta, config, stats: EstimationStats, Q_d, eta, draws, seed, batch, placement,
                  pilot_Q=None):
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (K,))
    pilots = make_pilots(config.tau, K)
    mean_gain = stats.gamma_prime.sum(axis=0)  # analytic E[sum_m g conj(est)]
    acc = {name: _Moments((K,)) for name in ("bu", "iui", "thi", "rhi", "rn", "qn", "total")}
    gain = _Moments((K,))
    est_var = _Moments((M, K))
    est_cross = _Moments((M, K))
    err_corr = _Moments((M, K))
    alpha = np.divide(stats.gamma_prime, stats.gamma, out=np.zeros_like(stats.gamma), where=stats.gamma > 0)
    for size, child in _batches(draws, batch, seed):
        rng = streams(child)
        g = draw_channels(beta, draws=size, rng=rng["channel"]).g
        y_p = receive_pilot(ChannelRealization(g), pilots, config, rng).y_p
        if pilot_Q is not None:
            y_p = add_quantization(y_p, np.asarray(pilot_Q, dtype=float)[:, None], rng["pilot_quant"])
        est = stats.lam * project_pilots(y_p, pilots)
        if placement == "ap":
            # backward test channel: est = ghat + q_p with ghat and q_p uncorrelated
            w = complex_normal(rng["csi_quant"], est.shape, alpha * stats.q_p)
            est = alpha * est + w
        est_var.add(np.abs(est) ** 2)
        est_cross.add(np.real(est * g.conj()))
        err_corr.add(np.real((g - est) * est.conj()))
        data = receive_data(ChannelRealization(g), eta, config, rng)
        q_d = complex_normal(rng["data_quant"], data.y.shape, np.asarray(Q_d, dtype=float))
        S, terms, amp = _mrc_terms(g, est, data, q_d, config, eta)
        diag = np.einsum("bkk->bk", S)
        gain.add(np.real(diag))
        bu = amp * (diag - mean_gain) * data.s
        terms["bu"] = np.abs(bu) ** 2
        r = np.einsum("bm,bmk->bk", data.y + q_d, est.conj())
        terms["total"] = np.abs(r - amp * mean_gain * data.s) ** 2
        for name, val in terms.items():
            acc[name].add(val)
    return acc, gain, amp, est_var, est_cross, err_corr


@dataclass
class MrcOracleResult:
    strategy: str
    draws: int
    estimates: list
    sinr_empirical: np.ndarray
    sinr_se: np.ndarray
    gamma_empirical: np.ndarray
    cross_empirical: np.ndarray
    err_corr_empirical: np.ndarray

    def by_term(self, term: str) -> list:
        return [e for e in self.estimates if e.term == term]


def _pack(strategy, acc, gain, amp, draws, closed: R.SinrBreakdown, est_var, est_cross, err_corr):
    tot = closed.term_totals() if closed is not None else None
    out = []
    K = len(amp)
    for k in range(K):
        ds_emp = amp[k] ** 2 * gain.mean[k] ** 2
        ds_se = 2 * amp[k] ** 2 * abs(gain.mean[k]) * gain.se[k]
        out.append(McEstimate(strategy, "ds", k, ds_emp, ds_se, draws, float(tot["ds"][k]) if tot else np.nan))
        for name in ("bu", "iui", "thi", "rhi", "rn", "qn"):
            out.append(McEstimate(strategy, name, k, float(acc[name].mean[k]), float(acc[name].se[k]), draws,
                                  float(tot[name][k]) if tot else np.nan))
    den = acc["total"].mean
    ds_true = tot["ds"] if tot else amp**2 * gain.mean**2
    sinr = np.where(den > 0, ds_true / np.where(den > 0, den, 1.0), 0.0)
    # delta-method SE from the denominator only (numerator is deterministic)
    sinr_se = np.where(den > 0, sinr * acc["total"].se / np.where(den > 0, den, 1.0), 0.0)
    return MrcOracleResult(strategy, draws, out, sinr, sinr_se, est_var.mean, est_cross.mean, err_corr.mean)


def mc_terms_cfe(beta, config: SystemConfig, Q_p_m, Q_d, eta=1.0, draws: int = 100_000, seed=0,
                 batch: int = 20_000) -> MrcOracleResult:
    """Empirical CFE terms for pilot quantization ``Q_p_m`` (per AP) and data quantization ``Q_d``."""
    stats = cfe_stats(beta, Q_p_m, config)
    closed = R.cfe_terms(beta, stats, Q_d, eta, config)
    acc, gain, amp, ev, ec, er = _simulate_mrc(beta, config, stats, Q_d, eta, draws, seed, batch, "cu",
                                               pilot_Q=np.broadcast_to(Q_p_m, (np.shape(beta)[0],)))
    return _pack("CFE", acc, gain, amp, draws, closed, ev, ec, er)


def mc_terms_ecf(beta, config: SystemConfig, Q_p_mk, Q_d, eta=1.0, draws: int = 100_000, seed=0,
                 batch: int = 20_000) -> MrcOracleResult:
    """Empirical ECF terms; the reported closed forms are the upper-bound expressions."""
    stats = apply_csi_quantization(ecf_stats(beta, config), Q_p_mk)
    closed = R.ecf_ub_terms(beta, stats, Q_d, eta, config)
    acc, gain, amp, ev, ec, er = _simulate_mrc(beta, config, stats, Q_d, eta, draws, seed, batch, "ap")
    return _pack("ECF", acc, gain, amp, draws, closed, ev, ec, er)


@dataclass
class EmcfOracleResult:
    draws: int
    psi_diag: np.ndarray       # (M, K) empirical E|conj(g~) y|^2
    psi_se: np.ndarray
    b: np.ndarray              # (K, M) empirical E[y^_k conj(s_k)]
    K_z: np.ndarray            # (K, M, M) sample covariance of z_k
    K_z_se: np.ndarray         # (K, M, M) SE of the real part of each entry
    sinr_analytic_u: np.ndarray
    sinr_sample_u: np.ndarray


def mc_emcf(beta, config: SystemConfig, Q_mk, eta=1.0, draws: int = 100_000, seed=0, batch: int = 20_000,
            offdiag: str = "derived") -> EmcfOracleResult:
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (K,))
    Q_mk = np.broadcast_to(np.asarray(Q_mk, dtype=float), (M, K))
    stats = ecf_stats(beta, config)
    pilots = make_pilots(config.tau, K)
    b_true = np.sqrt(config.rho_u * eta * config.xi_r * config.xi_t)[:, None] * stats.gamma.T  # (K, M)
    psi = _Moments((M, K))
    bs = np.zeros((K, M), dtype=complex)
    zz = np.zeros((K, M, M), dtype=complex)
    zz2 = np.zeros((K, M, M))
    n = 0
    for size, child in _batches(draws, batch, seed):
        rng = streams(child)
        g = draw_channels(beta, draws=size, rng=rng["channel"]).g
        holder = ChannelRealization(g)
        est = stats.lam * project_pilots(receive_pilot(holder, pilots, config, rng).y_p, pilots)
        data = receive_data(holder, eta, config, rng)
        prod = est.conj() * data.y[:, :, None]             # (B, M, K)
        psi.add(np.abs(prod) ** 2)
        yhat = prod + complex_normal(rng["product_quant"], prod.shape, Q_mk)
        bs += np.einsum("bmk,bk->km", yhat, data.s.conj())
        z = (yhat - b_true.T[None, :, :] * data.s[:, None, :]).transpose(0, 2, 1)  # (B, K, M)
        outer = z[:, :, :, None] * z.conj()[:, :, None, :]
        zz += outer.sum(axis=0)
        zz2 += (outer.real**2).sum(axis=0)
        n += size
    b_emp = bs / n
    Kz = zz / n
    Kz_se = np.sqrt(np.maximum(zz2 / n - np.real(Kz) ** 2, 0.0) / n)
    sinr_a = np.zeros(K)
    sinr_s = np.zeros(K)
    for k in range(K):
        b_a, Kz_a = R.emcf_covariance(beta, stats, Q_mk, eta, config, k, offdiag)
        u = np.linalg.solve(Kz_a, b_a)
        sinr_a[k] = abs(u.conj() @ b_emp[k]) ** 2 / np.real(u.conj() @ Kz[k] @ u)
        u_s = np.linalg.solve(Kz[k], b_emp[k])
        sinr_s[k] = np.real(b_emp[k].conj() @ u_s)
    return EmcfOracleResult(n, psi.mean, psi.se, b_emp, Kz, Kz_se, sinr_a, sinr_s)


def ideal_mrc_sinr(beta, config: SystemConfig, eta=1.0) -> np.ndarray:
    """Reference cell-free MRC SINR with perfect hardware and unlimited fronthaul.

    Coded from scratch (not through the term layer) for cross-checking.
    """
    beta = np.asarray(beta, dtype=float)
    K = beta.shape[1]
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (K,))
    tp = config.tau * config.rho_p
    gam = tp * beta**2 / (tp * beta + config.N)
    num = config.rho_u * eta * gam.sum(axis=0) ** 2
    den = config.rho_u * (gam.T @ beta) @ eta + config.N * gam.sum(axis=0)
    return num / den


# ---------------------------------------------------------------------------
# validation report


def write_report(rows: list, path: str | Path) -> None:
    path = Path(path)
    dicts = [asdict(r) for r in rows]
    if path.suffix == ".json":
        path.write_text(json.dumps(dicts, indent=1, default=float))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "term", "k", "closed_form", "empirical", "se", "rel_dev", "draws", "pass"])
        for r in rows:
            w.writerow([r.strategy, r.term, r.k, f"{r.closed_form:.9e}", f"{r.mean:.9e}", f"{r.se:.3e}",
                        "" if r.rel_dev is None else f"{r.rel_dev:.4e}", r.draws, int(bool(r.passed))])


# ---------------------------------------------------------------------------
# pairing suite

SUITE_TERMS = R.TERM_NAMES + ("gamma", "sinr")
SUITE_STRATEGIES = ("CFE", "ECF")


def validation_suite(beta, config: SystemConfig, plans: dict, eta=1.0, draws: int = 100_000, seed=0,
                     rel_tol: float = 0.02, n_se: float = 3.0, scale=None) -> list:
    """Pair every closed-form term with its Monte-Carlo counterpart.

    ``plans`` maps "CFE" / "ECF" to a fronthaul plan.  CFE rows must agree
    within ``rel_tol`` or ``n_se`` standard errors; ECF rows must fall between
    the lower- and upper-bound forms.  ``scale`` perturbs the closed forms
    (fault injection).  A registered pairing with no row is reported failed.
    """
    beta = np.asarray(beta, dtype=float)
    K = beta.shape[1]
    ss = np.random.SeedSequence(seed).spawn(len(SUITE_STRATEGIES))
    rows = []
    for strat, child in zip(SUITE_STRATEGIES, ss):
        plan = plans[strat]
        if strat == "CFE":
            stats = cfe_stats(beta, plan.Q_p, config)
            cf = R.cfe_terms(beta, stats, plan.Q_d, eta, config, scale)
            closed, alt = cf.term_totals(), None
            closed["sinr"] = cf.sinr
            pilot_Q = np.broadcast_to(plan.Q_p, (beta.shape[0],))
            placement = "cu"
        else:
            stats = apply_csi_quantization(ecf_stats(beta, config), plan.Q_p)
            ub = R.ecf_ub_terms(beta, stats, plan.Q_d, eta, config, scale)
            lb = R.ecf_lb_terms(beta, stats, plan.Q_d, eta, config, scale)
            closed, alt = ub.term_totals(), lb.term_totals()
            closed["sinr"], alt["sinr"] = ub.sinr, lb.sinr
            pilot_Q, placement = None, "ap"
        closed["gamma"] = stats.gamma_prime.sum(axis=0)
        if alt is not None:
            alt["gamma"] = closed["gamma"]
        acc, gain, amp, ev, ec, er = _simulate_mrc(beta, config, stats, plan.Q_d, eta, draws, child, 20_000,
                                                   placement, pilot_Q=pilot_Q)
        emp = _pack(strat, acc, gain, amp, draws, None, ev, ec, er)
        got = {(e.term, e.k): e for e in emp.estimates}
        for k in range(K):
            got[("gamma", k)] = McEstimate(strat, "gamma", k, float(ev.mean[:, k].sum()),
                                           float(np.sqrt((ev.se[:, k] ** 2).sum())), draws, np.nan)
            got[("sinr", k)] = McEstimate(strat, "sinr", k, float(emp.sinr_empirical[k]),
                                          float(emp.sinr_se[k]), draws, np.nan)
        for term in SUITE_TERMS:
            for k in range(K):
                e = got.get((term, k))
                if e is None:
                    rows.append(McEstimate(strat, term, k, np.nan, np.nan, draws, np.nan, passed=False))
                    continue
                e.closed_form = float(closed[term][k])
                if alt is not None:
                    e.closed_alt = float(alt[term][k])
                    e.judge(rel_tol, n_se, "bracket")
                    if e.closed_form != 0:
                        e.rel_dev = (e.mean - e.closed_form) / abs(e.closed_form)
                else:
                    e.judge(rel_tol, n_se, "eq")
                rows.append(e)
    return rows
