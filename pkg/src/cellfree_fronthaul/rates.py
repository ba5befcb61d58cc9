"""Closed-form UatF SINRs and rates for the three forwarding strategies.

All MRC-based evaluators (CFE, ECF lower/upper bound) go through one term
layer that returns every variance term separately:

    ds[k]        |DS_k|^2
    bu[k]        E|BU_k|^2
    iui[k, k']   E|IUI_kk'|^2  (zero on the diagonal)
    thi[k, k']   E|THI_kk'|^2
    rhi[k, k']   contribution of UE k' to E|RHI_k|^2
    rn[k], qn[k] receiver and fronthaul-quantization noise

Pilots are orthogonal, so every pilot inner product is the identity.  Ratios
such as gamma/beta are rewritten with lambda (gamma/beta = c * lambda) so no
expression divides by xi_t or beta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .config import SystemConfig
from .estimation import EstimationStats, pilot_gain

TERM_NAMES = ("ds", "bu", "iui", "thi", "rhi", "rn", "qn")
DEN_FLOOR = 1e-30


@dataclass
class SinrBreakdown:
    strategy: str
    ds: np.ndarray
    bu: np.ndarray
    iui: np.ndarray
    thi: np.ndarray
    rhi: np.ndarray
    rn: np.ndarray
    qn: np.ndarray
    sinr: np.ndarray = field(default=None)
    rate: np.ndarray = field(default=None)
    invalid: np.ndarray = field(default=None)  # LB denominator clamped

    @property
    def K(self) -> int:
        return len(self.ds)

    def interference(self) -> np.ndarray:
        return (self.bu + self.iui.sum(axis=1) + self.thi.sum(axis=1) + self.rhi.sum(axis=1)
                + self.rn + self.qn)

    def term_totals(self) -> dict[str, np.ndarray]:
        """Per-UE value of every term, with the per-(k, k') ones summed over k'."""
        return {
            "ds": self.ds, "bu": self.bu, "iui": self.iui.sum(axis=1),
            "thi": self.thi.sum(axis=1), "rhi": self.rhi.sum(axis=1), "rn": self.rn, "qn": self.qn,
        }


@dataclass
class EmcfCombiner:
    b: np.ndarray    # (M,)
    K_z: np.ndarray  # (M, M)
    u: np.ndarray    # (M,)
    residual: float

    @property
    def sinr(self) -> float:
        return float(np.real(self.b.conj() @ self.u))


@dataclass
class EmcfResult:
    combiners: list
    sinr: np.ndarray
    rate: np.ndarray
    strategy: str = "EMCF"


def rate_from_sinr(sinr, config: SystemConfig):
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be nonnegative")
    out = config.data_fraction * np.log2(1.0 + sinr)
    return out if out.ndim else float(out)


def sum_se(rates) -> float:
    return float(np.sum(rates))


def total_power(plan, eta, config: SystemConfig, ue_power=None) -> float:
    """Transmit, AP circuit and fronthaul power in watts.

    ``ue_power`` overrides the per-UE consumption (default eta * rho_u).
    """
    eta = np.asarray(eta, dtype=float)
    p_ue = eta * config.rho_u if ue_power is None else np.asarray(ue_power, dtype=float)
    C = np.asarray(plan.C_m, dtype=float)
    fronthaul = config.bandwidth_hz * C.sum() * 1e-9 * config.p_bh_w_per_gbps
    return float(p_ue.sum() + len(C) * config.p_ap_w + fronthaul)


def energy_efficiency(rates, plan, eta, config: SystemConfig, ue_power=None) -> float:
    """Bits per joule: bandwidth * SSE / total power."""
    return config.bandwidth_hz * sum_se(rates) / total_power(plan, eta, config, ue_power)


# ---------------------------------------------------------------------------
# term layer


def _weighted(Q, gamma):
    """sum_m Q_m * gamma_mk with 0 * inf := 0 (a dark link with no CSI adds nothing)."""
    Q = np.broadcast_to(np.asarray(Q, dtype=float).reshape(-1, *([1] * (gamma.ndim - 1))), gamma.shape)
    with np.errstate(invalid="ignore"):
        prod = np.where(gamma > 0, Q * gamma, 0.0)
    return prod.sum(axis=0)


def _common(beta, lam, gamma_like):
    beta = np.asarray(beta, dtype=float)
    omega = gamma_like.T @ beta              # sum_m gamma_mk beta_mk'
    gt = (lam.T @ beta) ** 2                 # (sum_m lambda_mk beta_mk')^2
    Lam = (lam**2).T @ beta**2               # sum_m lambda_mk^2 beta_mk'^2
    return omega, gt, Lam


def _eta(eta, K):
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (K,)).copy()
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("power controls must lie in [0, 1]")
    return eta


def cfe_terms(beta, stats: EstimationStats, Q_d, eta, config: SystemConfig, scale=None) -> SinrBreakdown:
    """Every variance term of the CFE UatF decomposition.

    ``scale`` maps a term name to a multiplicative factor; it exists only so
    the validation harness can inject a known formula error.
    """
    lam, gamma = stats.lam, stats.gamma
    M, K = gamma.shape
    eta = _eta(eta, K)
    c2 = pilot_gain(config) ** 2
    rp, ru, xt, xr, N = config.rho_p, config.rho_u, config.xi_t, config.xi_r, config.N
    omega, gt, Lam = _common(beta, lam, gamma)
    I = np.eye(K)
    w = ru * eta[None, :]  # rho_u * eta_k' along columns

    core = omega + xr * rp * (1 - xt) * gt + rp * (1 - xr) * Lam
    ds = ru * eta * xr * xt * gamma.sum(axis=0) ** 2
    bu = ru * eta * xr * xt * np.diag(core)
    iui = w * xr * xt * core * (1 - I)
    thi = w * xr * (1 - xt) * (omega + I * c2 * gt + xr * rp * (1 - xt) * gt + rp * (1 - xr) * Lam)
    rhi = w * (1 - xr) * (omega + rp * xr * (config.tau * xt * I + 1 - xt) * Lam + rp * (1 - xr) * Lam)
    rn = N * gamma.sum(axis=0)
    qn = _weighted(Q_d, gamma)
    out = SinrBreakdown("CFE", ds, bu, iui, thi, rhi, rn, qn)
    return _finish(out, config, scale)


def ecf_lb_terms(beta, stats: EstimationStats, Q_d, eta, config: SystemConfig, scale=None) -> SinrBreakdown:
    """ECF lower-bound terms: CFE-style moments with the CSI-quantization
    cross-terms subtracted from the interference."""
    lam, gamma, gp, Qp = stats.lam, stats.gamma, stats.gamma_prime, stats.q_p
    M, K = gamma.shape
    eta = _eta(eta, K)
    c2 = pilot_gain(config) ** 2
    rp, ru, xt, xr, N = config.rho_p, config.rho_u, config.xi_t, config.xi_r, config.N
    omega_p, gt, Lam = _common(beta, lam, gp)
    QQ = Qp.T @ Qp
    I = np.eye(K)
    w = ru * eta[None, :]

    core = omega_p + xr * rp * (1 - xt) * gt + rp * (1 - xr) * Lam
    ds = ru * eta * xr * xt * gp.sum(axis=0) ** 2
    bu = ru * eta * xr * xt * (np.diag(core) + 2.0 * Qp.sum(axis=0) * gp.sum(axis=0))
    iui = w * xr * xt * (core - QQ) * (1 - I)
    thi = w * xr * (1 - xt) * (omega_p + I * c2 * gt + xr * rp * (1 - xt) * gt + rp * (1 - xr) * Lam - QQ)
    rhi = w * (1 - xr) * (omega_p + rp * xr * (config.tau * xt * I + 1 - xt) * Lam
                          + rp * (1 - xr) * Lam - rp * (1 - xr) * QQ)
    rn = N * gp.sum(axis=0)
    qn = _weighted(Q_d, gp)
    out = SinrBreakdown("ECF-LB", ds, bu, iui, thi, rhi, rn, qn)
    return _finish(out, config, scale, guard=True)


def ecf_ub_terms(beta, stats: EstimationStats, Q_d, eta, config: SystemConfig, scale=None) -> SinrBreakdown:
    """ECF upper-bound terms (estimation error treated as independent of the CSI)."""
    gp = stats.gamma_prime
    M, K = gp.shape
    eta = _eta(eta, K)
    ru, xt, xr, N = config.rho_u, config.xi_t, config.xi_r, config.N
    omega_p = gp.T @ np.asarray(beta, dtype=float)
    I = np.eye(K)
    w = ru * eta[None, :]
    s1 = gp.sum(axis=0)

    ds = ru * eta * xr * xt * s1**2
    bu = ru * eta * xr * xt * np.diag(omega_p)
    iui = w * xr * xt * omega_p * (1 - I)
    thi = w * xr * (1 - xt) * (omega_p + I * (s1**2)[:, None])
    rhi = w * (1 - xr) * (omega_p + I * (gp**2).sum(axis=0)[:, None])
    rn = N * s1
    qn = _weighted(Q_d, gp)
    out = SinrBreakdown("ECF-UB", ds, bu, iui, thi, rhi, rn, qn)
    return _finish(out, config, scale)


def _finish(out: SinrBreakdown, config, scale, guard=False) -> SinrBreakdown:
    if scale:
        for name, factor in scale.items():
            if name not in TERM_NAMES:
                raise KeyError(f"unknown term {name!r}")
            setattr(out, name, getattr(out, name) * factor)
    den = out.interference()
    invalid = np.zeros(out.K, dtype=bool)
    if guard:
        invalid = den <= 0
        den = np.where(invalid, DEN_FLOOR, den)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(den > 0, out.ds / np.where(den > 0, den, 1.0), 0.0)
    sinr = np.where(np.isfinite(sinr), sinr, 0.0)
    out.sinr = sinr
    out.invalid = invalid
    out.rate = rate_from_sinr(np.maximum(sinr, 0.0), config)
    return out


def sinr_cfe(beta, stats, plan, eta, config, scale=None) -> SinrBreakdown:
    return cfe_terms(beta, stats, plan.Q_d, eta, config, scale)


def sinr_ecf_lb(beta, stats, plan, eta, config, scale=None) -> SinrBreakdown:
    return ecf_lb_terms(beta, stats, plan.Q_d, eta, config, scale)


def sinr_ecf_ub(beta, stats, plan, eta, config, scale=None) -> SinrBreakdown:
    return ecf_ub_terms(beta, stats, plan.Q_d, eta, config, scale)


def sinr_cfe_compact(beta, stats: EstimationStats, Q_d, eta, config: SystemConfig,
                     printed_signs: bool = False) -> np.ndarray:
    """CFE SINR from the aggregated Gamma/Omega/Lambda/E statistics.

    With ``printed_signs`` the two pilot-overlap brackets use subtraction,
    which does not agree with the sum of the individual terms; the default
    form does.
    """
    lam, gamma = stats.lam, stats.gamma
    K = gamma.shape[1]
    eta = _eta(eta, K)
    rp, ru, xt, xr = config.rho_p, config.rho_u, config.xi_t, config.xi_r
    c2 = pilot_gain(config) ** 2
    omega, gt, Lam = _common(beta, lam, gamma)
    Gamma = c2 * gt
    I = np.eye(K)
    sgn = -1.0 if printed_signs else 1.0
    # (1 / (tau xi_t)) * Gamma == xi_r rho_p * gt, which stays finite at xi_t = 0
    bracket = (omega
               + xr * (1 - xt) * (I * Gamma + sgn * xr * rp * gt)
               + rp * (1 - xr) * (config.tau * xr * xt * I + sgn * (1 + xr - xr * xt)) * Lam)
    den = (ru * eta[None, :] * bracket).sum(axis=1) + config.N * gamma.sum(axis=0) + _weighted(Q_d, gamma)
    num = ru * eta * xr * xt * np.diag(Gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


# ---------------------------------------------------------------------------
# EMCF


def emcf_psi_diag(beta, stats: EstimationStats, eta, config: SystemConfig, form: str = "derived") -> np.ndarray:
    """Diagonal of E[y~_m y~_m^H] for every AP, shape (M, K).

    ``form="derived"`` is the second moment of conj(g~_mk) * y_m under the
    impairment model; ``form="printed"`` is the alternative five-summand
    expression kept for comparison.  Both coincide at xi_t = xi_r = 1.
    """
    beta = np.asarray(beta, dtype=float)
    lam, gamma = stats.lam, stats.gamma
    K = gamma.shape[1]
    eta = _eta(eta, K)
    rp, ru, xt, xr, N = config.rho_p, config.rho_u, config.xi_t, config.xi_r, config.N
    u = xr * xt
    base = ru * gamma * (beta @ eta)[:, None] + ru * eta[None, :] * gamma**2 + N * gamma
    lam2 = lam**2
    if form == "derived":
        return base + ru * rp * (1 - u) * lam2 * (beta**2 @ eta)[:, None]
    if form == "printed":
        # ratios beta_mk'/beta_mk * gamma_mk rewritten as c * lambda_mk * beta_mk'
        sq_of_sum = xr * rp * (1 - xt) * lam2 * ((beta @ np.sqrt(eta)) ** 2)[:, None]
        sum_of_sq = rp * (1 + xr - 2 * u) * lam2 * (beta**2 @ eta)[:, None]
        return base + ru * (sq_of_sum + sum_of_sq)
    raise ValueError(f"unknown form {form!r}")


def emcf_covariance(beta, stats: EstimationStats, Q_mk, eta, config: SystemConfig, k: int,
                    offdiag: str = "derived") -> tuple[np.ndarray, np.ndarray]:
    """(b_k, K_z) for UE k.

    ``offdiag="derived"`` includes the correlation carried by the UE-side data
    distortion of UE k; ``"printed"`` keeps only the pilot-distortion part.
    """
    beta = np.asarray(beta, dtype=float)
    lam, gamma = stats.lam, stats.gamma
    M, K = gamma.shape
    eta = _eta(eta, K)
    rp, ru, xt, xr, N = config.rho_p, config.rho_u, config.xi_t, config.xi_r, config.N
    g = gamma[:, k]
    l = lam[:, k]
    Q = np.broadcast_to(np.asarray(Q_mk, dtype=float), (M, K))[:, k]

    b = np.sqrt(ru * eta[k] * xr * xt) * g
    weighted_beta = beta * np.sqrt(eta)[None, :]
    cross = weighted_beta @ weighted_beta.T  # sum_j eta_j beta_mj beta_nj
    off = xr * rp * np.outer(l, l) * cross
    if offdiag == "derived":
        off = off + eta[k] * np.outer(g, g)
    elif offdiag != "printed":
        raise ValueError(f"unknown offdiag form {offdiag!r}")
    Kz = ru * xr * (1 - xt) * off
    diag = (ru * (g * (beta @ eta) + rp * (1 - xr * xt) * l**2 * (beta**2 @ eta))
            + ru * eta[k] * (1 - xr * xt) * g**2 + N * g + Q)
    np.fill_diagonal(Kz, diag)
    return b, Kz


def emcf_combiner(b: np.ndarray, Kz: np.ndarray) -> EmcfCombiner:
    """MMSE weights u = K_z^{-1} b via Cholesky; raises if K_z is not positive definite."""
    try:
        factor = scipy.linalg.cho_factor(Kz, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("K_z is not positive definite") from exc
    u = scipy.linalg.cho_solve(factor, b)
    nb = np.linalg.norm(b)
    resid = float(np.linalg.norm(Kz @ u - b) / nb) if nb > 0 else 0.0
    return EmcfCombiner(b, Kz, u, resid)


def rate_emcf(beta, stats: EstimationStats, plan, eta, config: SystemConfig,
              offdiag: str = "derived") -> EmcfResult:
    M, K = stats.gamma.shape
    Q_mk = np.broadcast_to(np.asarray(plan.Q_mk, dtype=float), (M, K))
    dark = np.isinf(Q_mk)
    combs, sinr = [], np.zeros(K)
    for k in range(K):
        b, Kz = emcf_covariance(beta, stats, np.where(dark, 0.0, Q_mk), eta, config, k, offdiag)
        # dark links and APs without CSI carry nothing for UE k
        keep = ~dark[:, k] & (stats.gamma[:, k] > 0)
        if not keep.any():
            combs.append(None)
            continue
        comb = emcf_combiner(b[keep], Kz[np.ix_(keep, keep)])
        if comb.residual > 1e-10:
            raise np.linalg.LinAlgError(f"MMSE solve residual {comb.residual:.2e} for UE {k}")
        combs.append(comb)
        sinr[k] = max(comb.sinr, 0.0)
    return EmcfResult(combs, sinr, rate_from_sinr(sinr, config))


# ---------------------------------------------------------------------------
# export


def write_breakdown_csv(breakdowns, path: str | Path) -> None:
    """One row per UE per strategy with every term total, SINR and rate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "k", *TERM_NAMES, "sinr", "rate", "lb_invalid"])
        for bd in breakdowns:
            if isinstance(bd, EmcfResult):
                for k in range(len(bd.sinr)):
                    w.writerow(["EMCF", k, *([""] * len(TERM_NAMES)), f"{bd.sinr[k]:.9e}", f"{bd.rate[k]:.9e}", ""])
                continue
            tot = bd.term_totals()
            for k in range(bd.K):
                w.writerow([bd.strategy, k, *(f"{tot[n][k]:.9e}" for n in TERM_NAMES),
                            f"{bd.sinr[k]:.9e}", f"{bd.rate[k]:.9e}", int(bd.invalid[k])])
