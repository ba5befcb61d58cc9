"""Fronthaul capacity allocation: CSI/data split, per-UE shares, and the
high-SNR threshold/limit analyses.

A plan fixes every quantization-noise variance, so the rate evaluators only
need ``(beta, stats, plan, eta, config)``.  ``evaluate`` ties the pieces
together for a single strategy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import quant
from . import rates as R
from .config import SystemConfig
from .estimation import EstimationStats, apply_csi_quantization, cfe_stats, ecf_stats

log = logging.getLogger(__name__)

STRATEGIES = ("CFE", "ECF-LB", "ECF-UB", "EMCF")


@dataclass
class FronthaulPlan:
    strategy: str                        # CFE, ECF or EMCF
    C_m: np.ndarray                      # (M,) total capacity per AP
    C_p: np.ndarray | None = None        # (M,) CSI / pilot part
    C_d: np.ndarray | None = None        # (M,) data part
    csi_shares: np.ndarray | None = None      # (M, K) ECF per-UE CSI capacity
    product_shares: np.ndarray | None = None  # (M, K) EMCF per-UE capacity
    Q_p: np.ndarray | None = None        # (M,) CFE pilot or (M, K) ECF CSI quantization
    Q_d: np.ndarray | None = None        # (M,) data quantization
    Q_mk: np.ndarray | None = None       # (M, K) EMCF product quantization
    fraction: float | None = None        # common C_p / C_m
    mode: str = "equal"
    notes: list = field(default_factory=list)

    @property
    def dark(self) -> bool:
        """True if any quantization variance is infinite."""
        return any(q is not None and np.any(np.isinf(q)) for q in (self.Q_p, self.Q_d, self.Q_mk))

    def conservation_error(self) -> float:
        errs = [0.0]
        if self.C_p is not None:
            errs.append(np.max(np.abs(self.C_p + self.C_d - self.C_m)))
        if self.csi_shares is not None:
            errs.append(np.max(np.abs(self.csi_shares.sum(axis=1) - self.C_p)))
        if self.product_shares is not None:
            errs.append(np.max(np.abs(self.product_shares.sum(axis=1) - self.C_m)))
        return float(max(errs))


def _family(strategy: str) -> str:
    s = strategy.upper()
    if s.startswith("ECF"):
        return "ECF"
    if s in ("CFE", "EMCF"):
        return s
    raise ValueError(f"unknown strategy {strategy!r}")


def data_quantization(beta, C_d, eta, config: SystemConfig) -> np.ndarray:
    """Q_d,m for forwarding the received data samples."""
    beta = np.asarray(beta, dtype=float)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (beta.shape[1],))
    P = config.rho_u * beta @ eta + config.N
    return np.asarray(quant.distortion_additive(quant.TestChannelSpec(P, C_d, config.data_fraction)), dtype=float)


def pilot_quantization(beta, C_p, config: SystemConfig) -> np.ndarray:
    """Q_p,m for forwarding the raw pilot vector (every entry quantized alike)."""
    beta = np.asarray(beta, dtype=float)
    P = config.rho_p * beta.sum(axis=1) + config.N
    return np.asarray(quant.distortion_additive(quant.TestChannelSpec(P, C_p, config.K / config.T)), dtype=float)


def ecf_waterfill(C_p_m, gamma, T: int):
    """Per-UE CSI shares proportional to the estimate variance.

    ``gamma`` is (K,) for one AP or (M, K); returns ``(shares, Q_p)`` of the
    same shape.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("estimate variances must be positive")
    C = np.asarray(C_p_m, dtype=float)
    shares = gamma / gamma.sum(axis=-1, keepdims=True) * (C[..., None] if gamma.ndim > 1 else C)
    return shares, quant.distortion_subtractive(gamma, shares, T)


def emcf_allocate(C_m, psi_diag, config: SystemConfig):
    """Per-UE product capacities proportional to Psi_m[k, k]; returns ``(shares, Q_mk)``."""
    psi = np.asarray(psi_diag, dtype=float)
    if np.any(psi <= 0):
        raise ValueError("Psi diagonal must be positive")
    C = np.asarray(C_m, dtype=float)
    shares = psi / psi.sum(axis=-1, keepdims=True) * (C[..., None] if psi.ndim > 1 else C)
    Q = quant.distortion_additive(quant.TestChannelSpec(psi, shares, config.data_fraction))
    return shares, np.asarray(Q, dtype=float)


def build_plan(strategy: str, beta, C_m, config: SystemConfig, fraction: float = 0.5, eta=1.0,
               mode: str = "proposed", psi_form: str = "derived") -> FronthaulPlan:
    """Plan for one strategy.  ``mode="equal"`` uses uniform per-UE shares,
    ``"proposed"`` uses the variance-proportional shares."""
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    C = np.broadcast_to(np.asarray(C_m, dtype=float), (M,)).copy()
    if np.any(C < 0):
        raise ValueError("capacity must be nonnegative")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("split fraction must lie in [0, 1]")
    if mode not in ("equal", "proposed"):
        raise ValueError(f"unknown allocation mode {mode!r}")
    fam = _family(strategy)
    if fam == "EMCF":
        stats = ecf_stats(beta, config)
        if mode == "equal":
            shares = np.repeat(C[:, None] / K, K, axis=1)
            psi = R.emcf_psi_diag(beta, stats, eta, config, psi_form)
            Q = np.asarray(quant.distortion_additive(quant.TestChannelSpec(psi, shares, config.data_fraction)))
        else:
            shares, Q = emcf_allocate(C, R.emcf_psi_diag(beta, stats, eta, config, psi_form), config)
        return FronthaulPlan("EMCF", C, product_shares=shares, Q_mk=Q, mode=mode)

    C_p = fraction * C
    C_d = C - C_p
    Q_d = data_quantization(beta, C_d, eta, config)
    if fam == "CFE":
        return FronthaulPlan("CFE", C, C_p, C_d, Q_p=pilot_quantization(beta, C_p, config), Q_d=Q_d,
                             fraction=fraction, mode=mode)
    gamma = ecf_stats(beta, config).gamma
    if mode == "equal":
        shares = np.repeat(C_p[:, None] / K, K, axis=1)
        Q_p = quant.distortion_subtractive(gamma, shares, config.T)
    else:
        shares, Q_p = ecf_waterfill(C_p, gamma, config.T)
    return FronthaulPlan("ECF", C, C_p, C_d, csi_shares=shares, Q_p=np.asarray(Q_p), Q_d=Q_d,
                         fraction=fraction, mode=mode)


def equal_split(C_m, strategy: str, beta, config: SystemConfig, eta=1.0) -> FronthaulPlan:
    """Half the capacity to CSI, half to data, uniform per-UE shares."""
    return build_plan(strategy, beta, C_m, config, 0.5, eta, mode="equal")


def stats_for(plan: FronthaulPlan, beta, config: SystemConfig) -> EstimationStats:
    if plan.strategy == "CFE":
        return cfe_stats(beta, plan.Q_p, config)
    stats = ecf_stats(beta, config)
    if plan.strategy == "ECF":
        return apply_csi_quantization(stats, plan.Q_p)
    return stats


def evaluate(strategy: str, beta, plan: FronthaulPlan, eta, config: SystemConfig):
    """SinrBreakdown (MRC strategies) or EmcfResult for ``strategy`` under ``plan``."""
    if _family(strategy) != plan.strategy:
        raise ValueError(f"plan for {plan.strategy} cannot evaluate {strategy}")
    stats = stats_for(plan, beta, config)
    s = strategy.upper()
    if s == "CFE":
        return R.sinr_cfe(beta, stats, plan, eta, config)
    if s in ("ECF", "ECF-UB"):
        return R.sinr_ecf_ub(beta, stats, plan, eta, config)
    if s == "ECF-LB":
        return R.sinr_ecf_lb(beta, stats, plan, eta, config)
    return R.rate_emcf(beta, stats, plan, eta, config)


def sse_of(strategy: str, beta, plan: FronthaulPlan, eta, config: SystemConfig) -> float:
    return R.sum_se(evaluate(strategy, beta, plan, eta, config).rate)


@dataclass
class SplitSearchResult:
    plan: FronthaulPlan
    sse: float
    grid: np.ndarray
    grid_sse: np.ndarray
    unimodal: bool


def split_search(C_m, strategy: str, beta, config: SystemConfig, eta=1.0, mode: str = "proposed",
                 grid_points: int = 41, tol: float = 1e-4) -> SplitSearchResult:
    """Best common CSI fraction: grid scan, then golden-section refinement."""
    if _family(strategy) == "EMCF":
        raise ValueError("EMCF has no CSI/data split")

    def sse(f):
        return sse_of(strategy, beta, build_plan(strategy, beta, C_m, config, float(f), eta, mode), eta, config)

    grid = np.linspace(0.0, 1.0, grid_points)
    vals = np.array([sse(f) for f in grid])
    i = int(np.argmax(vals))
    # unimodality probe: the sequence should rise to the peak and fall after it
    d = np.diff(vals)
    scale = max(np.max(np.abs(vals)), 1e-300)
    unimodal = bool(np.all(d[:i] >= -1e-9 * scale) and np.all(d[i:] <= 1e-9 * scale))
    if not unimodal:
        log.warning("SSE over the split grid is not unimodal for %s", strategy)
    best_f, best_v = grid[i], vals[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    if 0 < i < grid_points - 1 and vals[i - 1] < vals[i] > vals[i + 1]:
        f = optimize.golden(lambda x: -sse(x), brack=(lo, grid[i], hi), tol=tol)
    else:
        f = optimize.minimize_scalar(lambda x: -sse(x), bounds=(lo, hi), method="bounded",
                                     options={"xatol": tol}).x
    f = float(np.clip(f, 0.0, 1.0))
    v = sse(f)
    if v > best_v:
        best_f, best_v = f, v
    plan = build_plan(strategy, beta, C_m, config, float(best_f), eta, mode)
    return SplitSearchResult(plan, float(best_v), grid, vals, unimodal)


# ---------------------------------------------------------------------------
# high-SNR analyses


@dataclass
class ThresholdReport:
    theta1: np.ndarray
    theta2: np.ndarray
    gamma_inf: np.ndarray
    C_th: np.ndarray          # closed-form threshold (nan where not applicable)
    crossover: np.ndarray     # exact crossover of the two limits (nan if none, 0 if CFE always better)
    ratio_margin: np.ndarray  # sum_k' gamma_inf / (K * gamma_inf_k)
    applicable: np.ndarray    # side conditions hold


def gamma_limit_cfe(beta_row, k: int, C_p, config: SystemConfig):
    """Estimate variance at the CU as rho_p -> inf with pilot capacity C_p."""
    b = np.asarray(beta_row, dtype=float)
    u = config.xi_r * config.xi_t
    C_p = np.asarray(C_p, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        inv = 1.0 / np.expm1(np.log(2.0) * config.T / config.K * C_p)
    return u * config.tau * b[k] ** 2 / (u * config.tau * b[k] + ((1 - u) + inv) * b.sum())


def gamma_limit_ecf(beta_row, k: int, C_p, config: SystemConfig):
    """CSI variance at the CU as rho_p -> inf with water-filled CSI capacity C_p."""
    b = np.asarray(beta_row, dtype=float)
    u = config.xi_r * config.xi_t
    theta1 = u * config.tau * b + (1 - u) * b.sum()
    g_inf = u * config.tau * b**2 / theta1
    theta2 = g_inf[k] / g_inf.sum()
    return g_inf[k] * (1.0 - np.exp2(-theta2 * config.T * np.asarray(C_p, dtype=float)))


def prop1_threshold(beta_row, config: SystemConfig, margin: float = 1.0, c_max: float = 50.0) -> ThresholdReport:
    """Closed-form CSI-capacity threshold and the exact crossover for every UE at one AP.

    ``margin`` scales the side condition (``sum gamma_inf > margin * K * gamma_inf_k``).
    """
    b = np.asarray(beta_row, dtype=float)
    K, T = len(b), config.T
    if K != config.K:
        raise ValueError("beta row length must equal K")
    u = config.xi_r * config.xi_t
    theta1 = u * config.tau * b + (1 - u) * b.sum()
    g_inf = u * config.tau * b**2 / theta1
    theta2 = g_inf / g_inf.sum()
    ratio = g_inf.sum() / (K * g_inf) if u > 0 else np.zeros(K)
    applicable = (ratio > margin) & (K * theta2 * margin < 1) if u > 0 else np.zeros(K, bool)
    C_th = np.full(K, np.nan)
    cross = np.full(K, np.nan)
    for k in range(K):
        if not applicable[k]:
            continue
        a_rate = T / K - theta2[k] * T
        C_th[k] = np.log2(b.sum() / theta1[k]) / a_rate
        cross[k] = _crossover(b, k, config, c_max)
    return ThresholdReport(theta1, theta2, g_inf, C_th, cross, ratio, applicable)


def _log_expm1_2(x):
    """log(2^x - 1) without overflow or cancellation, for x > 0."""
    y = np.log(2.0) * np.asarray(x, dtype=float)
    return np.where(y > 30, y + np.log1p(-np.exp(-np.minimum(y, 700))), np.log(np.expm1(np.minimum(y, 30))))


def _crossover(b, k, config, c_max):
    """Smallest C_p beyond which the CU-side estimate is the better one.

    Comparing the two limits reduces to (2^{a C} - 1) / (2^{c C} - 1) > R with
    a = T/K, c = theta2_k T and R = sum(beta) / theta1_k; the left side grows
    from a/c, so the crossover is 0 when a/c >= R and a single root otherwise.
    Working with this form keeps the root resolvable long after the two
    variances agree to machine precision.
    """
    u = config.xi_r * config.xi_t
    theta1 = u * config.tau * b + (1 - u) * b.sum()
    g_inf = u * config.tau * b**2 / theta1
    a = config.T / config.K
    c = g_inf[k] / g_inf.sum() * config.T
    logR = np.log(b.sum() / theta1[k])
    if a <= c:
        return np.nan
    if np.log(a / c) >= logR:
        return 0.0

    def h(C):
        return float(_log_expm1_2(a * C) - _log_expm1_2(c * C) - logR)

    if h(c_max) < 0:
        return np.nan
    if h(1e-12) >= 0:  # a/c below R only by round-off
        return 0.0
    return float(optimize.brentq(h, 1e-12, c_max, xtol=1e-14, rtol=1e-12))


@dataclass
class LimitReport:
    upsilon: np.ndarray
    X: tuple
    a: float
    b: float
    sinr_cfe: float
    sinr_ecf: float


def prop2_limits(beta_col, C_p, C_d, config: SystemConfig) -> LimitReport:
    """Single-UE high-SNR SINR limits of CFE and ECF."""
    if config.K != 1:
        raise ValueError("the single-user limits need K = 1")
    b = np.asarray(beta_col, dtype=float).reshape(-1)
    M = len(b)
    C_p = np.broadcast_to(np.asarray(C_p, dtype=float), (M,))
    C_d = np.broadcast_to(np.asarray(C_d, dtype=float), (M,))
    xr, xt, T = config.xi_r, config.xi_t, config.T
    ups = xr * xt * (1.0 - np.exp2(-T * C_p)) * b
    with np.errstate(divide="ignore"):
        inv = np.where(C_d > 0, 1.0 / np.expm1(np.log(2.0) * T / (T - 1) * np.where(C_d > 0, C_d, 1.0)), np.inf)
    X0 = ups.sum() ** 2
    X1 = (ups * b).sum()
    X2 = (ups**2).sum()
    X3 = np.where(ups > 0, ups * b * inv, 0.0).sum()
    a = xr * (1 - xr) + (1 - xr)
    if xr * xt > 0:
        bb = (1 - xr) * (1 + 1 / (xr * xt) + (1 - xr) / xt)
    else:
        bb = np.inf
    num = xr * xt * X0
    if num == 0:
        return LimitReport(ups, (X0, X1, X2, X3), a, bb, 0.0, 0.0)
    cfe = num / (X1 + a * X0 + bb * X2 + X3)
    ecf = num / (X1 + xr * (1 - xr) * X0 + (1 - xr) * X2 + X3)
    return LimitReport(ups, (X0, X1, X2, X3), a, bb, float(cfe), float(ecf))


def format_plan(plan: FronthaulPlan) -> str:
    """Human-readable per-AP table."""
    lines = [f"strategy={plan.strategy} mode={plan.mode} fraction={plan.fraction}"]
    M = len(plan.C_m)
    for m in range(M):
        parts = [f"m={m:3d}", f"C={plan.C_m[m]:.4g}"]
        if plan.C_p is not None:
            parts += [f"C_p={plan.C_p[m]:.4g}", f"C_d={plan.C_d[m]:.4g}", f"Q_d={plan.Q_d[m]:.4e}"]
        shares = plan.csi_shares if plan.csi_shares is not None else plan.product_shares
        if shares is not None:
            parts.append("shares=[" + " ".join(f"{s:.4g}" for s in shares[m]) + "]")
        Q = plan.Q_mk if plan.Q_mk is not None else plan.Q_p
        if Q is not None:
            Qm = np.atleast_1d(Q[m])
            parts.append("Q=[" + " ".join(f"{q:.4e}" for q in Qm) + "]")
        lines.append("  ".join(parts))
    return "\n".join(lines)
