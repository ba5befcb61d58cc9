"""Sum-SE power control as a geometric program.

Under a frozen fronthaul plan every MRC SINR has the rational form

    SINR_k(eta) = A_k eta_k / (sum_k' B_kk' eta_k' + L_k)

once the data quantization noise is written out: Q_d,m grows linearly with
the received power, so its eta-dependent part goes into B (matrix S below) and
its noise part goes into L.  Maximizing prod_k SINR_k is a GP.  It is solved
here in log variables x = log eta, y = log t with a barrier method.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import rates as R
from .config import SystemConfig
from .estimation import EstimationStats

log = logging.getLogger(__name__)

ETA_FLOOR = 1e-8
ROUND_BELOW = 1e-6


class GpInfeasibleError(ValueError):
    """Coefficients cannot be cast as a GP (negative B or nonpositive L)."""


class GpConvergenceError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class GpProblem:
    A: np.ndarray  # (K,)
    B: np.ndarray  # (K, K)
    L: np.ndarray  # (K,)
    strategy: str = ""
    S: np.ndarray | None = None  # quantization part of B, kept for inspection

    def __post_init__(self):
        A, B, L = (np.asarray(v, dtype=float) for v in (self.A, self.B, self.L))
        K = A.shape[0]
        if B.shape != (K, K) or L.shape != (K,):
            raise ValueError("inconsistent GP coefficient shapes")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(L))):
            raise GpInfeasibleError("non-finite GP coefficient (dark link carrying CSI?)")
        if np.any(A <= 0):
            raise GpInfeasibleError("A_k must be positive")
        if np.any(B < 0):
            raise GpInfeasibleError("B has negative entries")
        if np.any(L <= 0):
            raise GpInfeasibleError("L_k must be positive")

    @property
    def K(self) -> int:
        return len(self.A)

    def sinr(self, eta) -> np.ndarray:
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (self.K,))
        return self.A * eta / (self.B @ eta + self.L)

    def log_objective(self, eta) -> float:
        return float(np.sum(np.log(self.sinr(eta))))


@dataclass
class GpSolution:
    eta: np.ndarray
    t: np.ndarray
    objective: float          # sum_k log t_k
    kkt_residual: float
    constraint_residual: float  # max_k (t_k - SINR_k(eta_raw)), <= 0 when feasible
    iterations: int
    eta_raw: np.ndarray = None
    history: list = field(default_factory=list)

    def sinr(self, problem: GpProblem) -> np.ndarray:
        return problem.sinr(self.eta)

    def to_rows(self, problem: GpProblem):
        s = problem.sinr(self.eta)
        return [{"k": k, "eta": float(self.eta[k]), "t": float(self.t[k]), "sinr": float(s[k]),
                 "kkt_residual": self.kkt_residual, "constraint_residual": self.constraint_residual}
                for k in range(problem.K)]


# ---------------------------------------------------------------------------
# coefficients


def _quant_slope(plan, config: SystemConfig):
    """f_m = 1 / (2^{C_d,m / data_fraction} - 1); Q_d,m = f_m (rho_u beta_m . eta + N)."""
    C_d = np.asarray(plan.C_d, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(C_d > 0, 1.0 / np.expm1(np.log(2.0) * C_d / config.data_fraction), np.inf)


def _from_terms(terms: R.SinrBreakdown, gamma_like, beta, plan, config, strategy) -> GpProblem:
    # terms evaluated at eta = 1 give the per-unit-power coefficients directly
    f = _quant_slope(plan, config)
    with np.errstate(invalid="ignore"):
        fg = np.where(gamma_like > 0, f[:, None] * gamma_like, 0.0)  # (M, K)
    S = config.rho_u * fg.T @ np.asarray(beta, dtype=float)
    B = np.diag(terms.bu) + terms.iui + terms.thi + terms.rhi + S
    L = terms.rn + config.N * fg.sum(axis=0)
    return GpProblem(terms.ds.copy(), B, L, strategy, S)


def build_gp_cfe(beta, stats: EstimationStats, plan, config: SystemConfig) -> GpProblem:
    terms = R.cfe_terms(beta, stats, np.zeros(len(plan.C_m)), 1.0, config)
    return _from_terms(terms, stats.gamma, beta, plan, config, "CFE")


def build_gp_ecf(beta, stats: EstimationStats, plan, config: SystemConfig, bound: str = "UB") -> GpProblem:
    """ECF coefficients from the upper- or lower-bound terms.

    In the lower bound the CSI-quantization corrections scale with the
    interferer's power, so they land in B; a negative entry makes the instance
    unusable as a GP and raises GpInfeasibleError.
    """
    bound = bound.upper()
    zeros = np.zeros(len(plan.C_m))
    if bound == "UB":
        terms = R.ecf_ub_terms(beta, stats, zeros, 1.0, config)
    elif bound == "LB":
        terms = R.ecf_lb_terms(beta, stats, zeros, 1.0, config)
    else:
        raise ValueError("bound must be 'LB' or 'UB'")
    return _from_terms(terms, stats.gamma_prime, beta, plan, config, f"ECF-{bound}")


def build_gp(strategy: str, beta, stats, plan, config: SystemConfig) -> GpProblem:
    s = strategy.upper()
    if s == "CFE":
        return build_gp_cfe(beta, stats, plan, config)
    if s in ("ECF", "ECF-UB"):
        return build_gp_ecf(beta, stats, plan, config, "UB")
    if s == "ECF-LB":
        return build_gp_ecf(beta, stats, plan, config, "LB")
    raise ValueError(f"no GP formulation for {strategy}")


# ---------------------------------------------------------------------------
# solver


class _Constraints:
    """Log-sum-exp constraints g_k(z) <= 0 over z = (x, y), plus the box on x."""

    def __init__(self, p: GpProblem, lb: float):
        K = p.K
        self.K, self.lb = K, lb
        self.rows = []
        for k in range(K):
            a, b = [], []
            for j in range(K):
                if p.B[k, j] > 0:
                    v = np.zeros(2 * K)
                    v[j] += 1.0
                    v[k] -= 1.0
                    v[K + k] = 1.0
                    a.append(v)
                    b.append(np.log(p.B[k, j] / p.A[k]))
            v = np.zeros(2 * K)
            v[k] = -1.0
            v[K + k] = 1.0
            a.append(v)
            b.append(np.log(p.L[k] / p.A[k]))
            self.rows.append((np.array(a), np.array(b)))

    def values(self, z):
        g = np.array([logsumexp(a @ z + b) for a, b in self.rows])
        x = z[: self.K]
        return g, x, self.lb - x

    def barrier(self, z, w, obj_weights):
        """Value, gradient and Hessian of w * f0 - sum log(-g_i)."""
        K = self.K
        n = 2 * K
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        grad[K:] = -w * obj_weights
        val = -w * float(obj_weights @ z[K:])
        for a, b in self.rows:
            e = a @ z + b
            g = logsumexp(e)
            if g >= 0:
                return np.inf, None, None
            p = np.exp(e - g)
            dg = p @ a
            d2g = (a.T * p) @ a - np.outer(dg, dg)
            val -= np.log(-g)
            grad += dg / -g
            hess += d2g / -g + np.outer(dg, dg) / g**2
        x = z[:K]
        if np.any(x >= 0) or np.any(x <= self.lb):
            return np.inf, None, None
        u1, u2 = -x, x - self.lb
        val -= np.sum(np.log(u1)) + np.sum(np.log(u2))
        grad[:K] += 1.0 / u1 - 1.0 / u2
        hess[np.arange(K), np.arange(K)] += 1.0 / u1**2 + 1.0 / u2**2
        return val, grad, hess


def _newton(cons: _Constraints, z, w, obj_weights, max_iter=100, tol=1e-9):
    """Damped Newton on the barrier function.  Returns (z, iterations, ok)."""
    it = 0
    for it in range(1, max_iter + 1):
        val, grad, hess = cons.barrier(z, w, obj_weights)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        dec = float(-grad @ step)
        if dec / 2 <= tol:
            return z, it, True
        s = 1.0
        while cons.barrier(z + s * step, w, obj_weights)[0] > val - 0.25 * s * dec:
            s *= 0.5
            if s < 1e-12:
                # no representable decrease left: converged to round-off
                return z, it, dec < 1e-6 * max(1.0, abs(val)) ** 0.5
        z = z + s * step
    return z, it, False


def _reduced(problem: GpProblem, wts, x):
    """F(x) = sum_k w_k log SINR_k(e^x) with its gradient and Hessian.

    With every t_k at its SINR this is the GP objective; it is concave in x.
    """
    e = np.exp(x)
    Be = problem.B * e[None, :]               # B_kj e^{x_j}
    D = Be.sum(axis=1) + problem.L
    F = float(wts @ (np.log(problem.A) + x - np.log(D)))
    P = Be / D[:, None]
    grad = wts - wts @ P
    hess = -np.diag(wts @ P) + (P.T * wts) @ P
    return F, grad, hess


def _kkt(grad, x, lb):
    """Largest KKT violation of the box-constrained reduced problem.

    Free coordinates need zero gradient; at the upper bound the multiplier is
    grad_j and must be nonnegative, at the lower bound -grad_j must be.
    """
    at_ub = x >= -1e-12
    at_lb = x <= lb + 1e-12
    free = ~(at_ub | at_lb)
    r = np.zeros_like(grad)
    r[free] = np.abs(grad[free])
    r[at_ub] = np.maximum(0.0, -grad[at_ub])
    r[at_lb] = np.maximum(0.0, grad[at_lb])
    return float(r.max()) if r.size else 0.0


def _polish(problem: GpProblem, wts, x, lb, tol, max_iter=100):
    """Projected Newton on the reduced problem, started from the barrier iterate."""
    x = np.clip(x, lb, 0.0)
    it = 0
    for it in range(1, max_iter + 1):
        F, grad, hess = _reduced(problem, wts, x)
        if _kkt(grad, x, lb) <= tol * 1e-2:
            break
        # coordinates pinned at a bound with the gradient pushing outward stay put
        pinned = ((x >= -1e-12) & (grad >= 0)) | ((x <= lb + 1e-12) & (grad <= 0))
        free = ~pinned
        step = np.zeros_like(x)
        if free.any():
            H = hess[np.ix_(free, free)]
            try:
                step[free] = -np.linalg.solve(H - 1e-14 * np.eye(free.sum()), grad[free])
            except np.linalg.LinAlgError:
                step[free] = grad[free]
            if grad[free] @ step[free] <= 0:  # not an ascent direction; fall back to gradient
                step[free] = grad[free]
        s = 1.0
        r0 = _kkt(grad, x, lb)
        while True:
            xn = np.clip(x + s * step, lb, 0.0)
            Fn, gn, _ = _reduced(problem, wts, xn)
            # near the optimum F moves below round-off; then progress is judged by the residual
            if Fn > F or (Fn >= F - 1e-14 * abs(F) and _kkt(gn, xn, lb) < r0):
                break
            s *= 0.5
            if s < 1e-12:
                return x, it
        if np.array_equal(xn, x):
            break
        x = xn
    return x, it


def solve_gp(problem: GpProblem, tol: float = 1e-8, weights=None, eta0=None, max_outer: int = 60,
             mu: float = 8.0) -> GpSolution:
    """Maximize sum_k weights_k log t_k s.t. t_k <= SINR_k(eta), ETA_FLOOR <= eta <= 1.

    ``weights`` defaults to ones (the plain product-of-SINRs GP).  A barrier
    method on (log eta, log t) brings the duality gap under 1e-6; an active-set
    Newton polish then drives the KKT residual under ``tol``.
    """
    K = problem.K
    wts = np.ones(K) if weights is None else np.asarray(weights, dtype=float)
    lb = np.log(ETA_FLOOR)
    cons = _Constraints(problem, lb)
    eta = np.full(K, 0.999) if eta0 is None else np.clip(np.asarray(eta0, dtype=float), 2 * ETA_FLOOR, 0.999)
    t = 0.9 * problem.sinr(eta)
    z = np.concatenate([np.log(eta), np.log(t)])
    m = 3 * K
    w = 1.0
    total = 0
    history = []
    for _ in range(max_outer):
        z, it, ok = _newton(cons, z, w, wts)
        total += it
        history.append(float(np.sum(z[K:])))
        if not ok:
            log.debug("line search stalled at barrier weight %g", w)
        if m / w < 1e-6:
            break
        w *= mu
    else:
        raise GpConvergenceError("barrier method did not converge", best=np.exp(z[:K]))

    x, it = _polish(problem, wts, z[:K], lb, tol)
    total += it
    kkt = _kkt(_reduced(problem, wts, x)[1], x, lb)
    if kkt > tol:
        raise GpConvergenceError(f"KKT residual {kkt:.3g} above {tol:g}", best=np.exp(x))
    eta_raw = np.exp(x)
    t = problem.sinr(eta_raw)  # every SINR constraint is active at the optimum
    history.append(float(np.sum(np.log(t))))
    cres = float(np.max(t - problem.sinr(eta_raw)))
    eta = _round_small(problem, eta_raw)
    return GpSolution(eta, t, float(np.sum(np.log(t))), kkt, cres, total, eta_raw, history)


def _round_small(problem: GpProblem, eta_raw):
    eta = np.where(eta_raw < ROUND_BELOW, 0.0, eta_raw)
    if np.array_equal(eta, eta_raw):
        return eta
    if np.sum(np.log1p(problem.sinr(eta))) < np.sum(np.log1p(problem.sinr(eta_raw))):
        return eta_raw
    return eta


def solve_sse(problem: GpProblem, tol: float = 1e-8, rounds: int = 30) -> GpSolution:
    """Sum of log(1 + SINR) by successive GP approximations.

    At the current point, log(1 + s) >= a log s + const with a = s / (1 + s),
    tight at s.  Each round solves the weighted GP; the true objective cannot
    decrease from round to round, and the first round starts at full power.
    """
    eta = np.ones(problem.K)
    best = None
    f_prev = float(np.sum(np.log1p(problem.sinr(eta))))
    for _ in range(rounds):
        s = problem.sinr(eta)
        sol = solve_gp(problem, tol, weights=s / (1.0 + s), eta0=eta)
        f = float(np.sum(np.log1p(problem.sinr(sol.eta))))
        if best is not None and f < f_prev:
            break
        best, eta = sol, sol.eta_raw
        if abs(f - f_prev) <= 1e-10 * max(1.0, abs(f)):
            break
        f_prev = f
    return best


def grid_oracle(problem: GpProblem, n: int = 200, lo: float = 1e-3):
    """Brute-force best log-objective on an n x n grid (K = 2 only)."""
    if problem.K != 2:
        raise ValueError("grid oracle is for K = 2")
    g = np.geomspace(lo, 1.0, n)
    e1, e2 = np.meshgrid(g, g, indexing="ij")
    E = np.stack([e1.ravel(), e2.ravel()], axis=1)
    s = (problem.A * E) / (E @ problem.B.T + problem.L)
    obj = np.log(s).sum(axis=1)
    i = int(np.argmax(obj))
    return E[i], float(obj[i])
