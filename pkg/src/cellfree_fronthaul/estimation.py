"""LMMSE channel-estimation statistics built from large-scale fading only.

Two placements:

* at the CU from quantized pilots (``cfe_stats``), where a per-AP pilot
  quantization variance enters the denominator;
* at the AP (``ecf_stats``), optionally followed by subtractive CSI
  quantization (``apply_csi_quantization``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class EstimationStats:
    lam: np.ndarray          # (M, K) LMMSE scale coefficients
    gamma: np.ndarray        # (M, K) estimate variances
    gamma_prime: np.ndarray  # (M, K) variance of the CSI the CU actually holds
    q_p: np.ndarray          # (M, K) pilot (CFE) or CSI (ECF) quantization variance
    placement: str           # "cu" or "ap"

    @property
    def shape(self):
        return self.gamma.shape


def pilot_gain(config: SystemConfig) -> float:
    """sqrt(xi_r * xi_t * tau * rho_p), the effective pilot amplitude."""
    return float(np.sqrt(config.xi_r * config.xi_t * config.tau * config.rho_p))


def _lmmse(beta, config: SystemConfig, extra):
    beta = np.asarray(beta, dtype=float)
    c = pilot_gain(config)
    denom = (
        c**2 * beta
        + config.rho_p * (1.0 - config.xi_r * config.xi_t) * beta.sum(axis=1, keepdims=True)
        + config.N
        + extra
    )
    with np.errstate(invalid="ignore"):
        lam = np.where(np.isinf(denom), 0.0, c * beta / denom)
    gamma = c * beta * lam
    return lam, gamma


def cfe_stats(beta, Q_p_m, config: SystemConfig) -> EstimationStats:
    """Estimation at the CU after element-wise pilot quantization.

    ``Q_p_m`` is one variance per AP (every pilot entry is quantized alike);
    the denominator carries ``(1/tau) * sum_k' Q_p,mk' = Q_p,m``.
    """
    beta = np.asarray(beta, dtype=float)
    Q = np.broadcast_to(np.asarray(Q_p_m, dtype=float).reshape(-1), (beta.shape[0],))
    if np.any(Q < 0):
        raise ValueError("quantization variance must be nonnegative")
    q_mk = np.repeat(Q[:, None], beta.shape[1], axis=1)
    extra = q_mk.sum(axis=1, keepdims=True) / config.tau
    lam, gamma = _lmmse(beta, config, extra)
    return EstimationStats(lam, gamma, gamma.copy(), q_mk, "cu")


def ecf_stats(beta, config: SystemConfig) -> EstimationStats:
    """Estimation at the AP from unquantized pilots."""
    beta = np.asarray(beta, dtype=float)
    lam, gamma = _lmmse(beta, config, 0.0)
    return EstimationStats(lam, gamma, gamma.copy(), np.zeros_like(gamma), "ap")


def apply_csi_quantization(stats: EstimationStats, q_p_mk, rtol: float = 1e-12) -> EstimationStats:
    """Subtractive test channel: the CU's CSI has variance ``gamma - Q_p``."""
    q = np.broadcast_to(np.asarray(q_p_mk, dtype=float), stats.gamma.shape).copy()
    if np.any(q < 0):
        raise ValueError("CSI quantization variance must be nonnegative")
    if np.any(q > stats.gamma * (1.0 + rtol)):
        raise ValueError("CSI quantization variance exceeds the estimate variance")
    q = np.minimum(q, stats.gamma)
    return replace(stats, gamma_prime=stats.gamma - q, q_p=q)


def high_snr_gamma(beta, config: SystemConfig) -> np.ndarray:
    """Limit of the AP-side estimate variance as rho_p -> infinity."""
    beta = np.asarray(beta, dtype=float)
    u = config.xi_r * config.xi_t
    theta1 = u * config.tau * beta + (1.0 - u) * beta.sum(axis=1, keepdims=True)
    return u * config.tau * beta**2 / theta1


def write_stats_csv(stats: EstimationStats, path: str | Path) -> None:
    M, K = stats.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "placement", "lambda", "gamma", "gamma_prime", "q_p"])
        for m in range(M):
            for k in range(K):
                w.writerow([m, k, stats.placement, f"{stats.lam[m, k]:.9e}", f"{stats.gamma[m, k]:.9e}",
                            f"{stats.gamma_prime[m, k]:.9e}", f"{stats.q_p[m, k]:.9e}"])
