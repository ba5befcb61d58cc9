"""Network geometry, three-slope path loss with log-normal shadowing, noise power."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import BOLTZMANN, T0_KELVIN, SystemConfig


@dataclass(frozen=True)
class Layout:
    ap_positions: np.ndarray  # (M, 2) meters
    ue_positions: np.ndarray  # (K, 2) meters
    D: float


@dataclass(frozen=True)
class LargeScaleMap:
    """Linear-scale large-scale fading ``beta[m, k]`` plus the pieces it was built from."""

    beta: np.ndarray  # (M, K), linear
    distance_m: np.ndarray | None = None
    pl_db: np.ndarray | None = None
    shadow_db: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2:
            raise ValueError("beta must be an M x K matrix")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise ValueError("large-scale coefficients must be finite and positive")

    @property
    def shape(self):
        return self.beta.shape


def place_nodes(config: SystemConfig, seed) -> Layout:
    """Drop M APs and K UEs uniformly on the square [0, D)^2."""
    if config.D <= 0:
        raise ValueError("D must be positive")
    rng = np.random.default_rng(seed)
    aps = rng.uniform(0.0, config.D, size=(config.M, 2))
    ues = rng.uniform(0.0, config.D, size=(config.K, 2))
    return Layout(aps, ues, float(config.D))


def wrapped_distance(a, b, D: float):
    """Euclidean distance on the torus of side D.  Broadcasts over leading axes."""
    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    delta = np.minimum(delta, D - delta)
    return np.sqrt(np.sum(delta**2, axis=-1))


def pairwise_distances(layout: Layout) -> np.ndarray:
    """(M, K) matrix of wrapped AP-UE distances."""
    return wrapped_distance(layout.ap_positions[:, None, :], layout.ue_positions[None, :, :], layout.D)


def hata_constant_db(config: SystemConfig) -> float:
    f = config.carrier_freq_mhz
    lf = np.log10(f)
    return float(
        46.3
        + 33.9 * lf
        - 13.82 * np.log10(config.h_ap_m)
        - (1.1 * lf - 0.7) * config.h_ue_m
        + (1.56 * lf - 0.8)
    )


def path_loss_db(d, config: SystemConfig):
    """Three-slope path loss in dB (a negative number) for distance(s) ``d`` in meters.

    The slopes are evaluated with distances in kilometres, which is the unit the
    Hata constant is calibrated for.  Branches: ``d <= d0`` flat, ``d0 < d <= d1``
    two-slope, ``d > d1`` exponent 3.5.
    """
    d_km = np.asarray(d, dtype=float) / 1000.0
    d0 = config.d0_m / 1000.0
    d1 = config.d1_m / 1000.0
    L = hata_constant_db(config)
    with np.errstate(divide="ignore"):
        far = -L - 35.0 * np.log10(d_km)
        mid = -L - 10.0 * np.log10(d1**1.5 * d_km**2)
    near = -L - 10.0 * np.log10(d1**1.5 * d0**2)
    out = np.where(d_km <= d0, near, np.where(d_km <= d1, mid, far))
    return out if out.ndim else float(out)


def large_scale(layout: Layout, config: SystemConfig, seed) -> LargeScaleMap:
    """beta_dB = PL_dB + sigma_sh * z with z i.i.d. real standard normal."""
    rng = np.random.default_rng(seed)
    dist = pairwise_distances(layout)
    pl = path_loss_db(dist, config)
    shadow = config.sigma_sh_db * rng.standard_normal(dist.shape)
    beta = 10.0 ** ((pl + shadow) / 10.0)
    return LargeScaleMap(beta=beta, distance_m=dist, pl_db=pl, shadow_db=shadow)


def noise_power(config: SystemConfig) -> float:
    if config.bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return config.bandwidth_hz * BOLTZMANN * T0_KELVIN * 10.0 ** (config.noise_figure_db / 10.0)


def make_scenario(config: SystemConfig, seed) -> tuple[Layout, LargeScaleMap]:
    """Layout and shadowed large-scale map from one seed (two independent sub-streams)."""
    geo_seed, shadow_seed = np.random.SeedSequence(seed).spawn(2)
    layout = place_nodes(config, geo_seed)
    return layout, large_scale(layout, config, shadow_seed)


def write_scenario_csv(layout: Layout, lsm: LargeScaleMap, path: str | Path) -> None:
    """One row per (m, k): positions, wrapped distance, PL_dB and linear beta."""
    dist = lsm.distance_m if lsm.distance_m is not None else pairwise_distances(layout)
    pl = lsm.pl_db if lsm.pl_db is not None else np.full(dist.shape, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "ap_x", "ap_y", "ue_x", "ue_y", "distance_m", "pl_db", "beta_linear"])
        M, K = lsm.beta.shape
        for m in range(M):
            for k in range(K):
                w.writerow([
                    m, k,
                    *(f"{v:.6f}" for v in layout.ap_positions[m]),
                    *(f"{v:.6f}" for v in layout.ue_positions[k]),
                    f"{dist[m, k]:.6f}", f"{pl[m, k]:.6f}", f"{lsm.beta[m, k]:.9e}",
                ])
