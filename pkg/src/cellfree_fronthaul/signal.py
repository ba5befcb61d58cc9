"""Signal-level generative model: channels, impairments, pilot and data reception.

Every random source draws from its own labeled generator (see ``streams``), so a
single source can be switched off or re-seeded without perturbing the others.
Arrays may carry any number of leading batch axes; the trailing axes are
``(M, K)`` for channels, ``(M, tau)`` for received pilots and ``(M,)`` for
received data samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

STREAM_LABELS = (
    "channel",
    "pilot_tx",
    "pilot_rx",
    "pilot_noise",
    "pilot_quant",
    "symbols",
    "data_tx",
    "data_rx",
    "data_noise",
    "data_quant",
    "csi_quant",
    "product_quant",
)


def streams(seed) -> dict[str, np.random.Generator]:
    """Independent generators keyed by noise source."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(len(STREAM_LABELS))
    return {label: np.random.default_rng(child) for label, child in zip(STREAM_LABELS, children)}


def complex_normal(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly symmetric CN(0, var); ``var`` broadcasts against ``shape``."""
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return np.sqrt(np.asarray(var, dtype=float) / 2.0) * z


@dataclass(frozen=True)
class PilotBook:
    phi: np.ndarray  # (tau, K), orthonormal columns

    @property
    def gram(self) -> np.ndarray:
        return self.phi.conj().T @ self.phi


@dataclass(frozen=True)
class ChannelRealization:
    g: np.ndarray  # (..., M, K)


@dataclass(frozen=True)
class ReceivedPilot:
    y_p: np.ndarray  # (..., M, tau)


@dataclass(frozen=True)
class ReceivedData:
    y: np.ndarray    # (..., M)
    s: np.ndarray    # (..., K) transmitted symbols
    w_t: np.ndarray  # (..., K) UE distortion
    w_r: np.ndarray  # (..., M) AP distortion
    n: np.ndarray    # (..., M) thermal noise


def make_pilots(tau: int, K: int) -> PilotBook:
    """Unitary DFT pilots; requires tau == K."""
    if tau != K:
        raise ValueError(f"orthogonal pilots need tau == K (got tau={tau}, K={K})")
    idx = np.arange(tau)
    phi = np.exp(-2j * np.pi * np.outer(idx, idx) / tau) / np.sqrt(tau)
    return PilotBook(phi)


def draw_channels(beta, seed=None, draws: int | None = None, rng=None) -> ChannelRealization:
    """g = sqrt(beta) * h with h i.i.d. CN(0, 1)."""
    beta = np.asarray(getattr(beta, "beta", beta), dtype=float)
    rng = rng if rng is not None else np.random.default_rng(seed)
    shape = beta.shape if draws is None else (draws, *beta.shape)
    return ChannelRealization(np.sqrt(beta) * complex_normal(rng, shape))


def distort(x, xi: float, rng: np.random.Generator, power=None):
    """sqrt(xi) * x + z with z ~ CN(0, (1 - xi) * power), independent of x.

    ``power`` is E|x|^2; when omitted it is estimated from ``x`` itself.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError("quality factor must lie in [0, 1]")
    x = np.asarray(x)
    if power is None:
        power = np.mean(np.abs(x) ** 2)
    if xi == 1.0:
        return x.copy()
    return np.sqrt(xi) * x + complex_normal(rng, x.shape, (1.0 - xi) * np.asarray(power))


def receive_pilot(ch: ChannelRealization, pilots: PilotBook, config: SystemConfig, rngs: dict,
                  components: bool = False):
    """Pilot observation at every AP.

    The UE-side distortion is a property of the transmitted signal, so one draw
    per UE is shared by all APs.  The AP-side distortion variance is
    conditional on the realized channel gains.
    """
    g = ch.g
    batch = g.shape[:-2]
    M, K = g.shape[-2:]
    tau = pilots.phi.shape[0]
    rho_p, xi_t, xi_r = config.rho_p, config.xi_t, config.xi_r

    z_t = complex_normal(rngs["pilot_tx"], (*batch, K, tau), rho_p * (1.0 - xi_t))
    tx = np.sqrt(tau * rho_p * xi_t) * pilots.phi.T + z_t  # (..., K, tau)
    clean = np.sqrt(xi_r) * (g @ tx)
    zr_var = rho_p * (1.0 - xi_r) * np.sum(np.abs(g) ** 2, axis=-1, keepdims=True)
    z_r = complex_normal(rngs["pilot_rx"], (*batch, M, tau), zr_var)
    n = complex_normal(rngs["pilot_noise"], (*batch, M, tau), config.N)
    out = ReceivedPilot(clean + z_r + n)
    if components:
        return out, {"z_t": z_t, "z_r": z_r, "n": n}
    return out


def project_pilots(y_p: np.ndarray, pilots: PilotBook) -> np.ndarray:
    """phi_k^H y_p,m for every (m, k)."""
    return y_p @ pilots.phi.conj()


def receive_data(ch: ChannelRealization, eta, config: SystemConfig, rngs: dict) -> ReceivedData:
    """One data symbol per UE, superimposed at every AP."""
    g = ch.g
    batch = g.shape[:-2]
    M, K = g.shape[-2:]
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (K,))
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("power controls must lie in [0, 1]")
    rho_u, xi_t, xi_r = config.rho_u, config.xi_t, config.xi_r

    s = complex_normal(rngs["symbols"], (*batch, K))
    w_t = complex_normal(rngs["data_tx"], (*batch, K), rho_u * eta * (1.0 - xi_t))
    tx = np.sqrt(eta * rho_u * xi_t) * s + w_t
    clean = np.sqrt(xi_r) * np.einsum("...mk,...k->...m", g, tx)
    wr_var = rho_u * (1.0 - xi_r) * np.sum(eta * np.abs(g) ** 2, axis=-1)
    w_r = complex_normal(rngs["data_rx"], (*batch, M), wr_var)
    n = complex_normal(rngs["data_noise"], (*batch, M), config.N)
    return ReceivedData(clean + w_r + n, s, w_t, w_r, n)


def add_quantization(x: np.ndarray, Q, rng: np.random.Generator) -> np.ndarray:
    """Additive test channel x + q, q ~ CN(0, Q).  A dark link (Q = inf) is rejected."""
    Q = np.asarray(Q, dtype=float)
    if np.any(np.isinf(Q)):
        raise ValueError("cannot simulate a dark fronthaul link")
    if not np.any(Q):
        return x
    return x + complex_normal(rng, x.shape, Q)
