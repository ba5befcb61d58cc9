"""Rate-distortion test channels: fronthaul capacity <-> quantization-noise variance.

Capacities are in bits/s/Hz and all logarithms are base 2.  A zero capacity maps
to an infinite noise variance (``math.inf``), the "dark link" state that
downstream SINR code short-circuits on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DARK = np.inf


@dataclass(frozen=True)
class TestChannelSpec:
    signal_power: float
    capacity: float
    samples_fraction: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if np.any(np.asarray(self.capacity) < 0):
            raise ValueError("capacity must be nonnegative")
        if np.any(np.asarray(self.signal_power) < 0):
            raise ValueError("signal power must be nonnegative")
        if not 0 < self.samples_fraction <= 1:
            raise ValueError("samples_fraction must lie in (0, 1]")


def distortion_additive(spec: TestChannelSpec):
    """Invert ``C = f * log2(1 + P / Q)``: ``Q = P / (2**(C / f) - 1)``.

    Broadcasts over array-valued power/capacity; zero capacity gives ``inf``.
    """
    P = np.asarray(spec.signal_power, dtype=float)
    C = np.asarray(spec.capacity, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        denom = np.expm1(np.log(2.0) * C / spec.samples_fraction)
        Q = np.where(C > 0, P / np.where(C > 0, denom, 1.0), DARK)
    return Q if Q.ndim else float(Q)


def capacity_additive(signal_power, Q, samples_fraction: float):
    """Forward map of :func:`distortion_additive`."""
    P = np.asarray(signal_power, dtype=float)
    Q = np.asarray(Q, dtype=float)
    with np.errstate(divide="ignore"):
        out = samples_fraction * np.log2(1.0 + P / Q)
    return out if out.ndim else float(out)


def distortion_subtractive(estimate_variance, capacity_share, T: int):
    """Invert ``C = (1/T) * log2(gamma / Q)`` for the CSI test channel.

    This channel subtracts: the forwarded estimate keeps ``gamma - Q``.
    A zero share returns ``Q = gamma``, i.e. nothing is forwarded.
    """
    gamma = np.asarray(estimate_variance, dtype=float)
    share = np.asarray(capacity_share, dtype=float)
    if np.any(share < 0):
        raise ValueError("capacity share must be nonnegative")
    Q = gamma * np.exp2(-T * share)
    return Q if Q.ndim else float(Q)


def capacity_subtractive(estimate_variance, Q, T: int):
    out = np.log2(np.asarray(estimate_variance, dtype=float) / np.asarray(Q, dtype=float)) / T
    return out if np.ndim(out) else float(out)


def real_source_distortion(P, C):
    """Classical real Gaussian source result ``Q* = P / (2**(2C) - 1)``.

    Reference only; the system paths use the complex-symbol forms above.
    """
    C = np.asarray(C, dtype=float)
    with np.errstate(divide="ignore"):
        Q = np.where(C > 0, np.asarray(P, dtype=float) / np.expm1(2.0 * np.log(2.0) * C), DARK)
    return Q if Q.ndim else float(Q)


def is_dark(Q) -> np.ndarray:
    return np.isinf(np.asarray(Q))
