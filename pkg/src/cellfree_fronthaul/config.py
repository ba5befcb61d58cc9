"""Scalar system parameters and the plain-text key/value config format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

BOLTZMANN = 1.381e-23  # J/K
T0_KELVIN = 290.0


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass(frozen=True)
class SystemConfig:
    """All scalar model parameters.

    Powers are in watts, distances in meters.  ``tau`` defaults to ``K`` and
    ``N`` (noise power) defaults to ``B * k_B * T0 * NF``.
    """

    M: int = 50
    K: int = 5
    T: int = 200
    tau: int | None = None
    rho_p: float = 0.1
    rho_u: float = 0.1
    xi_t: float = 1.0
    xi_r: float = 1.0
    N: float | None = None
    D: float = 1000.0
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    carrier_freq_mhz: float = 1900.0
    h_ap_m: float = 15.0
    h_ue_m: float = 1.65
    d0_m: float = 10.0
    d1_m: float = 50.0
    sigma_sh_db: float = 8.0
    # power-consumption model for energy efficiency
    p_ap_w: float = 0.2
    p_bh_w_per_gbps: float = 0.25

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(self, "tau", self.K)
        if self.N is None:
            nf = 10.0 ** (self.noise_figure_db / 10.0)
            object.__setattr__(self, "N", self.bandwidth_hz * BOLTZMANN * T0_KELVIN * nf)
        self.validate()

    def validate(self):
        if not (0.0 <= self.xi_t <= 1.0 and 0.0 <= self.xi_r <= 1.0):
            raise ConfigError("hardware qualities must lie in [0, 1]")
        if self.M < 1 or self.K < 1:
            raise ConfigError("need M >= 1 and K >= 1")
        if self.tau != self.K:
            raise ConfigError(f"orthogonal pilots need tau == K (got tau={self.tau}, K={self.K})")
        if not 1 <= self.tau < self.T:
            raise ConfigError("need 1 <= tau < T")
        if self.rho_p <= 0 or self.rho_u <= 0 or self.N <= 0:
            raise ConfigError("rho_p, rho_u and N must be positive")
        if self.D <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("D and bandwidth must be positive")

    @property
    def data_fraction(self) -> float:
        """Share of the coherence interval carrying data, (T - tau) / T."""
        return (self.T - self.tau) / self.T

    def replace(self, **changes) -> "SystemConfig":
        # Derived fields are recomputed unless explicitly overridden.
        if "K" in changes and "tau" not in changes:
            changes["tau"] = None
        if ({"bandwidth_hz", "noise_figure_db"} & changes.keys()) and "N" not in changes:
            changes["N"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "SystemConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key], raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "SystemConfig":
        return cls.from_dict(read_keyvalue(path))


def _coerce(field, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text.lower() in {"none", ""}:
        return None
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    try:
        if kind.startswith("int"):
            value = float(text)
            if not value.is_integer():
                raise ConfigError(f"{field.name} must be an integer, got {text!r}")
            return int(value)
        value = float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {field.name}={text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"{field.name} must be finite")
    return value


def read_keyvalue(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def write_keyvalue(config: SystemConfig, path: str | Path) -> None:
    lines = [f"{key} = {value}" for key, value in config.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")


def paper_scale(**overrides) -> SystemConfig:
    """M=200 APs and K=20 UEs; otherwise the default numerical setup."""
    return SystemConfig(**{"M": 200, "K": 20, **overrides})


def desk_scale(**overrides) -> SystemConfig:
    return SystemConfig(**{"M": 50, "K": 5, **overrides})
