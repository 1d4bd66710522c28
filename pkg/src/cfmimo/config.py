"""Scenario parameters for the uplink simulator.

Defaults follow a 3GPP Urban Microcell deployment: 20 MHz bandwidth,
-94 dBm noise floor, 100 mW per UE, 10 m AP/UE height difference.
All powers are linear (watts), distances in meters.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

AP_LAYOUTS = ("grid", "uniform-random")


class ConfigError(ValueError):
    """Raised when a configuration violates a scenario invariant."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    L: int = 100
    K: int = 40
    N: int = 4
    tau_p: int = 10
    tau_c: int = 200
    area_side: float = 2000.0
    ap_layout: str = "uniform-random"
    uplink_power: float = 0.1
    noise_power: float = field(default_factory=lambda: dbm_to_watt(-94.0))
    asd_deg: float = 15.0
    antenna_spacing: float = 0.5
    ap_height_delta: float = 10.0
    shadow_std_db: float = 4.0
    pathloss_intercept_db: float = -30.5
    pathloss_exponent_db: float = 36.7
    seed: int = 0
    n_setups: int = 50
    n_realizations: int = 300

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("L", "K", "N", "tau_p", "tau_c", "n_setups", "n_realizations"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not self.tau_p < self.tau_c:
            raise ConfigError(f"need tau_p < tau_c, got tau_p={self.tau_p}, tau_c={self.tau_c}")
        if self.area_side <= 0:
            raise ConfigError("area_side must be positive")
        if self.ap_layout not in AP_LAYOUTS:
            raise ConfigError(f"ap_layout must be one of {AP_LAYOUTS}, got {self.ap_layout!r}")
        if self.uplink_power <= 0 or self.noise_power <= 0:
            raise ConfigError("uplink_power and noise_power must be positive")
        if self.asd_deg < 0 or self.antenna_spacing < 0 or self.shadow_std_db < 0:
            raise ConfigError("asd_deg, antenna_spacing and shadow_std_db must be nonnegative")
        if self.ap_height_delta < 0:
            raise ConfigError("ap_height_delta must be nonnegative")

    @property
    def tau_d(self) -> int:
        return self.tau_c - self.tau_p

    @property
    def prelog(self) -> float:
        return self.tau_d / self.tau_c

    def replace(self, **changes: Any) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown network parameters: {sorted(unknown)}")
        return cls(**dict(data))
