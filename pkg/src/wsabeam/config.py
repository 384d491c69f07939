"""System-level parameters shared by every stage of the simulator.

All core computations work in SI units (Hz, meters, watts); dBm conversion
happens only at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigurationError

SPEED_OF_LIGHT = 299792458.0
BOLTZMANN = 1.380649e-23
REFERENCE_TEMPERATURE_K = 290.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(watts * 1e3)


def thermal_noise_watts(bandwidth_hz: float, noise_figure_db: float = 0.0) -> float:
    """Thermal noise floor k_B*T0*B at 290 K with the given noise figure."""
    return BOLTZMANN * REFERENCE_TEMPERATURE_K * bandwidth_hz * 10.0 ** (noise_figure_db / 10.0)


def is_perfect_square(n: int) -> bool:
    if n < 1:
        return False
    r = math.isqrt(n)
    return r * r == n


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of one downlink deployment.

    The base station carries ``num_tx_antennas`` antennas split into
    ``num_subarrays`` square subarrays whose reference antennas sit
    ``subarray_spacing_m`` apart edge to edge; every user carries one
    compact square array of ``num_rx_antennas`` antennas.
    """

    carrier_frequency_hz: float = 300e9
    bandwidth_hz: float = 5e9
    num_tx_antennas: int = 1024
    num_rx_antennas: int = 16
    num_subarrays: int = 4
    subarray_spacing_m: float = 0.0
    intra_spacing_m: float | None = None  # None -> half wavelength
    num_users: int = 20
    streams_per_user: int = 1
    tx_rf_chains: int = 20
    rx_rf_chains: int = 1
    total_power_w: float = 0.1
    noise_power_w: float | None = None  # None -> thermal floor over bandwidth
    aperture_limit_m: float = 1.0
    bs_height_m: float = 20.0
    user_height_m: float = 20.0
    num_paths: int = 2
    rng_seed: int = 0

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def intra_spacing(self) -> float:
        if self.intra_spacing_m is not None:
            return self.intra_spacing_m
        return self.wavelength_m / 2.0

    @property
    def noise_power(self) -> float:
        if self.noise_power_w is not None:
            return self.noise_power_w
        return thermal_noise_watts(self.bandwidth_hz)

    def validate(self) -> list[str]:
        """Return every violated invariant; empty list means runnable."""
        findings = []
        if self.carrier_frequency_hz <= 0:
            findings.append("carrier_frequency_hz must be positive")
        if not is_perfect_square(self.num_tx_antennas):
            findings.append("num_tx_antennas must be a perfect square")
        if not is_perfect_square(self.num_rx_antennas):
            findings.append("num_rx_antennas must be a perfect square")
        if not is_perfect_square(self.num_subarrays):
            findings.append("num_subarrays must be a perfect square")
        if self.num_subarrays > self.num_tx_antennas:
            findings.append("num_subarrays cannot exceed num_tx_antennas")
        elif self.num_tx_antennas % self.num_subarrays != 0:
            findings.append("num_subarrays must divide num_tx_antennas")
        elif not is_perfect_square(self.num_tx_antennas // self.num_subarrays):
            findings.append("antennas per subarray must form a square grid")
        if self.num_users * self.streams_per_user != self.tx_rf_chains:
            findings.append(
                "num_users * streams_per_user must equal tx_rf_chains "
                f"({self.num_users}*{self.streams_per_user} != {self.tx_rf_chains})"
            )
        if self.streams_per_user > self.rx_rf_chains:
            findings.append("streams_per_user cannot exceed rx_rf_chains")
        if self.rx_rf_chains > self.num_rx_antennas:
            findings.append("rx_rf_chains cannot exceed num_rx_antennas")
        if self.tx_rf_chains > self.num_tx_antennas:
            findings.append("tx_rf_chains cannot exceed num_tx_antennas")
        if self.total_power_w <= 0:
            findings.append("total_power_w must be positive")
        if self.noise_power_w is not None and self.noise_power_w <= 0:
            findings.append("noise_power_w must be positive when set")
        if self.bandwidth_hz <= 0:
            findings.append("bandwidth_hz must be positive")
        if self.subarray_spacing_m < 0:
            findings.append("subarray_spacing_m must be non-negative")
        if self.intra_spacing_m is not None and self.intra_spacing_m <= 0:
            findings.append("intra_spacing_m must be positive when set")
        if self.aperture_limit_m <= 0:
            findings.append("aperture_limit_m must be positive")
        if self.num_paths < 1:
            findings.append("num_paths must be at least 1")
        return findings

    def require_valid(self) -> "SystemConfig":
        findings = self.validate()
        if findings:
            raise ConfigurationError("; ".join(findings))
        return self

    def with_spacing(self, subarray_spacing_m: float) -> "SystemConfig":
        return replace(self, subarray_spacing_m=subarray_spacing_m)
