"""Steering vectors, per-subarray planar blocks, and assembled per-user channels.

Each subarray sees every user in its own far field, so one planar-wave
rank-one block per (path, subarray); the wide reference grid makes the
blocks differ in range and angle, which is where the extra channel rank
comes from.  Steering entries are unit modulus with no 1/sqrt(N)
scaling; all normalization lives in the precoder constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .errors import AssemblyError, ConfigurationError
from .geometry import (
    ArrayGeometry,
    SubarrayUserGeometry,
    UserPlacement,
    build_wsa_geometry,
    subarray_user_geometry,
)

RANK_THRESHOLD = 1e-10


def upa_steering_vector(n_x: int, n_z: int, u_x: float, u_z: float,
                        wavelength_m: float, spacing_m: float) -> np.ndarray:
    """Planar-array response for direction cosines (u_x, u_z).

    Entry for grid index (m, n) is exp(j*(2*pi/lambda)*d_a*(m*u_x + n*u_z)),
    flattened as m*n_z + n to match the antenna ordering in ArrayGeometry.
    """
    coeff = 2.0 * np.pi / wavelength_m * spacing_m
    mm = np.arange(n_x)[:, None]
    nn = np.arange(n_z)[None, :]
    return np.exp(1j * coeff * (mm * u_x + nn * u_z)).reshape(n_x * n_z)


def numerical_rank(singular_values: np.ndarray, threshold: float = RANK_THRESHOLD) -> int:
    """Count singular values above threshold * largest."""
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > threshold * s[0]))


@dataclass(frozen=True)
class PathComponent:
    """One propagation path of one user.

    ``geometry`` holds the BS-side last-hop ranges and departure cosines
    per subarray; for scattered paths the ranges already include the
    user-to-scatterer leg, so they are total path lengths.  ``rx_u_x`` /
    ``rx_u_z`` are the arrival direction cosines at the user's array,
    one entry per subarray.
    """

    gain: float
    is_los: bool
    geometry: SubarrayUserGeometry
    rx_u_x: np.ndarray
    rx_u_z: np.ndarray
    scatterer: np.ndarray | None = None


@dataclass(frozen=True)
class ChannelRealization:
    """All per-user channel matrices of one Monte-Carlo drop."""

    channels: np.ndarray  # (U, N_r, N_t) complex
    paths: list
    config: SystemConfig
    geometry: ArrayGeometry
    placement: UserPlacement
    rng_seed: object = None

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]


def subarray_channel(path: PathComponent, k: int, config: SystemConfig) -> np.ndarray:
    """Rank-one block of one path between the user and subarray k."""
    lam = config.wavelength_m
    d_a = config.intra_spacing
    n_t_side = int(round(math.sqrt(config.num_tx_antennas / config.num_subarrays)))
    n_r_side = int(round(math.sqrt(config.num_rx_antennas)))
    a_t = upa_steering_vector(n_t_side, n_t_side, path.geometry.u_x[k],
                              path.geometry.u_z[k], lam, d_a)
    a_r = upa_steering_vector(n_r_side, n_r_side, path.rx_u_x[k],
                              path.rx_u_z[k], lam, d_a)
    phase = np.exp(-2j * np.pi / lam * path.geometry.distances[k])
    return path.gain * phase * np.outer(a_r, a_t.conj())


def assemble_cnff_channel(paths: list[PathComponent], config: SystemConfig) -> np.ndarray:
    """Per-user channel: blocks concatenated across subarrays, summed over paths."""
    k = config.num_subarrays
    n_r = config.num_rx_antennas
    n_t = config.num_tx_antennas
    width = n_t // k
    h = np.zeros((n_r, n_t), dtype=np.complex128)
    for path in paths:
        if path.geometry.distances.shape[0] != k:
            raise AssemblyError(
                f"path carries {path.geometry.distances.shape[0]} subarray entries, "
                f"geometry has {k}"
            )
        for j in range(k):
            block = subarray_channel(path, j, config)
            if block.shape != (n_r, width):
                raise AssemblyError(
                    f"block {j} has shape {block.shape}, expected {(n_r, width)}"
                )
            h[:, j * width:(j + 1) * width] += block
    return h


def receive_steering_matrix(geometry: ArrayGeometry, user: np.ndarray,
                            config: SystemConfig) -> np.ndarray:
    """Columns a_r^{uk}: the user-side response toward each subarray (N_r x K)."""
    geo = subarray_user_geometry(geometry, user)
    n_r_side = int(round(math.sqrt(config.num_rx_antennas)))
    cols = [
        upa_steering_vector(n_r_side, n_r_side, geo.u_x[k], geo.u_z[k],
                            config.wavelength_m, config.intra_spacing)
        for k in range(geometry.num_subarrays)
    ]
    return np.stack(cols, axis=1)


def free_space_amplitude(distance_m: float, wavelength_m: float) -> float:
    """Friis amplitude lambda / (4*pi*D)."""
    return wavelength_m / (4.0 * np.pi * distance_m)


@dataclass(frozen=True)
class ScenarioPolicy:
    """How users (and scatterers) are placed for one drop.

    Kinds: ``same-azimuth-line`` spreads users along one azimuth between
    range_min and range_max; ``distinct-azimuths`` spreads azimuths
    evenly across the sector at a common range; ``sector`` draws both
    angle and range uniformly; ``explicit`` uses the given positions.
    """

    kind: str = "sector"
    azimuth_rad: float = 0.0
    sector_angle_rad: float = 2.0 * math.pi / 3.0
    range_min_m: float = 1.0
    range_max_m: float = 20.0
    range_m: float | None = None
    positions: np.ndarray | None = None
    three_d: bool = False

    KINDS = ("same-azimuth-line", "distinct-azimuths", "sector", "explicit")

    def validate(self) -> list[str]:
        findings = []
        if self.kind not in self.KINDS:
            findings.append(f"unknown scenario policy kind {self.kind!r}")
        if self.kind != "explicit":
            if self.range_min_m <= 0 or self.range_max_m <= 0:
                findings.append("scenario ranges must be positive")
            if self.range_min_m > self.range_max_m:
                findings.append("range_min_m must not exceed range_max_m")
        if self.kind == "explicit" and self.positions is None:
            findings.append("explicit policy requires positions")
        if self.kind in ("distinct-azimuths", "sector") and self.sector_angle_rad <= 0:
            findings.append("sector_angle_rad must be positive")
        return findings


def _position(azimuth: float, horizontal_range: float, height: float) -> np.ndarray:
    return np.array([
        horizontal_range * math.sin(azimuth),
        horizontal_range * math.cos(azimuth),
        height,
    ])


def place_users(config: SystemConfig, policy: ScenarioPolicy,
                rng: np.random.Generator) -> UserPlacement:
    findings = policy.validate()
    if findings:
        raise ConfigurationError("; ".join(findings))
    u = config.num_users
    height = config.user_height_m if policy.three_d else config.bs_height_m
    if policy.kind == "explicit":
        positions = np.asarray(policy.positions, dtype=float).reshape(u, 3)
    elif policy.kind == "same-azimuth-line":
        ranges = np.linspace(policy.range_min_m, policy.range_max_m, u)
        positions = np.stack([_position(policy.azimuth_rad, r, height) for r in ranges])
    elif policy.kind == "distinct-azimuths":
        half = policy.sector_angle_rad / 2.0
        azimuths = (np.linspace(-half, half, u) if u > 1 else np.array([0.0]))
        r = policy.range_m if policy.range_m is not None else 0.5 * (
            policy.range_min_m + policy.range_max_m)
        positions = np.stack([_position(a, r, height) for a in azimuths])
    elif policy.kind == "sector":
        half = policy.sector_angle_rad / 2.0
        azimuths = rng.uniform(-half, half, size=u)
        ranges = rng.uniform(policy.range_min_m, policy.range_max_m, size=u)
        positions = np.stack([
            _position(a, r, height) for a, r in zip(azimuths, ranges)
        ])
    else:  # pragma: no cover - validate() already rejected
        raise ConfigurationError(f"unknown policy kind {policy.kind!r}")
    is_2d = np.isclose(positions[:, 2], config.bs_height_m)
    positions.setflags(write=False)
    return UserPlacement(positions=positions, is_2d=is_2d)


def _los_path(geometry: ArrayGeometry, user: np.ndarray, config: SystemConfig) -> PathComponent:
    geo = subarray_user_geometry(geometry, user)
    gain = free_space_amplitude(geo.distances[0], config.wavelength_m)
    # Shared-cosine convention: the arrival cosines at the user equal the
    # departure cosines (both arrays mirror their intra offsets).
    return PathComponent(gain=gain, is_los=True, geometry=geo,
                         rx_u_x=geo.u_x.copy(), rx_u_z=geo.u_z.copy())


def _nlos_path(geometry: ArrayGeometry, user: np.ndarray, config: SystemConfig,
               policy: ScenarioPolicy, rng: np.random.Generator) -> PathComponent:
    half = policy.sector_angle_rad / 2.0 if policy.kind in ("distinct-azimuths", "sector") \
        else math.pi / 3.0
    r_lo = policy.range_min_m if policy.kind != "explicit" else 1.0
    r_hi = policy.range_max_m if policy.kind != "explicit" else 20.0
    azimuth = rng.uniform(-half, half)
    hrange = rng.uniform(r_lo, r_hi)
    scatterer = _position(azimuth, hrange, user[2])
    geo_s = subarray_user_geometry(geometry, scatterer)
    user_leg = float(np.linalg.norm(user - scatterer))
    if user_leg < 1e-9:
        user_leg = 1e-9
    total = geo_s.distances + user_leg
    path_geo = SubarrayUserGeometry(
        distances=total, u_x=geo_s.u_x, u_z=geo_s.u_z,
        azimuth=geo_s.azimuth, elevation=geo_s.elevation,
    )
    reflection_db = rng.uniform(-15.0, -10.0)
    gain = free_space_amplitude(total[0], config.wavelength_m) * 10.0 ** (reflection_db / 20.0)
    # Arrival direction at the user: uniform over the hemisphere facing the BS.
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    if v[1] > 0:
        v[1] = -v[1]
    k = geometry.num_subarrays
    return PathComponent(gain=gain, is_los=False, geometry=path_geo,
                         rx_u_x=np.full(k, v[0]), rx_u_z=np.full(k, v[2]),
                         scatterer=scatterer)


def generate_scenario(config: SystemConfig, policy: ScenarioPolicy,
                      rng: np.random.Generator,
                      geometry: ArrayGeometry | None = None,
                      seed_label=None) -> ChannelRealization:
    """Place users, draw paths, and assemble every per-user channel.

    Deterministic given the generator state; independent drops should use
    independent generators derived from (master seed, drop index).
    """
    if geometry is None:
        geometry = build_wsa_geometry(config)
    placement = place_users(config, policy, rng)
    per_user_paths = []
    channels = np.zeros(
        (config.num_users, config.num_rx_antennas, config.num_tx_antennas),
        dtype=np.complex128,
    )
    for u in range(config.num_users):
        paths = [_los_path(geometry, placement.positions[u], config)]
        for _ in range(config.num_paths - 1):
            paths.append(_nlos_path(geometry, placement.positions[u], config, policy, rng))
        per_user_paths.append(paths)
        channels[u] = assemble_cnff_channel(paths, config)
    channels.setflags(write=False)
    return ChannelRealization(channels=channels, paths=per_user_paths, config=config,
                              geometry=geometry, placement=placement, rng_seed=seed_label)


def drop_rng(master_seed: int, drop_index: int) -> np.random.Generator:
    """Independent generator for one Monte-Carlo drop."""
    return np.random.default_rng([master_seed, drop_index])


def dump_channels(realization: ChannelRealization, stream) -> None:
    """Text dump: header with dimensions, then one entry per line."""
    u, n_r, n_t = realization.channels.shape
    stream.write(f"{u} {n_r} {n_t}\n")
    for ui in range(u):
        h = realization.channels[ui]
        for row in range(n_r):
            for col in range(n_t):
                v = h[row, col]
                stream.write(f"{ui},{row},{col},{v.real:.9g},{v.imag:.9g}\n")
