"""Base-station array geometry and per-subarray user geometry.

Coordinate frame
----------------
The BS array lies in the x-z plane at y = 0 with the reference antenna of
the first subarray at (0, 0, bs_height); users sit in the y > 0 half
space.  Subarray references form a sqrt(K) x sqrt(K) grid with pitch
``d = (n_x - 1) * d_a + d_s`` per axis, where ``n_x = sqrt(N_t / K)`` is
the subarray side and ``d_a`` the intra-subarray pitch.  The grid and the
intra-subarray offsets both extend toward -x and -z from each reference.
With that orientation the rank-one block ``a_r a_t^H`` built from
user-pointing direction cosines reproduces the physical propagation
phase exp(-j*2*pi*dist/lambda) at every antenna, so beam patterns
evaluated against exact per-antenna distances peak at true user
positions.

Antenna ordering is subarray-major (x-major over the reference grid),
then row-major within each subarray (x index times ``n_z`` plus z
index).  Every matrix in the package indexes transmit antennas in this
order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, is_perfect_square
from .errors import ApertureViolationError, ConfigurationError, DegenerateGeometryError


@dataclass(frozen=True)
class ArrayGeometry:
    """Immutable antenna layout of one BS array.

    ``antenna_positions`` has shape (N_t, 3), ``subarray_reference_positions``
    shape (K, 3) and ``subarray_index`` shape (N_t,).  Safe to share
    read-only across concurrent workers.
    """

    antenna_positions: np.ndarray
    subarray_reference_positions: np.ndarray
    subarray_index: np.ndarray
    num_subarrays: int
    subarray_side: int
    intra_spacing_m: float
    reference_pitch_m: float
    subarray_spacing_m: float
    aperture_m: float
    bs_height_m: float

    @property
    def num_antennas(self) -> int:
        return self.antenna_positions.shape[0]

    @property
    def grid_side(self) -> int:
        return int(round(math.sqrt(self.num_subarrays)))


@dataclass(frozen=True)
class UserPlacement:
    """User positions (U, 3) plus the planar-scenario flag per user.

    ``is_2d[u]`` is true when user u sits at the BS height, so only the
    azimuth separates users.
    """

    positions: np.ndarray
    is_2d: np.ndarray


@dataclass(frozen=True)
class SubarrayUserGeometry:
    """Per-subarray range and direction of one point as seen from the BS.

    All fields are arrays of length K, ordered like the subarrays.
    ``u_x`` and ``u_z`` are the direction cosines (x_u - x_k)/D and
    (z_u - z_k)/D used directly as steering-phase coefficients; azimuth
    is measured from the +y boresight (atan2(u_x, u_y)) and elevation
    from the horizontal plane (asin(u_z)).
    """

    distances: np.ndarray
    u_x: np.ndarray
    u_z: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray


def aperture_from_side(side_m: float) -> float:
    """Diagonal of the bounding square with the given side length."""
    return math.sqrt(2.0) * side_m


def build_wsa_geometry(config: SystemConfig) -> ArrayGeometry:
    """Construct the widely-spaced (or compact, K=1) BS array.

    Raises ConfigurationError when the subarray count cannot tile the
    array and ApertureViolationError when the layout exceeds
    ``config.aperture_limit_m``.
    """
    n_t = config.num_tx_antennas
    k = config.num_subarrays
    if not is_perfect_square(k):
        raise ConfigurationError(f"num_subarrays={k} is not a perfect square")
    if k > n_t or n_t % k != 0 or not is_perfect_square(n_t // k):
        raise ConfigurationError(
            f"num_subarrays={k} must divide num_tx_antennas={n_t} into square subarrays"
        )
    d_a = config.intra_spacing
    side = int(round(math.sqrt(n_t // k)))
    grid = int(round(math.sqrt(k)))
    d_s = 0.0 if k == 1 else config.subarray_spacing_m
    pitch = (side - 1) * d_a + d_s

    bound = (grid - 1) * pitch + (side - 1) * d_a
    aperture = aperture_from_side(bound)
    if aperture > config.aperture_limit_m * (1.0 + 1e-12):
        raise ApertureViolationError(aperture, config.aperture_limit_m)

    z_t = config.bs_height_m
    refs = np.zeros((k, 3))
    positions = np.zeros((n_t, 3))
    sub_index = np.zeros(n_t, dtype=np.int64)
    per_sub = side * side
    idx = 0
    for kx in range(grid):
        for kz in range(grid):
            sub = kx * grid + kz
            ref = np.array([-kx * pitch, 0.0, z_t - kz * pitch])
            refs[sub] = ref
            for m in range(side):
                for n in range(side):
                    positions[idx] = ref - np.array([m * d_a, 0.0, n * d_a])
                    sub_index[idx] = sub
                    idx += 1
    assert idx == n_t and per_sub * k == n_t

    positions.setflags(write=False)
    refs.setflags(write=False)
    sub_index.setflags(write=False)
    return ArrayGeometry(
        antenna_positions=positions,
        subarray_reference_positions=refs,
        subarray_index=sub_index,
        num_subarrays=k,
        subarray_side=side,
        intra_spacing_m=d_a,
        reference_pitch_m=pitch,
        subarray_spacing_m=d_s,
        aperture_m=aperture,
        bs_height_m=z_t,
    )


def subarray_user_geometry(geometry: ArrayGeometry, user: np.ndarray) -> SubarrayUserGeometry:
    """Exact Euclidean range and direction cosines from every subarray reference."""
    user = np.asarray(user, dtype=float)
    delta = user[None, :] - geometry.subarray_reference_positions
    dist = np.linalg.norm(delta, axis=1)
    if np.any(dist < 1e-12):
        raise DegenerateGeometryError(
            f"user at {user.tolist()} coincides with a subarray reference antenna"
        )
    u_x = delta[:, 0] / dist
    u_y = delta[:, 1] / dist
    u_z = delta[:, 2] / dist
    azimuth = np.arctan2(u_x, u_y)
    elevation = np.arcsin(np.clip(u_z, -1.0, 1.0))
    return SubarrayUserGeometry(
        distances=dist, u_x=u_x, u_z=u_z, azimuth=azimuth, elevation=elevation
    )


def _taylor_psi(dist_ref: float, k_x: int, k_z: int, pitch: float,
                u_x: float, u_z: float) -> float:
    a = (k_x - 1) * pitch / dist_ref
    b = (k_z - 1) * pitch / dist_ref
    return 2.0 * (a * u_x + b * u_z) + a * a + b * b


def taylor_distance(dist_ref: float, k_x: int, k_z: int, pitch: float,
                    u_x: float, u_z: float) -> float:
    """Second-order expansion of the range to subarray (k_x, k_z).

    ``dist_ref`` is the exact range to the first subarray reference, and
    ``k_x``/``k_z`` are the 1-based grid indices of the target subarray,
    so (1, 1) returns ``dist_ref`` unchanged.  ``u_x``/``u_z`` are the
    direction cosines at the first reference.  Valid while the expansion
    variable stays below 1 in magnitude; beyond that a warning is issued
    and the (inaccurate) value still returned.
    """
    if dist_ref <= 0:
        raise ValueError("reference distance must be positive")
    if pitch < 0:
        raise ValueError("reference pitch must be non-negative")
    psi = _taylor_psi(dist_ref, k_x, k_z, pitch, u_x, u_z)
    if abs(psi) >= 1.0:
        warnings.warn(
            "Taylor expansion variable |psi| >= 1; "
            "distance approximation is outside its validity range",
            RuntimeWarning,
            stacklevel=2,
        )
    return dist_ref * (1.0 + 0.5 * psi - 0.125 * psi * psi)


def taylor_distance_difference(dist_ref: float, k_x: int, k_z: int, pitch: float,
                               u_x: float, u_z: float) -> float:
    """Range difference D_k - D_1 under the same expansion as taylor_distance."""
    return taylor_distance(dist_ref, k_x, k_z, pitch, u_x, u_z) - dist_ref


def max_subarray_spacing(num_subarrays: int, num_tx_antennas: int, wavelength_m: float,
                         aperture_limit_m: float, mode: str = "geometric",
                         intra_spacing_m: float | None = None) -> float:
    """Largest subarray spacing that respects the aperture limit.

    ``geometric`` (default) inverts the bounding-square construction of
    build_wsa_geometry in closed form, so rebuilding at the returned
    spacing lands exactly on the limit.  ``paper-formula`` evaluates the
    closed form with the opposite sign on the wavelength term, kept for
    comparison; it overshoots the limit for K < N_t.
    """
    if num_subarrays == 1:
        raise ConfigurationError("a compact array (K=1) has no subarray spacing")
    if not is_perfect_square(num_subarrays):
        raise ConfigurationError(f"num_subarrays={num_subarrays} is not a perfect square")
    d_a = wavelength_m / 2.0 if intra_spacing_m is None else intra_spacing_m
    sqrt_k = math.sqrt(num_subarrays)
    sqrt_nt = math.sqrt(num_tx_antennas)
    if mode == "paper-formula":
        return (math.sqrt(2.0) * aperture_limit_m + wavelength_m * (sqrt_nt - sqrt_k)) / (
            2.0 * (sqrt_k - 1.0)
        )
    if mode == "geometric":
        # side(d_s) = (sqrt(K)-1) * ((n_x-1) d_a + d_s) + (n_x-1) d_a = limit/sqrt(2)
        side_per_sub = (sqrt_nt / sqrt_k - 1.0) * d_a
        return (aperture_limit_m / math.sqrt(2.0) - sqrt_k * side_per_sub) / (sqrt_k - 1.0)
    raise ValueError(f"unknown mode {mode!r}; expected 'geometric' or 'paper-formula'")


def rayleigh_distance(aperture_m: float, wavelength_m: float) -> float:
    """Near/far-field boundary 2*S^2/lambda for aperture S."""
    if aperture_m < 0:
        raise ValueError("aperture must be non-negative")
    return 2.0 * aperture_m * aperture_m / wavelength_m


def export_geometry(geometry: ArrayGeometry, stream) -> None:
    """Write the antenna table: one row per antenna, 12 significant digits."""
    stream.write("antenna_index,subarray_index,x_m,y_m,z_m\n")
    for i in range(geometry.num_antennas):
        x, y, z = geometry.antenna_positions[i]
        stream.write(
            f"{i},{int(geometry.subarray_index[i])},{x:.12g},{y:.12g},{z:.12g}\n"
        )
