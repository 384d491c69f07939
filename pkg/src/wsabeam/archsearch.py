"""Array-architecture selection: capacity scoring, diagnostics, and the search.

The subarray count and spacing are picked before any beamforming runs by
scoring the interference-free line-of-sight capacity of candidate
layouts.  For a fixed subarray count the capacity grows with spacing as
long as every user is far enough away (the receive-side phase spreads
stay below pi); the search therefore only needs the largest feasible
spacing per candidate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .channel import assemble_cnff_channel, numerical_rank, receive_steering_matrix
from .channel import _los_path  # single-path builder reused for LoS-only scoring
from .config import SystemConfig
from .errors import ConfigurationError
from .geometry import ArrayGeometry, build_wsa_geometry, max_subarray_spacing


@dataclass(frozen=True)
class ArchitectureCandidate:
    num_subarrays: int
    subarray_spacing_m: float
    aperture_m: float
    capacity_bps_hz: float
    feasible: bool


@dataclass(frozen=True)
class TheoremDiagnostics:
    """Numeric check of the capacity-monotonicity conditions.

    ``tau_m`` is the range threshold 2*sqrt(2)*(sqrt(N_r)-1)*S_t;
    ``beta_spread_max`` the largest receive-phase difference across
    subarray pairs; ``monotone`` is None when no spacing grid was
    supplied or the range condition fails.
    """

    tau_m: float
    distance_condition: bool
    beta_spread_max: float
    beta_bound_ok: bool
    gram_deviations: np.ndarray
    spacing_grid: np.ndarray | None = None
    capacity_grid: np.ndarray | None = None
    monotone: bool | None = None


def los_capacity(h: np.ndarray, total_power_w: float, noise_power_w: float,
                 k_rank: int | None = None) -> float:
    """Interference-free capacity with equal power across the active streams.

    Default: per-stream power P_t / numerical_rank over the significant
    singular values.  ``k_rank`` forces a fixed stream count instead
    (summing over the first k_rank singular values).
    """
    s = np.linalg.svd(h, compute_uv=False)
    if s.size == 0 or s[0] <= 0:
        warnings.warn("zero channel matrix: capacity is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if total_power_w <= 0:
        return 0.0
    if k_rank is None:
        r = numerical_rank(s)
        active = s[:r]
    else:
        r = int(k_rank)
        active = s[:r]
    rho = total_power_w / r
    return float(np.sum(np.log2(1.0 + rho / noise_power_w * active ** 2)))


def gram_deviation(a_r: np.ndarray) -> float:
    """Frobenius distance of the receive Gram matrix from K times identity."""
    k = a_r.shape[1]
    gram = a_r @ a_r.conj().T
    return float(np.linalg.norm(gram - k * np.eye(a_r.shape[0])) ** 2)


def _los_channel(geometry: ArrayGeometry, user: np.ndarray, config: SystemConfig,
                 gain: float | None = None) -> np.ndarray:
    path = _los_path(geometry, user, config)
    if gain is not None:
        path = replace(path, gain=gain)
    return assemble_cnff_channel([path], config)


def mean_los_capacity(geometry: ArrayGeometry, users: np.ndarray,
                      config: SystemConfig, k_rank: int | None = None,
                      gains: np.ndarray | None = None) -> float:
    """LoS-only capacity averaged over users, the Alg.-design score."""
    caps = []
    for i, user in enumerate(np.atleast_2d(users)):
        gain = None if gains is None else float(gains[i])
        h = _los_channel(geometry, user, config, gain=gain)
        caps.append(los_capacity(h, config.total_power_w, config.noise_power, k_rank))
    return float(np.mean(caps))


def beta_phase_spread(geometry: ArrayGeometry, user: np.ndarray,
                      config: SystemConfig) -> float:
    """Max over antenna pairs of the receive-phase spread across subarrays.

    The receive phase for antenna-index offset (d1, d2) and subarray k is
    (2*pi/lambda) * d_a * (d1 * u_x_k + d2 * u_z_k); the theorem's bound
    requires the spread over k to stay below pi.
    """
    from .geometry import subarray_user_geometry

    geo = subarray_user_geometry(geometry, user)
    side = int(round(math.sqrt(config.num_rx_antennas)))
    coeff = 2.0 * np.pi / config.wavelength_m * config.intra_spacing
    offsets = np.arange(-(side - 1), side)
    d1, d2 = np.meshgrid(offsets, offsets, indexing="ij")
    beta = coeff * (d1[..., None] * geo.u_x[None, None, :] +
                    d2[..., None] * geo.u_z[None, None, :])
    spread = beta.max(axis=2) - beta.min(axis=2)
    return float(spread.max())


def theorem_guard(geometry: ArrayGeometry, users: np.ndarray, config: SystemConfig,
                  spacing_grid: np.ndarray | None = None,
                  slack: float = 0.005) -> TheoremDiagnostics:
    """Evaluate the distance condition, the phase bound, and capacity monotonicity.

    Purely diagnostic: returns verdicts, never raises.  The monotonicity
    verdict rebuilds the geometry at each grid spacing with the users
    fixed in space and allows ``slack`` relative numerical noise.
    """
    from .geometry import subarray_user_geometry

    users = np.atleast_2d(users)
    n_r = config.num_rx_antennas
    tau = 2.0 * math.sqrt(2.0) * (math.sqrt(n_r) - 1.0) * geometry.aperture_m

    min_distance = math.inf
    spread = 0.0
    grams = []
    for user in users:
        geo = subarray_user_geometry(geometry, user)
        min_distance = min(min_distance, float(geo.distances.min()))
        spread = max(spread, beta_phase_spread(geometry, user, config))
        grams.append(gram_deviation(receive_steering_matrix(geometry, user, config)))
    distance_ok = min_distance >= tau
    bound_ok = (not distance_ok) or spread <= math.pi * (1.0 + 1e-9)

    capacity_grid = None
    monotone = None
    if spacing_grid is not None and geometry.num_subarrays > 1:
        caps = []
        for d_s in spacing_grid:
            geom = build_wsa_geometry(config.with_spacing(float(d_s)))
            caps.append(mean_los_capacity(geom, users, config))
        capacity_grid = np.asarray(caps)
        if distance_ok:
            diffs = np.diff(capacity_grid)
            floor = -slack * np.maximum(capacity_grid[:-1], 1e-12)
            monotone = bool(np.all(diffs >= floor))
    return TheoremDiagnostics(
        tau_m=tau,
        distance_condition=distance_ok,
        beta_spread_max=spread,
        beta_bound_ok=bound_ok,
        gram_deviations=np.asarray(grams),
        spacing_grid=None if spacing_grid is None else np.asarray(spacing_grid, dtype=float),
        capacity_grid=capacity_grid,
        monotone=monotone,
    )


def search_architecture(config: SystemConfig, users: np.ndarray,
                        k_candidates: list[int] | None = None,
                        tie_tolerance: float = 0.01,
                        ) -> tuple[ArchitectureCandidate, list[ArchitectureCandidate]]:
    """Pick (K, d_s) with the best mean LoS capacity under the aperture limit.

    Every K > 1 is scored at its largest feasible spacing (geometric
    closed form); K = 1 is the compact baseline.  Candidates within
    ``tie_tolerance`` relative of the best are tied and the smallest K
    among them wins.  Never returns an infeasible layout.
    """
    if not k_candidates:
        raise ConfigurationError("empty candidate set for the architecture search")
    users = np.atleast_2d(users)
    candidates = []
    for k in sorted(set(int(k) for k in k_candidates)):
        trial = replace(config, num_subarrays=k)
        if k == 1:
            d_s = 0.0
        else:
            d_s = max_subarray_spacing(
                k, config.num_tx_antennas, config.wavelength_m,
                config.aperture_limit_m, mode="geometric",
                intra_spacing_m=config.intra_spacing_m,
            )
        if k > 1 and d_s < 0:
            candidates.append(ArchitectureCandidate(k, d_s, math.inf, -math.inf, False))
            continue
        trial = trial.with_spacing(d_s)
        try:
            geometry = build_wsa_geometry(trial)
        except Exception:
            candidates.append(ArchitectureCandidate(k, d_s, math.inf, -math.inf, False))
            continue
        capacity = mean_los_capacity(geometry, users, trial)
        candidates.append(ArchitectureCandidate(k, d_s, geometry.aperture_m, capacity, True))

    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        raise ConfigurationError(
            "no feasible architecture candidate under the aperture limit"
        )
    best_cap = max(c.capacity_bps_hz for c in feasible)
    tied = [c for c in feasible if c.capacity_bps_hz >= (1.0 - tie_tolerance) * best_cap]
    winner = min(tied, key=lambda c: c.num_subarrays)
    return winner, candidates


def architecture_report(candidates: list[ArchitectureCandidate]) -> str:
    """Search report table, one row per candidate."""
    lines = ["K, d_s_m, aperture_m, capacity_bpsHz, feasible"]
    for c in candidates:
        lines.append(
            f"{c.num_subarrays}, {c.subarray_spacing_m:.9g}, {c.aperture_m:.9g}, "
            f"{c.capacity_bps_hz:.9g}, {str(c.feasible).lower()}"
        )
    return "\n".join(lines) + "\n"
