"""Spectral-efficiency evaluation, beam-pattern grids, and the drop harness.

The per-user rate is always evaluated with the full interference-plus-
noise covariance; the whitened shortcut used while designing the analog
stage never enters here.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .archsearch import los_capacity
from .beamforming import BeamformerSet, design_beamformers, fully_digital_bound
from .channel import ChannelRealization, ScenarioPolicy, drop_rng, generate_scenario
from .config import SystemConfig
from .errors import ConfigurationError, WsabeamError
from .geometry import ArrayGeometry, build_wsa_geometry

LN2 = math.log(2.0)

ALGORITHMS = ("ao-sc", "svr-fc", "svd-phase-fc", "fd-bound", "capacity-ub")


@dataclass(frozen=True)
class EvaluationReport:
    """Per-drop rate summary of one beamformer set."""

    per_user_se: np.ndarray
    sum_se: float
    residual_interference: np.ndarray
    timings: dict
    seed_label: object = None
    scenario_id: str = ""


@dataclass(frozen=True)
class BeamPatternGridSpec:
    """Polar sampling grid: azimuths (radians from boresight) x ranges (m)."""

    azimuths_rad: np.ndarray
    ranges_m: np.ndarray
    height_m: float

    @staticmethod
    def default(height_m: float, n_azimuth: int = 181, n_range: int = 100,
                range_min_m: float = 1.0, range_max_m: float = 20.0,
                azimuth_span_rad: float = math.pi) -> "BeamPatternGridSpec":
        half = azimuth_span_rad / 2.0
        return BeamPatternGridSpec(
            azimuths_rad=np.linspace(-half, half, n_azimuth),
            ranges_m=np.geomspace(range_min_m, range_max_m, n_range),
            height_m=height_m,
        )


@dataclass(frozen=True)
class BeamPatternGrid:
    azimuths_rad: np.ndarray
    ranges_m: np.ndarray
    gain: np.ndarray  # (n_azimuth, n_range), normalized to max 1
    height_m: float


def user_se(h_u: np.ndarray, bf: BeamformerSet, user: int, noise_power_w: float) -> float:
    """Achievable rate of one user with the exact interference covariance."""
    n_s = bf.num_streams
    amp = bf.power_diagonal
    w_eff = bf.w_rf[user] @ bf.w_bb[user]
    front = w_eff.conj().T @ h_u @ bf.f_rf

    cols = slice(user * n_s, (user + 1) * n_s)
    signal = front @ bf.f_bb[:, cols] * amp[cols][None, :]
    s_cov = signal @ signal.conj().T

    r = noise_power_w * (w_eff.conj().T @ w_eff)
    for other in range(bf.num_users):
        if other == user:
            continue
        pcols = slice(other * n_s, (other + 1) * n_s)
        term = front @ bf.f_bb[:, pcols] * amp[pcols][None, :]
        r = r + term @ term.conj().T
    r = 0.5 * (r + r.conj().T)

    sign, logdet_r = np.linalg.slogdet(r)
    if sign.real <= 0 or not np.isfinite(logdet_r):
        warnings.warn(
            f"singular interference covariance for user {user}; using a pseudo-inverse",
            RuntimeWarning,
        )
        m = np.linalg.pinv(r) @ s_cov
        sign2, logdet = np.linalg.slogdet(np.eye(n_s) + m)
        return max(float(logdet / LN2), 0.0)
    _, logdet_sum = np.linalg.slogdet(r + s_cov)
    return max(float((logdet_sum - logdet_r) / LN2), 0.0)


def residual_interference(channels: np.ndarray, bf: BeamformerSet) -> np.ndarray:
    """Relative leakage |H_eff_u F_bb_i| / (|H_eff_u| |F_bb_i|) per user pair."""
    n_users = bf.num_users
    n_s = bf.num_streams
    out = np.zeros((n_users, n_users))
    for u in range(n_users):
        h_eff = bf.w_rf[u].conj().T @ channels[u] @ bf.f_rf
        h_norm = np.linalg.norm(h_eff)
        for i in range(n_users):
            if i == u:
                continue
            f_i = bf.f_bb[:, i * n_s:(i + 1) * n_s]
            denom = h_norm * np.linalg.norm(f_i)
            out[u, i] = np.linalg.norm(h_eff @ f_i) / denom if denom > 0 else 0.0
    return out


def evaluate_beamformers(realization: ChannelRealization, bf: BeamformerSet,
                         timings: dict | None = None,
                         scenario_id: str = "") -> EvaluationReport:
    noise = realization.config.noise_power
    per_user = np.array([
        user_se(realization.channels[u], bf, u, noise)
        for u in range(realization.num_users)
    ])
    return EvaluationReport(
        per_user_se=per_user,
        sum_se=float(per_user.sum()),
        residual_interference=residual_interference(realization.channels, bf),
        timings=dict(timings or {}),
        seed_label=realization.rng_seed,
        scenario_id=scenario_id,
    )


def beam_pattern(geometry: ArrayGeometry, column: np.ndarray,
                 grid: BeamPatternGridSpec, wavelength_m: float) -> BeamPatternGrid:
    """Normalized |a(p)^H f|^2 over the grid with exact per-antenna distances."""
    az = np.asarray(grid.azimuths_rad, dtype=float)
    rr = np.asarray(grid.ranges_m, dtype=float)
    if az.size == 0 or rr.size == 0:
        raise ConfigurationError("beam-pattern grid must be non-empty")
    aa, rmesh = np.meshgrid(az, rr, indexing="ij")
    points = np.stack([
        (rmesh * np.sin(aa)).ravel(),
        (rmesh * np.cos(aa)).ravel(),
        np.full(aa.size, grid.height_m),
    ], axis=1)
    gain = _kernels.pattern_gain(
        geometry.antenna_positions, points, 2.0 * np.pi / wavelength_m, column
    ).reshape(az.size, rr.size)
    peak = gain.max()
    if peak > 0:
        gain = gain / peak
    return BeamPatternGrid(azimuths_rad=az, ranges_m=rr, gain=gain, height_m=grid.height_m)


@dataclass
class DropOutcome:
    drop: int
    sum_se: float = math.nan
    per_user_se: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    error: str = ""


@dataclass
class ExperimentResult:
    """Aggregated Monte-Carlo outcome of one (config, policy, algorithm) cell."""

    algorithm: str
    n_drops: int
    mean_sum_se: float
    std_sum_se: float
    drops: list
    failed: list
    timing_median: dict

    @property
    def n_failed(self) -> int:
        return len(self.failed)


def _run_one_drop(config: SystemConfig, geometry: ArrayGeometry,
                  policy: ScenarioPolicy, algorithm: str,
                  master_seed: int, drop: int) -> DropOutcome:
    outcome = DropOutcome(drop=drop)
    try:
        rng = drop_rng(master_seed, drop)
        realization = generate_scenario(config, policy, rng, geometry,
                                        seed_label=(master_seed, drop))
        if algorithm == "capacity-ub":
            t0 = time.perf_counter()
            per_user = np.array([
                los_capacity(realization.channels[u], config.total_power_w,
                             config.noise_power)
                for u in range(config.num_users)
            ])
            outcome.per_user_se = per_user
            outcome.sum_se = float(per_user.sum())
            outcome.timings = {"total_s": time.perf_counter() - t0}
        elif algorithm == "fd-bound":
            t0 = time.perf_counter()
            outcome.sum_se = fully_digital_bound(
                realization.channels, config.total_power_w, config.noise_power,
                config.streams_per_user,
            )
            outcome.timings = {"total_s": time.perf_counter() - t0}
        else:
            bf, timings = design_beamformers(
                realization.channels, config, geometry=geometry,
                users=realization.placement.positions, method=algorithm,
                rng=rng,
            )
            report = evaluate_beamformers(realization, bf, timings)
            outcome.sum_se = report.sum_se
            outcome.per_user_se = report.per_user_se
            outcome.timings = timings
    except (WsabeamError, np.linalg.LinAlgError) as exc:
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


def run_experiment(config: SystemConfig, policy: ScenarioPolicy, algorithm: str,
                   n_drops: int, master_seed: int | None = None,
                   threads: int = 1,
                   geometry: ArrayGeometry | None = None) -> ExperimentResult:
    """Monte-Carlo sweep of one algorithm; deterministic given the master seed.

    Drops run independently (optionally across threads); aggregation is
    by drop index so the execution order never affects the output.
    """
    if n_drops < 1:
        raise ConfigurationError("n_drops must be at least 1")
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(
            f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}"
        )
    if master_seed is None:
        master_seed = config.rng_seed
    if geometry is None:
        geometry = build_wsa_geometry(config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(
                lambda d: _run_one_drop(config, geometry, policy, algorithm,
                                        master_seed, d),
                range(n_drops),
            ))
    else:
        outcomes = [
            _run_one_drop(config, geometry, policy, algorithm, master_seed, d)
            for d in range(n_drops)
        ]
    outcomes.sort(key=lambda o: o.drop)

    good = [o for o in outcomes if not o.error]
    failed = [(o.drop, o.error) for o in outcomes if o.error]
    values = np.array([o.sum_se for o in good]) if good else np.array([])
    timing_median = {}
    if good:
        for key in good[0].timings:
            timing_median[key] = float(np.median([o.timings.get(key, math.nan)
                                                  for o in good]))
    return ExperimentResult(
        algorithm=algorithm,
        n_drops=n_drops,
        mean_sum_se=float(values.mean()) if values.size else math.nan,
        std_sum_se=float(values.std()) if values.size else math.nan,
        drops=outcomes,
        failed=failed,
        timing_median=timing_median,
    )
