"""Precoder and combiner algorithms for both connection modes.

The digital stage is block diagonalization (each user's baseband
precoder lives in the null space of everyone else's effective channel)
followed by one joint water-filling pool over all streams.  The analog
stage is either the sub-connected alternating optimization over
subarray blocks, the fully-connected steering-vector reconstruction, or
the SVD-phase benchmark.  A fully-digital bound (no analog constraint)
closes the set.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .errors import ConfigurationError, RankDeficiencyError
from .channel import upa_steering_vector
from .geometry import (
    ArrayGeometry,
    subarray_user_geometry,
    taylor_distance,
)
from .linalg import deterministic_svd

LN2 = math.log(2.0)


def constant_modulus_projection(matrix: np.ndarray, target_modulus: float) -> np.ndarray:
    """Keep every entry's phase, force its modulus; zero entries map to phase 0."""
    m = np.asarray(matrix, dtype=np.complex128)
    mag = np.abs(m)
    out = np.full(m.shape, target_modulus, dtype=np.complex128)
    nz = mag > 0
    out[nz] = target_modulus * m[nz] / mag[nz]
    return out


def waterfilling(gains: np.ndarray, total_power_w: float, noise_power_w: float) -> np.ndarray:
    """Water-filling powers p_i = max(0, mu - sigma^2/g_i^2) with sum p_i = P_t."""
    if total_power_w <= 0:
        raise ConfigurationError("total power must be positive for water-filling")
    g = np.asarray(gains, dtype=float)
    powers = np.zeros_like(g)
    positive = g > 0
    if not np.any(positive):
        raise ConfigurationError("water-filling needs at least one positive gain")
    inv = noise_power_w / g[positive] ** 2
    order = np.argsort(inv)
    inv_sorted = inv[order]
    n = inv_sorted.size
    k = n
    while k > 0:
        mu = (total_power_w + inv_sorted[:k].sum()) / k
        if mu > inv_sorted[k - 1]:
            break
        k -= 1
    p_sorted = np.zeros(n)
    p_sorted[:k] = mu - inv_sorted[:k]
    p_active = np.empty(n)
    p_active[order] = p_sorted
    powers[positive] = p_active
    return powers


def sum_se_from_gains(gains: np.ndarray, powers: np.ndarray, noise_power_w: float) -> float:
    """Interference-free spectral efficiency of parallel scalar streams."""
    g = np.asarray(gains, dtype=float)
    p = np.asarray(powers, dtype=float)
    return float(np.sum(np.log2(1.0 + p * g ** 2 / noise_power_w)))


def _effective_channels(channels: np.ndarray, f_rf: np.ndarray | None,
                        w_rf: np.ndarray | None) -> list[np.ndarray]:
    eff = []
    for u in range(channels.shape[0]):
        h = channels[u]
        if w_rf is not None:
            h = w_rf[u].conj().T @ h
        if f_rf is not None:
            h = h @ f_rf
        eff.append(h)
    return eff


def bd_digital(channels: np.ndarray, f_rf: np.ndarray | None,
               w_rf: np.ndarray | None, num_streams: int):
    """Block-diagonalization baseband stage.

    ``channels`` is (U, N_r, N_t); ``f_rf``/``w_rf`` may be None for
    identity (fully-digital) semantics.  Returns the stacked baseband
    precoder, the per-user baseband combiners, and the per-user effective
    singular values feeding water-filling.  Raises RankDeficiencyError
    when a user's interference null space cannot carry ``num_streams``.
    """
    eff = _effective_channels(channels, f_rf, w_rf)
    n_users = len(eff)
    lt_eff = eff[0].shape[1]
    f_bb_cols = []
    w_bb = []
    gains = np.zeros((n_users, num_streams))
    for u in range(n_users):
        others = [eff[i] for i in range(n_users) if i != u]
        if others:
            stacked = np.vstack(others)
            _, s, vh = deterministic_svd(stacked, full_matrices=True)
            tol = max(stacked.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
            rank = int(np.count_nonzero(s > tol))
            null_dim = lt_eff - rank
            if null_dim < num_streams:
                raise RankDeficiencyError(u, null_dim, num_streams)
            v0 = vh.conj().T[:, rank:]
        else:
            v0 = np.eye(lt_eff, dtype=np.complex128)
        projected = eff[u] @ v0
        uu, ss, vvh = deterministic_svd(projected, full_matrices=False)
        if ss.size < num_streams:
            raise RankDeficiencyError(u, int(ss.size), num_streams)
        f_bb_cols.append(v0 @ vvh.conj().T[:, :num_streams])
        w_bb.append(uu[:, :num_streams])
        gains[u] = ss[:num_streams]
    f_bb = np.hstack(f_bb_cols)
    return f_bb, w_bb, gains


@dataclass
class AOResult:
    f_rf: np.ndarray
    w_rf: np.ndarray
    objective_trace: list
    sweeps: int


def _block_diag_f(blocks: list[np.ndarray], n_t: int, l_t: int) -> np.ndarray:
    k = len(blocks)
    width = n_t // k
    lt = l_t // k
    f = np.zeros((n_t, l_t), dtype=np.complex128)
    for j in range(k):
        f[j * width:(j + 1) * width, j * lt:(j + 1) * lt] = blocks[j]
    return f


def _log2det_capacity(m: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(np.eye(m.shape[0]) + m)
    return float(logdet / LN2)


def ao_analog_subconnected(channels: np.ndarray, num_subarrays: int,
                           tx_rf_chains: int, rx_rf_chains: int,
                           noise_power_w: float, rng: np.random.Generator,
                           max_iters: int = 10, tol: float = 1e-3) -> AOResult:
    """Alternating optimization of the block-diagonal analog precoder.

    Per sweep: with combiners fixed, each subarray block is set to the
    top right singular vectors of its Schur-complement matrix in turn;
    then each user's combiner is refit to its own quadratic form.  The
    unconstrained objective is appended to ``objective_trace`` after
    every update (it is non-decreasing until the final constant-modulus
    projection).
    """
    n_users, n_r, n_t = channels.shape
    k = num_subarrays
    if tx_rf_chains % k != 0:
        raise ConfigurationError(
            f"sub-connected mode needs num_subarrays ({k}) to divide tx_rf_chains "
            f"({tx_rf_chains})"
        )
    if n_t % k != 0:
        raise ConfigurationError("num_subarrays must divide the antenna count")
    width = n_t // k
    lt = tx_rf_chains // k
    if width < lt:
        raise ConfigurationError("each subarray needs at least L_t/K antennas")

    blocks = [
        np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(width, lt))) / math.sqrt(width)
        for _ in range(k)
    ]
    w_rf = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(n_users, n_r, rx_rf_chains)))
    w_rf /= math.sqrt(n_r)

    trace = []
    prev_obj = -math.inf
    sweeps = 0
    for _ in range(max_iters):
        sweeps += 1
        t_rows = np.vstack([w_rf[u].conj().T @ channels[u] for u in range(n_users)])
        a = t_rows.conj().T @ t_rows

        for j in range(k):
            rows_j = slice(j * width, (j + 1) * width)
            other_rows = np.r_[0:j * width, (j + 1) * width:n_t]
            a_jj = a[rows_j, rows_j]
            a_jo = a[rows_j][:, other_rows]
            a_oj = a[other_rows][:, rows_j]
            a_oo = a[other_rows][:, other_rows]
            f_minus = _block_diag_f(
                [blocks[i] for i in range(k) if i != j], n_t - width, tx_rf_chains - lt
            )
            b = np.eye(f_minus.shape[1]) + f_minus.conj().T @ a_oo @ f_minus / noise_power_w
            rhs = f_minus.conj().T @ a_oj
            try:
                solved = np.linalg.solve(b, rhs)
            except np.linalg.LinAlgError:
                warnings.warn(
                    "near-singular block in the alternating optimization; "
                    "applying a ridge regularizer",
                    RuntimeWarning,
                )
                ridge = 1e-12 * np.trace(b).real
                solved = np.linalg.solve(b + ridge * np.eye(b.shape[0]), rhs)
            x = a_jj - (a_jo @ f_minus) @ solved / noise_power_w
            x = 0.5 * (x + x.conj().T)
            _, _, vh = deterministic_svd(x)
            blocks[j] = vh.conj().T[:, :lt]
            f = _block_diag_f(blocks, n_t, tx_rf_chains)
            trace.append(_log2det_capacity(f.conj().T @ a @ f / noise_power_w))

        f = _block_diag_f(blocks, n_t, tx_rf_chains)
        obj = 0.0
        for u in range(n_users):
            hf = channels[u] @ f
            d_u = hf @ hf.conj().T
            d_u = 0.5 * (d_u + d_u.conj().T)
            _, _, vh = deterministic_svd(d_u)
            w_rf[u] = vh.conj().T[:, :rx_rf_chains]
            w_eff = w_rf[u].conj().T @ hf
            obj += _log2det_capacity(w_eff @ w_eff.conj().T / noise_power_w)
        trace.append(obj)

        if prev_obj > -math.inf and abs(obj - prev_obj) < tol * max(abs(prev_obj), 1e-12):
            break
        prev_obj = obj

    blocks = [constant_modulus_projection(bl, 1.0 / math.sqrt(width)) for bl in blocks]
    f_rf = _block_diag_f(blocks, n_t, tx_rf_chains)
    w_proj = np.stack([
        constant_modulus_projection(w_rf[u], 1.0 / math.sqrt(n_r)) for u in range(n_users)
    ])
    return AOResult(f_rf=f_rf, w_rf=w_proj, objective_trace=trace, sweeps=sweeps)


def svr_steering_column(geometry: ArrayGeometry, user: np.ndarray,
                        config: SystemConfig, use_taylor: bool = True) -> np.ndarray:
    """Stacked per-subarray steering vector phase-aligned across subarrays.

    Each subarray gets its far-field steering vector from the first
    subarray's range and angles: ranges through the second-order
    expansion (or exact when ``use_taylor`` is False), direction cosines
    from exact reference offsets over the expanded range, and the
    inter-subarray phase exp(j*(2*pi/lambda)*(D_k - D_1)).  Entries are
    scaled to modulus 1/sqrt(N_t).
    """
    lam = config.wavelength_m
    geo = subarray_user_geometry(geometry, user)
    d1 = geo.distances[0]
    grid = geometry.grid_side
    side = geometry.subarray_side
    refs = geometry.subarray_reference_positions
    pieces = []
    for kx in range(grid):
        for kz in range(grid):
            sub = kx * grid + kz
            if use_taylor:
                d_k = taylor_distance(d1, kx + 1, kz + 1, geometry.reference_pitch_m,
                                      geo.u_x[0], geo.u_z[0])
            else:
                d_k = geo.distances[sub]
            u_x = (user[0] - refs[sub, 0]) / d_k
            u_z = (user[2] - refs[sub, 2]) / d_k
            a_t = upa_steering_vector(side, side, u_x, u_z, lam, geometry.intra_spacing_m)
            pieces.append(np.exp(2j * np.pi / lam * (d_k - d1)) * a_t)
    column = np.concatenate(pieces)
    return column / math.sqrt(geometry.num_antennas)


def svr_analog(geometry: ArrayGeometry, users: np.ndarray, config: SystemConfig,
               use_taylor: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Fully-connected analog stage built from reconstructed steering vectors.

    One column per user (cycling when there are spare RF chains); the
    analog combiner is the constant-modulus projection of the summed
    per-subarray receive steering vectors (matched to the arriving
    phase front).
    """
    users = np.atleast_2d(users)
    n_users = users.shape[0]
    l_t = config.tx_rf_chains
    if n_users > l_t:
        raise ConfigurationError(
            f"steering-vector precoder needs tx_rf_chains >= num_users "
            f"({l_t} < {n_users})"
        )
    cols = [svr_steering_column(geometry, users[u], config, use_taylor)
            for u in range(n_users)]
    f_cols = [cols[i % n_users] for i in range(l_t)]
    f_rf = np.stack(f_cols, axis=1)

    n_r = config.num_rx_antennas
    n_r_side = int(round(math.sqrt(n_r)))
    l_r = config.rx_rf_chains
    w_rf = np.zeros((n_users, n_r, l_r), dtype=np.complex128)
    for u in range(n_users):
        geo = subarray_user_geometry(geometry, users[u])
        a_cols = [
            upa_steering_vector(n_r_side, n_r_side, geo.u_x[k], geo.u_z[k],
                                config.wavelength_m, config.intra_spacing)
            for k in range(geometry.num_subarrays)
        ]
        candidates = [np.sum(a_cols, axis=0)] + a_cols
        for j in range(l_r):
            w_rf[u, :, j] = constant_modulus_projection(
                candidates[j % len(candidates)].reshape(-1, 1), 1.0 / math.sqrt(n_r)
            ).reshape(-1)
    return f_rf, w_rf


def svd_phase_benchmark(channels: np.ndarray, config: SystemConfig
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Per-user dominant singular vectors projected to constant modulus."""
    n_users, n_r, n_t = channels.shape
    n_s = config.streams_per_user
    l_r = config.rx_rf_chains
    cols = []
    w_rf = np.zeros((n_users, n_r, l_r), dtype=np.complex128)
    for u in range(n_users):
        uu, _, vh = deterministic_svd(channels[u], full_matrices=False)
        v = vh.conj().T
        for i in range(n_s):
            cols.append(v[:, i])
        w_rf[u] = constant_modulus_projection(uu[:, :l_r], 1.0 / math.sqrt(n_r))
    f_rf = constant_modulus_projection(np.stack(cols, axis=1), 1.0 / math.sqrt(n_t))
    return f_rf, w_rf


def fully_digital_bound(channels: np.ndarray, total_power_w: float,
                        noise_power_w: float, num_streams: int) -> float:
    """Sum SE of block diagonalization plus water-filling with no analog stage."""
    _, _, gains = bd_digital(channels, None, None, num_streams)
    flat = gains.reshape(-1)
    powers = waterfilling(flat, total_power_w, noise_power_w)
    return sum_se_from_gains(flat, powers, noise_power_w)


@dataclass(frozen=True)
class BeamformerSet:
    """Complete set of precoders/combiners plus the power allocation.

    ``power_alloc`` holds per-stream powers in watts (their sum is the
    power budget); the power matrix diagonal carries their square roots.
    """

    f_rf: np.ndarray
    f_bb: np.ndarray
    w_rf: np.ndarray
    w_bb: np.ndarray
    power_alloc: np.ndarray
    mode: str
    num_subarrays: int

    @property
    def num_users(self) -> int:
        return self.w_rf.shape[0]

    @property
    def num_streams(self) -> int:
        return self.f_bb.shape[1] // self.num_users

    @property
    def power_diagonal(self) -> np.ndarray:
        return np.sqrt(self.power_alloc)

    @property
    def tx_phase_shifters(self) -> int:
        """Analog-network size: number of nonzero precoder entries."""
        return int(np.count_nonzero(np.abs(self.f_rf) > 0))


ANALOG_METHODS = ("svr-fc", "svd-phase-fc", "ao-sc", "fd")


def design_beamformers(channels: np.ndarray, config: SystemConfig,
                       geometry: ArrayGeometry | None = None,
                       users: np.ndarray | None = None,
                       method: str = "svr-fc",
                       rng: np.random.Generator | None = None,
                       ao_max_iters: int = 10, ao_tol: float = 1e-3,
                       svr_use_taylor: bool = True):
    """Run analog stage, BD digital stage, normalization, and water-filling.

    Returns (BeamformerSet, stage timings in seconds).  The baseband
    precoder is normalized column-wise so the combined precoder carries
    unit power per stream, then the water-filling diagonal is applied on
    top of it.
    """
    if method not in ANALOG_METHODS:
        raise ConfigurationError(f"unknown beamforming method {method!r}")
    n_users, n_r, n_t = channels.shape
    n_s = config.streams_per_user
    noise = config.noise_power

    t0 = time.perf_counter()
    if method == "svr-fc":
        if geometry is None or users is None:
            raise ConfigurationError("svr-fc needs the array geometry and user positions")
        f_rf, w_rf = svr_analog(geometry, users, config, use_taylor=svr_use_taylor)
        mode = "fully-connected"
    elif method == "svd-phase-fc":
        f_rf, w_rf = svd_phase_benchmark(channels, config)
        mode = "fully-connected"
    elif method == "ao-sc":
        if rng is None:
            rng = np.random.default_rng(config.rng_seed)
        result = ao_analog_subconnected(
            channels, config.num_subarrays, config.tx_rf_chains,
            config.rx_rf_chains, noise, rng,
            max_iters=ao_max_iters, tol=ao_tol,
        )
        f_rf, w_rf = result.f_rf, result.w_rf
        mode = "sub-connected"
    else:  # fd
        f_rf = np.eye(n_t, dtype=np.complex128)
        w_rf = np.stack([np.eye(n_r, dtype=np.complex128)] * n_users)
        mode = "fully-digital"
    t_analog = time.perf_counter() - t0

    t0 = time.perf_counter()
    f_bb, w_bb_list, _ = bd_digital(channels, f_rf, w_rf, n_s)
    col_norms = np.linalg.norm(f_rf @ f_bb, axis=0)
    col_norms[col_norms == 0] = 1.0
    f_bb = f_bb / col_norms[None, :]

    gains = np.zeros(n_users * n_s)
    for u in range(n_users):
        cols = slice(u * n_s, (u + 1) * n_s)
        w_eff = w_rf[u] @ w_bb_list[u]
        link = w_eff.conj().T @ channels[u] @ f_rf @ f_bb[:, cols]
        noise_shape = np.real(np.diag(w_eff.conj().T @ w_eff))
        gains[cols] = np.abs(np.diag(link)) / np.sqrt(np.maximum(noise_shape, 1e-300))
    t_digital = time.perf_counter() - t0

    t0 = time.perf_counter()
    powers = waterfilling(gains, config.total_power_w, noise)
    t_power = time.perf_counter() - t0

    bf = BeamformerSet(
        f_rf=f_rf, f_bb=f_bb, w_rf=np.asarray(w_rf),
        w_bb=np.stack(w_bb_list), power_alloc=powers,
        mode=mode, num_subarrays=config.num_subarrays,
    )
    timings = {"analog_s": t_analog, "digital_s": t_digital, "power_s": t_power}
    return bf, timings


def _write_matrix(stream, name: str, matrix: np.ndarray) -> None:
    m = np.atleast_2d(matrix)
    stream.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
    for row in range(m.shape[0]):
        for col in range(m.shape[1]):
            v = complex(m[row, col])
            stream.write(f"{row},{col},{v.real:.9g},{v.imag:.9g}\n")


def dump_beamformers(bf: BeamformerSet, stream) -> None:
    """Sectioned text dump in the channel-dump entry format."""
    _write_matrix(stream, "FRF", bf.f_rf)
    _write_matrix(stream, "FBB", bf.f_bb)
    for u in range(bf.num_users):
        _write_matrix(stream, f"WRFu{u}", bf.w_rf[u])
    for u in range(bf.num_users):
        _write_matrix(stream, f"WBBu{u}", bf.w_bb[u])
    _write_matrix(stream, "P", bf.power_diagonal.reshape(-1, 1))
