"""Hot numeric kernels with a numba fast path and a pure-numpy twin.

The beam-pattern sweep evaluates |a(p)^H f|^2 over tens of thousands of
grid points times ~1e3 antennas; that grid-times-antenna loop dominates
pattern runtime, so it is the one kernel worth JIT compiling.  Set
``WSABEAM_NUMBA=0`` to force the numpy path (the two agree to roundoff;
see benchmarks/bench_pattern.py for the speed comparison).  Parallelism
is across grid points only, so each point's antenna sum stays a
deterministic sequential reduction.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("WSABEAM_NUMBA", "1") != "0"

_CHUNK = 4096


def pattern_gain_numpy(positions: np.ndarray, points: np.ndarray,
                       wavenumber: float, column: np.ndarray) -> np.ndarray:
    """|sum_n exp(-j*k*r_n) f_n|^2 per point, chunked to bound memory."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    column = np.ascontiguousarray(column, dtype=np.complex128)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], _CHUNK):
        chunk = points[start:start + _CHUNK]
        r = np.linalg.norm(chunk[:, None, :] - positions[None, :, :], axis=2)
        field = np.exp(-1j * wavenumber * r) @ column
        out[start:start + _CHUNK] = np.abs(field) ** 2
    return out


if numba is not None:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _pattern_gain_jit(positions, points, wavenumber, col_re, col_im):  # pragma: no cover
        n_points = points.shape[0]
        n_ant = positions.shape[0]
        out = np.empty(n_points)
        for i in numba.prange(n_points):
            px = points[i, 0]
            py = points[i, 1]
            pz = points[i, 2]
            acc_re = 0.0
            acc_im = 0.0
            for t in range(n_ant):
                dx = px - positions[t, 0]
                dy = py - positions[t, 1]
                dz = pz - positions[t, 2]
                phase = -wavenumber * np.sqrt(dx * dx + dy * dy + dz * dz)
                c = np.cos(phase)
                s = np.sin(phase)
                acc_re += c * col_re[t] - s * col_im[t]
                acc_im += c * col_im[t] + s * col_re[t]
            out[i] = acc_re * acc_re + acc_im * acc_im
        return out

    def pattern_gain_numba(positions, points, wavenumber, column):
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        points = np.ascontiguousarray(points, dtype=np.float64)
        column = np.asarray(column, dtype=np.complex128)
        return _pattern_gain_jit(
            positions, points, float(wavenumber),
            np.ascontiguousarray(column.real), np.ascontiguousarray(column.imag),
        )

else:  # pragma: no cover
    pattern_gain_numba = None


def pattern_gain(positions: np.ndarray, points: np.ndarray,
                 wavenumber: float, column: np.ndarray) -> np.ndarray:
    """Beam-pattern power toward each point for one precoder column."""
    if USE_NUMBA:
        return pattern_gain_numba(positions, points, wavenumber, column)
    return pattern_gain_numpy(positions, points, wavenumber, column)
