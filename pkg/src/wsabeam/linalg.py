"""Deterministic SVD helpers shared by the precoder algorithms."""

from __future__ import annotations

import numpy as np


def phase_normalized_columns(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotate each column so its largest-modulus entry is real positive.

    Returns the rotated matrix and the unit phases that were removed, so
    callers can apply the same rotation to paired factors.
    """
    v = np.array(v, copy=True)
    phases = np.ones(v.shape[1], dtype=np.complex128)
    for j in range(v.shape[1]):
        idx = int(np.argmax(np.abs(v[:, j])))
        pivot = v[idx, j]
        mag = abs(pivot)
        if mag > 0:
            phases[j] = pivot / mag
            v[:, j] *= phases[j].conjugate()
    return v, phases


def deterministic_svd(a: np.ndarray, full_matrices: bool = False):
    """SVD with each right singular vector's phase anchored to be real positive.

    The matching phase is applied to the paired left vector so
    U @ diag(s) @ Vh still reconstructs the input; surplus columns
    (null-space bases under ``full_matrices=True``) are anchored
    independently.
    """
    u, s, vh = np.linalg.svd(a, full_matrices=full_matrices)
    v = vh.conj().T
    v, phases = phase_normalized_columns(v)
    paired = min(u.shape[1], len(s), v.shape[1])
    u = np.array(u, copy=True)
    u[:, :paired] *= phases[:paired].conjugate()[None, :]
    return u, s, v.conj().T
