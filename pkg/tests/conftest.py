"""Shared strategies and helpers for the test suite."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from dlcz_lab import fock
from dlcz_lab.model import RestrictedDensityMatrix


def random_density(
    seed: int, n_modes: int, n_max: int, max_total: int | None = None
) -> fock.FockDensity:
    """Random mixed state from a seed: mixture of <= 3 random pure states.

    With ``max_total`` set, amplitudes are restricted to basis states whose
    total photon number does not exceed it (useful for exactness contracts
    that only hold below the truncation boundary).
    """
    rng = np.random.default_rng(seed)
    d = n_max + 1
    dim = d**n_modes
    occs = np.indices((d,) * n_modes).reshape(n_modes, -1).T
    totals = occs.sum(axis=1)
    mask = np.ones(dim, dtype=bool) if max_total is None else (totals <= max_total)
    k = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(k))
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for w in weights:
        vec = np.zeros(dim, dtype=np.complex128)
        vec[mask] = rng.normal(size=mask.sum()) + 1j * rng.normal(size=mask.sum())
        vec /= np.linalg.norm(vec)
        rho += w * np.outer(vec, vec.conj())
    return fock.FockDensity(n_modes, n_max, rho)


def random_restricted(seed: int) -> RestrictedDensityMatrix:
    """Random physical restricted matrix (normalized, |d| within bound)."""
    rng = np.random.default_rng(seed)
    p00, p01, p10, p11 = rng.dirichlet(np.ones(4))
    frac = rng.uniform(0.0, 1.0)
    phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
    d = frac * np.sqrt(p01 * p10) * phase
    return RestrictedDensityMatrix(p00=p00, p01=p01, p10=p10, p11=p11, d=complex(d))


seeds = st.integers(min_value=0, max_value=2**32 - 1)
unit_floats = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
