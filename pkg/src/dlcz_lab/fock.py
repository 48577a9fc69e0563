"""Truncated Fock-space engine for few-mode photon counting experiments.

States are dense density matrices over the product basis of ``n_modes``
bosonic modes, each truncated at ``n_max`` photons.  Basis states are
photon-number tuples ``(n_0, ..., n_{M-1})`` in lexicographic order, i.e.
row/column index ``i = ravel(n)`` with C ordering, so mode 0 is the most
significant digit.

The module provides the handful of primitives the rest of the package is
built from: two-mode squeezed vacuum sources, beamsplitters, single-mode
loss and phase channels, threshold-detector click statistics (with Poisson
dark counts) and Bayesian conditioning on a click pattern.  Everything is
exact on the truncated space; the only approximation anywhere is the
truncation itself, and the mass lost to it is tracked in
``FockDensity.tail`` so callers can decide whether ``n_max`` was enough.

Beamsplitter convention (this pins every herald/fringe sign downstream):
``apply_beamsplitter(state, a, b, T, phase)`` applies ``e^{i phase n}`` to
mode ``b`` and then the real mode rotation ``exp(theta (a†b − b†a))`` with
``theta = arccos(sqrt(T))``, so a single photon entering mode ``a`` exits
in ``a`` with probability ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import comb

# Numerical contracts for states and click statistics.
TRACE_ATOL = 1e-12
HERMITICITY_ATOL = 1e-12
PSD_ATOL = 1e-9
CLICK_NORM_ATOL = 1e-9

_EINSUM_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class DetectorModel:
    """Threshold (click / no-click) detector.

    ``efficiency`` is the probability that any single photon fires the
    detector; ``dark_mean`` is the Poisson mean of dark events in the
    detection window.  The no-click POVM element is diagonal in the photon
    number basis with weights ``(1 - efficiency)**n * exp(-dark_mean)``.
    ``number_resolving`` is carried as metadata for oracle experiments;
    click statistics in this module are threshold-only.
    """

    efficiency: float = 1.0
    dark_mean: float = 0.0
    number_resolving: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"detector efficiency must be in [0, 1], got {self.efficiency}")
        if self.dark_mean < 0.0:
            raise ValueError(f"dark_mean must be >= 0, got {self.dark_mean}")

    def no_click_weights(self, n_max: int) -> np.ndarray:
        """Diagonal weights of the no-click POVM element for n = 0..n_max."""
        if self.number_resolving:
            raise ValueError("click statistics are defined for threshold detectors only")
        n = np.arange(n_max + 1)
        return (1.0 - self.efficiency) ** n * math.exp(-self.dark_mean)


@dataclass(frozen=True)
class ClickPattern:
    """One joint outcome of a bank of threshold detectors.

    ``clicks`` is a bitmask over the measured modes in ascending mode
    order: bit ``i`` set means the detector on the i-th measured mode
    fired.
    """

    clicks: int
    probability: float

    def clicked(self, index: int) -> bool:
        return bool((self.clicks >> index) & 1)


@dataclass(frozen=True)
class FockDensity:
    """Density matrix on ``n_modes`` modes truncated at ``n_max`` photons.

    ``tail`` accumulates the probability mass lost to truncation (source
    tails plus any beamsplitter leakage out of incomplete photon-number
    sectors), so ``trace + tail`` stays 1 for states built from normalized
    sources through trace-preserving channels.
    """

    n_modes: int
    n_max: int
    elements: np.ndarray
    tail: float = 0.0

    def __post_init__(self) -> None:
        dim = self.dim
        arr = np.asarray(self.elements, dtype=np.complex128)
        if arr.shape != (dim, dim):
            raise ValueError(
                f"elements must be {dim}x{dim} for n_modes={self.n_modes}, "
                f"n_max={self.n_max}; got {arr.shape}"
            )
        object.__setattr__(self, "elements", arr)

    @property
    def local_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** self.n_modes

    def tensor(self) -> np.ndarray:
        """Reshape to 2*n_modes axes: ket axes 0..M-1, bra axes M..2M-1."""
        d = self.local_dim
        return self.elements.reshape((d,) * (2 * self.n_modes))

    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def populations(self) -> np.ndarray:
        """Joint photon-number distribution, shape (n_max+1,)*n_modes."""
        d = self.local_dim
        return np.real(np.diagonal(self.elements)).reshape((d,) * self.n_modes)


def _check_mode(state: FockDensity, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode index {mode} out of range for {state.n_modes} modes")


def _from_tensor(tensor: np.ndarray, state: FockDensity, tail: float) -> FockDensity:
    dim = state.dim
    return FockDensity(state.n_modes, state.n_max, tensor.reshape(dim, dim), tail)


def make_tmsv(chi: float, n_max: int) -> FockDensity:
    """Two-mode squeezed vacuum with pair-excitation probability ``chi``.

    The untruncated state is sum_n sqrt((1-chi) chi^n) |n, n>; populations
    follow the geometric law (1-chi) chi^n.  Truncation at ``n_max`` keeps
    the state normalized (renormalized) and records the removed mass
    chi^(n_max+1) in ``tail``.
    """
    if not 0.0 <= chi < 1.0:
        raise ValueError(f"chi must be in [0, 1), got {chi}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n = np.arange(n_max + 1)
    amps = chi ** (n / 2.0)
    amps = amps / math.sqrt(float(np.sum(amps**2)))
    dim = (n_max + 1) ** 2
    vec = np.zeros(dim, dtype=np.complex128)
    vec[n * (n_max + 1) + n] = amps  # |n, n> components
    rho = np.outer(vec, vec.conj())
    return FockDensity(2, n_max, rho, tail=chi ** (n_max + 1))


def _pure_vector(
    n_modes: int, n_max: int, amplitudes: Mapping[tuple[int, ...], complex]
) -> np.ndarray:
    d = n_max + 1
    vec = np.zeros(d**n_modes, dtype=np.complex128)
    for occ, amp in amplitudes.items():
        if len(occ) != n_modes:
            raise ValueError(f"occupation {occ} does not have {n_modes} entries")
        if any(not 0 <= k <= n_max for k in occ):
            raise ValueError(f"occupation {occ} exceeds n_max={n_max}")
        vec[int(np.ravel_multi_index(occ, (d,) * n_modes))] = amp
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("state has zero norm")
    return vec / norm


def pure_state(
    n_modes: int, n_max: int, amplitudes: Mapping[tuple[int, ...], complex]
) -> FockDensity:
    """Density matrix of a pure state given as {photon tuple: amplitude}."""
    vec = _pure_vector(n_modes, n_max, amplitudes)
    return FockDensity(n_modes, n_max, np.outer(vec, vec.conj()))


def vacuum(n_modes: int, n_max: int) -> FockDensity:
    return pure_state(n_modes, n_max, {(0,) * n_modes: 1.0})


def product(a: FockDensity, b: FockDensity) -> FockDensity:
    """Tensor product; modes of ``a`` come first."""
    if a.n_max != b.n_max:
        raise ValueError("tensor factors must share n_max")
    return FockDensity(
        a.n_modes + b.n_modes,
        a.n_max,
        np.kron(a.elements, b.elements),
        tail=a.tail + b.tail,
    )


def apply_phase(state: FockDensity, mode: int, phi: float) -> FockDensity:
    """Phase-space rotation e^{i phi n} on one mode."""
    _check_mode(state, mode)
    d = state.local_dim
    phases = np.exp(1j * phi * np.arange(d))
    t = state.tensor().copy()
    ket_shape = [1] * (2 * state.n_modes)
    ket_shape[mode] = d
    t *= phases.reshape(ket_shape)
    bra_shape = [1] * (2 * state.n_modes)
    bra_shape[state.n_modes + mode] = d
    t *= phases.conj().reshape(bra_shape)
    return _from_tensor(t, state, state.tail)


def _loss_kraus(n_max: int, survival: float) -> list[np.ndarray]:
    """Binomial loss Kraus operators A_l : |n> -> |n-l| on the truncated space."""
    d = n_max + 1
    ops = []
    for lost in range(d):
        a = np.zeros((d, d))
        for n in range(lost, d):
            a[n - lost, n] = math.sqrt(
                float(comb(n, lost)) * survival ** (n - lost) * (1.0 - survival) ** lost
            )
        ops.append(a)
    return ops


def apply_loss(state: FockDensity, mode: int, survival: float) -> FockDensity:
    """Pure-loss (beamsplitter-to-environment) channel on one mode.

    Exactly trace preserving on the truncated space: loss only lowers
    photon numbers, so nothing leaks past the cutoff.
    """
    _check_mode(state, mode)
    if not 0.0 <= survival <= 1.0:
        raise ValueError(f"survival must be in [0, 1], got {survival}")
    t = state.tensor()
    m = state.n_modes
    out = np.zeros_like(t)
    for a in _loss_kraus(state.n_max, survival):
        # A rho A^dagger, contracting the ket then the bra axis of `mode`.
        x = np.tensordot(a, t, axes=([1], [mode]))
        x = np.moveaxis(x, 0, mode)
        x = np.tensordot(x, a.conj(), axes=([m + mode], [1]))
        x = np.moveaxis(x, -1, m + mode)
        out += x
    return _from_tensor(out, state, state.tail)


_BS_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def _two_mode_unitary(ext_dim: int, transmittance: float, phase: float) -> np.ndarray:
    """Two-mode beamsplitter unitary on a local space of dimension ext_dim.

    Photon-number conserving by construction; residual cross-sector
    round-off from the matrix exponential is masked to exactly zero.
    """
    key = (ext_dim, transmittance, phase)
    cached = _BS_CACHE.get(key)
    if cached is not None:
        return cached
    theta = math.acos(math.sqrt(transmittance))
    a = np.diag(np.sqrt(np.arange(1, ext_dim)), 1)  # annihilation operator
    eye = np.eye(ext_dim)
    big_a = np.kron(a, eye)
    big_b = np.kron(eye, a)
    generator = theta * (big_a.T @ big_b - big_a @ big_b.T)
    u = expm(generator).astype(np.complex128)
    if phase != 0.0:
        u = u @ np.kron(eye, np.diag(np.exp(1j * phase * np.arange(ext_dim))))
    totals = (np.arange(ext_dim)[:, None] + np.arange(ext_dim)[None, :]).ravel()
    u[totals[:, None] != totals[None, :]] = 0.0
    _BS_CACHE[key] = u
    return u


def apply_beamsplitter(
    state: FockDensity,
    mode_a: int,
    mode_b: int,
    transmittance: float,
    phase: float = 0.0,
) -> FockDensity:
    """Mix two modes on a beamsplitter of the given intensity transmittance.

    The transform is computed exactly inside each total-photon sector by
    working in an extended local space (dimension 2*n_max+1) and projecting
    back to the cutoff.  Sectors with total photons <= n_max are complete,
    so for states supported there the operation is exactly unitary; for
    higher (incomplete) sectors, the projected-out mass is added to
    ``tail`` instead of being silently dropped.
    """
    _check_mode(state, mode_a)
    _check_mode(state, mode_b)
    if mode_a == mode_b:
        raise ValueError("beamsplitter needs two distinct modes")
    if not 0.0 <= transmittance <= 1.0:
        raise ValueError(f"transmittance must be in [0, 1], got {transmittance}")

    m = state.n_modes
    d = state.local_dim
    ext = 2 * state.n_max + 1
    u = _two_mode_unitary(ext, transmittance, phase).reshape(ext, ext, ext, ext)

    # Zero-pad the two target modes (ket and bra sides) up to the extended dim.
    t = state.tensor()
    shape = list(t.shape)
    for ax in (mode_a, mode_b, m + mode_a, m + mode_b):
        shape[ax] = ext
    padded = np.zeros(shape, dtype=np.complex128)
    sl = [slice(None)] * (2 * m)
    for ax in (mode_a, mode_b, m + mode_a, m + mode_b):
        sl[ax] = slice(0, d)
    padded[tuple(sl)] = t

    x = np.tensordot(u, padded, axes=([2, 3], [mode_a, mode_b]))
    x = np.moveaxis(x, [0, 1], [mode_a, mode_b])
    x = np.tensordot(x, u.conj(), axes=([m + mode_a, m + mode_b], [2, 3]))
    x = np.moveaxis(x, [-2, -1], [m + mode_a, m + mode_b])

    projected = x[tuple(sl)]
    trace_before = state.trace()
    flat_dim = d**m
    trace_after = float(np.real(np.trace(projected.reshape(flat_dim, flat_dim))))
    leak = max(trace_before - trace_after, 0.0)
    return _from_tensor(projected, state, state.tail + leak)


def _measured_modes(state: FockDensity, keep_modes: Sequence[int]) -> list[int]:
    keep = set(keep_modes)
    for mode in keep:
        _check_mode(state, mode)
    return [mode for mode in range(state.n_modes) if mode not in keep]


def reduce_to_modes(state: FockDensity, modes: Sequence[int]) -> FockDensity:
    """Partial trace keeping ``modes`` (in ascending order)."""
    keep = sorted(set(modes))
    traced = _measured_modes(state, keep)
    m = state.n_modes
    subs = list(_EINSUM_LETTERS[: 2 * m])
    for mode in traced:
        subs[m + mode] = subs[mode]
    out_subs = [subs[mode] for mode in keep] + [subs[m + mode] for mode in keep]
    t = np.einsum("".join(subs) + "->" + "".join(out_subs), state.tensor())
    return FockDensity(len(keep), state.n_max, t.reshape((state.local_dim ** len(keep),) * 2), state.tail)


def click_distribution(
    state: FockDensity, detectors: Sequence[DetectorModel]
) -> list[ClickPattern]:
    """Exact joint click distribution, one threshold detector per mode.

    Returns all 2**n_modes patterns ordered by bitmask (bit i = detector
    on mode i fired).  Probabilities sum to 1 up to float round-off
    (CLICK_NORM_ATOL) because the per-mode weights w0 + w1 = 1 exactly.
    """
    if len(detectors) != state.n_modes:
        raise ValueError(
            f"need one detector per mode: got {len(detectors)} for {state.n_modes} modes"
        )
    pops = state.populations()
    # Renormalize out the truncation tail so the distribution is a proper
    # probability law on the truncated space.
    total = float(pops.sum())
    if total <= 0.0:
        raise ValueError("state has no probability mass")
    pops = pops / total
    w0 = [det.no_click_weights(state.n_max) for det in detectors]
    patterns = []
    for bits in range(2 ** state.n_modes):
        weights = [
            (1.0 - w0[mode]) if (bits >> mode) & 1 else w0[mode]
            for mode in range(state.n_modes)
        ]
        p = pops
        for mode in range(state.n_modes):
            shape = [1] * state.n_modes
            shape[mode] = state.local_dim
            p = p * weights[mode].reshape(shape)
        patterns.append(ClickPattern(bits, float(p.sum())))
    return patterns


def condition_on_pattern(
    state: FockDensity,
    detectors: Sequence[DetectorModel],
    pattern: int,
    keep_modes: Sequence[int],
) -> FockDensity:
    """Normalized post-measurement state given a click pattern.

    ``detectors`` covers the measured modes (every mode not in
    ``keep_modes``, ascending); bit i of ``pattern`` is the outcome of the
    detector on the i-th measured mode.  Raises on a zero-probability
    pattern.
    """
    keep = sorted(set(keep_modes))
    measured = _measured_modes(state, keep)
    if len(detectors) != len(measured):
        raise ValueError(
            f"need one detector per measured mode: got {len(detectors)} for {len(measured)}"
        )
    if not 0 <= pattern < 2 ** len(measured):
        raise ValueError(f"pattern {pattern} out of range for {len(measured)} detectors")

    m = state.n_modes
    d = state.local_dim
    subs = list(_EINSUM_LETTERS[: 2 * m])
    weight_ops = []
    weight_subs = []
    for i, mode in enumerate(measured):
        subs[m + mode] = subs[mode]  # diagonal in the measured mode
        w0 = detectors[i].no_click_weights(state.n_max)
        weight_ops.append((1.0 - w0) if (pattern >> i) & 1 else w0)
        weight_subs.append(subs[mode])
    out_subs = [subs[mode] for mode in keep] + [subs[m + mode] for mode in keep]
    expr = ",".join(["".join(subs)] + weight_subs) + "->" + "".join(out_subs)
    t = np.einsum(expr, state.tensor(), *weight_ops)
    dim_keep = d ** len(keep)
    rho = t.reshape(dim_keep, dim_keep)
    prob = float(np.real(np.trace(rho)))
    if prob <= 0.0:
        raise ValueError(f"conditioning on zero-probability pattern {pattern:#b}")
    return FockDensity(len(keep), state.n_max, rho / prob, tail=state.tail)


def mean_photon(state: FockDensity, mode: int) -> float:
    """Expectation of the photon number operator on one mode."""
    _check_mode(state, mode)
    pops = state.populations()
    n = np.arange(state.local_dim)
    shape = [1] * state.n_modes
    shape[mode] = state.local_dim
    return float((pops * n.reshape(shape)).sum())


def fidelity_with_pure(
    state: FockDensity, amplitudes: Mapping[tuple[int, ...], complex]
) -> float:
    """<psi|rho|psi> against a (normalized) pure target state."""
    vec = _pure_vector(state.n_modes, state.n_max, amplitudes)
    return float(np.real(vec.conj() @ state.elements @ vec))


def validate_state(state: FockDensity, psd_atol: float = PSD_ATOL) -> None:
    """Assert the physicality contracts: Hermitian, PSD, trace + tail = 1."""
    rho = state.elements
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > HERMITICITY_ATOL:
        raise ValueError(f"state is not Hermitian: max deviation {herm:.3e}")
    eigs = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    if float(eigs.min()) < -psd_atol:
        raise ValueError(f"state is not positive semidefinite: min eigenvalue {eigs.min():.3e}")
    tr = state.trace()
    if not (1.0 - state.tail - 1e-9) <= tr <= 1.0 + 1e-9:
        raise ValueError(f"trace {tr} inconsistent with tail bound {state.tail}")
