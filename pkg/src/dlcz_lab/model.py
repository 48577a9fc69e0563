"""Closed-form counting model for two-ensemble heralded entanglement.

Everything in this module is algebra on a handful of measured numbers:

* ``chi`` — excitation probability per write pulse per ensemble; the
  normalized field-1/field-2 cross-correlation of a single ensemble is
  ``g12 = 1 + 1/chi``, so ``g12 > 2`` marks the nonclassical border.
* ``p_c`` — conditional probability of a field-2 detection from one
  ensemble given that ensemble produced the herald.
* ``xi`` — field-2 mode overlap at the readout beamsplitter (1 = perfect);
  it multiplies the interference visibility.

The heralded two-mode state, restricted to at most one photon per readout
mode, is described by the vacuum weight ``p00``, the one-photon weights
``p10``/``p01``, the two-photon weight ``p11`` and the single coherence
``d`` between |1,0> and |0,1>.  The concurrence of that restricted matrix
is ``C = max(0, (2|d| - 2 sqrt(p00 p11)) / P)`` with ``P`` the total
weight.  Feeding the model diagonals and the visibility-limited coherence
through that expression gives the closed-form concurrence

    C ~ max[0, p_c (V - 2 sqrt((1 - p_c) / g12))],   V = xi (g12 - 1)/(g12 + 1)

up to the O(p_c^2/g12) normalization carried exactly here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

# Agreement contract between the closed form and the restricted-matrix
# composition (they are the same algebra, so this is essentially exact).
COMPOSITION_RTOL = 1e-9
# Root-finding contracts.
THRESHOLD_RTOL = 1e-10
SEPARABILITY_ATOL = 1e-9  # seconds


def g12_from_chi(chi: float) -> float:
    """Ideal single-ensemble cross-correlation 1 + 1/chi."""
    if not 0.0 < chi < 1.0:
        raise ValueError(f"chi must be in (0, 1), got {chi}")
    return 1.0 + 1.0 / chi


def chi_from_g12(g12: float) -> float:
    """Inverse of ``g12_from_chi``; requires g12 > 1."""
    if g12 <= 1.0:
        raise ValueError(f"g12 must exceed 1 (uncorrelated floor), got {g12}")
    return 1.0 / (g12 - 1.0)


def visibility(g12: float, xi: float) -> float:
    """Readout interference visibility xi (g12 - 1) / (g12 + 1)."""
    if g12 < 1.0:
        raise ValueError(f"g12 must be >= 1, got {g12}")
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must be in [0, 1], got {xi}")
    return xi * (g12 - 1.0) / (g12 + 1.0)


@dataclass(frozen=True)
class ModelParams:
    """Operating point of the counting model.

    ``g12`` may be given (measured) or left None to be derived from
    ``chi``.  ``herald_sign`` is +1 for the herald detector that prepares
    the symmetric superposition and -1 for the antisymmetric one; it only
    shifts the coherence phase by pi.
    """

    chi: float
    p_c: float
    xi: float = 1.0
    theta: float = 0.0
    g12: Optional[float] = None
    herald_sign: int = +1

    def __post_init__(self) -> None:
        if not 0.0 < self.chi < 1.0:
            raise ValueError(f"chi must be in (0, 1), got {self.chi}")
        if not 0.0 <= self.p_c <= 1.0:
            raise ValueError(f"p_c must be in [0, 1], got {self.p_c}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must be in [0, 1], got {self.xi}")
        if self.herald_sign not in (+1, -1):
            raise ValueError(f"herald_sign must be +1 or -1, got {self.herald_sign}")
        if self.g12 is None:
            object.__setattr__(self, "g12", g12_from_chi(self.chi))
        elif self.g12 <= 1.0:
            raise ValueError(f"g12 must exceed 1, got {self.g12}")


@dataclass(frozen=True)
class RestrictedDensityMatrix:
    """Two-mode readout state restricted to <= 1 photon per mode.

    Stored unnormalized: ``p`` entries are outcome weights and ``P`` is
    their sum.  ``d`` is the coherence between |1,0> and |0,1>.
    """

    p00: float
    p01: float
    p10: float
    p11: float
    d: complex

    @property
    def total(self) -> float:
        return self.p00 + self.p01 + self.p10 + self.p11

    def normalized(self) -> "RestrictedDensityMatrix":
        p = self.total
        if p <= 0.0:
            raise ValueError("restricted matrix has no weight")
        return RestrictedDensityMatrix(
            self.p00 / p, self.p01 / p, self.p10 / p, self.p11 / p, self.d / p
        )

    def validate(self, atol: float = 1e-12) -> None:
        for name in ("p00", "p01", "p10", "p11"):
            value = getattr(self, name)
            if value < -atol:
                raise ValueError(f"{name} = {value} is negative")
        bound = math.sqrt(max(self.p01, 0.0) * max(self.p10, 0.0))
        if abs(self.d) > bound + 1e-12:
            raise ValueError(
                f"coherence |d| = {abs(self.d):.6g} exceeds sqrt(p01 p10) = {bound:.6g}"
            )

    def as_matrix(self) -> np.ndarray:
        """4x4 matrix in the (|00>, |01>, |10>, |11>) basis."""
        m = np.zeros((4, 4), dtype=np.complex128)
        m[0, 0] = self.p00
        m[1, 1] = self.p01
        m[2, 2] = self.p10
        m[3, 3] = self.p11
        m[1, 2] = np.conj(self.d)
        m[2, 1] = self.d
        return m


@dataclass(frozen=True)
class ConcurrenceResult:
    """Concurrence C = max(0, C0); ``sigma`` is the statistical error on C0
    when one was estimated (bootstrap or Monte Carlo propagation)."""

    C: float
    C0: float
    sigma: Optional[float] = None


def _restricted_from_point(
    p_c: float, xi: float, g12: float, theta: float, herald_sign: int
) -> RestrictedDensityMatrix:
    v = visibility(g12, xi)
    phase = theta if herald_sign > 0 else theta + math.pi
    d = 0.5 * v * p_c * complex(math.cos(phase), math.sin(phase))
    return RestrictedDensityMatrix(
        p00=1.0 - p_c,
        p01=0.5 * p_c,
        p10=0.5 * p_c,
        p11=p_c**2 / g12,
        d=d,
    )


def diagonals_from_model(params: ModelParams) -> RestrictedDensityMatrix:
    """Restricted matrix predicted by the counting model.

    p00 = 1 - p_c, p10 = p01 = p_c/2, p11 = p_c^2/g12, and the coherence
    magnitude is limited by the visibility: |d| = V p_c / 2 with phase
    theta (plus pi for the antisymmetric herald).
    """
    return _restricted_from_point(
        params.p_c, params.xi, params.g12, params.theta, params.herald_sign
    )


def concurrence_from_rho(rho: RestrictedDensityMatrix) -> ConcurrenceResult:
    """Concurrence of the restricted matrix: (2|d| - 2 sqrt(p00 p11)) / P."""
    total = rho.total
    if total <= 0.0:
        raise ValueError("restricted matrix has no weight")
    c0 = (2.0 * abs(rho.d) - 2.0 * math.sqrt(max(rho.p00, 0.0) * max(rho.p11, 0.0))) / total
    return ConcurrenceResult(C=max(0.0, c0), C0=c0)


def concurrence_c0(p_c: float, xi: float, g12: float, theta: float = 0.0) -> float:
    """Unclamped concurrence of the model state (may be negative).

    Exactly the composition concurrence_from_rho(diagonals_from_model(...)),
    i.e. p_c (V - 2 sqrt((1 - p_c)/g12)) divided by P = 1 + p_c^2/g12.
    Accepts any g12 > 1 (the operating point need not be nonclassical).
    """
    if not 0.0 <= p_c <= 1.0:
        raise ValueError(f"p_c must be in [0, 1], got {p_c}")
    if g12 <= 1.0:
        raise ValueError(f"g12 must exceed 1, got {g12}")
    return concurrence_from_rho(_restricted_from_point(p_c, xi, g12, theta, +1)).C0


def concurrence_analytic(p_c: float, xi: float, g12: float, theta: float = 0.0) -> float:
    """Closed-form concurrence max(0, C0) at the given operating point."""
    return max(0.0, concurrence_c0(p_c, xi, g12, theta))


def threshold_g12(p_c: float, xi: float, rel_tol: float = THRESHOLD_RTOL) -> float:
    """Correlation value where the concurrence first becomes positive.

    Solves V(g) = 2 sqrt((1 - p_c)/g) by bisection; the bracket expression
    is strictly increasing in g, so the root is unique.
    """
    if not 0.0 < p_c <= 1.0:
        raise ValueError(f"p_c must be in (0, 1] for a threshold, got {p_c}")
    if not 0.0 < xi <= 1.0:
        raise ValueError(f"xi must be in (0, 1] for a threshold, got {xi}")

    def bracket(g: float) -> float:
        return visibility(g, xi) - 2.0 * math.sqrt((1.0 - p_c) / g)

    lo = 1.0 + 1e-9
    hi = 2.0
    while bracket(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("no positive-concurrence threshold below g12 = 1e12")
    while (hi - lo) > rel_tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if bracket(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DecayModel:
    """Exponential decay of the readout observables during storage.

    At storage time tau (seconds):
        p_c(tau) = pc0 exp(-(tau - tau0)/tau_d_pc)
        g12(tau) = g_floor + (g0 - g_floor) exp(-(tau - tau0)/tau_d_g)
    ``tau0`` is the reference (shortest calibrated) storage time.
    """

    tau0: float
    pc0: float
    g0: float
    tau_d_pc: float
    tau_d_g: float
    g_floor: float = 1.0

    def __post_init__(self) -> None:
        if self.tau0 < 0.0:
            raise ValueError(f"tau0 must be >= 0, got {self.tau0}")
        if not 0.0 < self.pc0 <= 1.0:
            raise ValueError(f"pc0 must be in (0, 1], got {self.pc0}")
        if self.g_floor < 0.0:
            raise ValueError(f"g_floor must be >= 0, got {self.g_floor}")
        if self.g0 <= self.g_floor:
            raise ValueError(f"g0 = {self.g0} must exceed g_floor = {self.g_floor}")
        if not self.tau_d_pc > 0.0 or not self.tau_d_g > 0.0:
            raise ValueError("decay constants must be positive")


def decay_curves(decay: DecayModel, tau: float) -> tuple[float, float]:
    """(p_c, g12) at storage time tau."""
    if tau < decay.tau0:
        raise ValueError(f"tau = {tau} precedes the reference time tau0 = {decay.tau0}")
    dt = tau - decay.tau0
    p_c = decay.pc0 * math.exp(-dt / decay.tau_d_pc)
    g12 = decay.g_floor + (decay.g0 - decay.g_floor) * math.exp(-dt / decay.tau_d_g)
    return p_c, g12


def separability_time(
    decay: DecayModel, xi: float, abs_tol: float = SEPARABILITY_ATOL
) -> float:
    """Storage time where the model concurrence reaches zero.

    Bisection to ``abs_tol`` seconds (default 1 ns).  Returns ``math.inf``
    if the concurrence never crosses zero within ~400 decay constants (for
    example when g12 stays above threshold because g_floor is high or the
    decay constants are effectively infinite).
    """

    def c0_at(tau: float) -> float:
        p_c, g12 = decay_curves(decay, tau)
        if g12 <= 1.0 or p_c <= 0.0:
            return -1.0  # past any usable correlation: definitely separable
        return concurrence_c0(p_c, xi, g12)

    if c0_at(decay.tau0) <= 0.0:
        raise ValueError("concurrence is not positive at the reference time tau0")

    if math.isinf(decay.tau_d_pc) and math.isinf(decay.tau_d_g):
        return math.inf
    step = max(
        decay.tau_d_pc if math.isfinite(decay.tau_d_pc) else 0.0,
        decay.tau_d_g if math.isfinite(decay.tau_d_g) else 0.0,
    )
    lo = decay.tau0
    hi = None
    for j in range(1, 401):
        tau = decay.tau0 + j * step
        if c0_at(tau) <= 0.0:
            hi = tau
            break
        lo = tau
    if hi is None:
        return math.inf
    while (hi - lo) > abs_tol:
        mid = 0.5 * (lo + hi)
        if c0_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
