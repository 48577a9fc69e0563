"""Reconstruction of the restricted two-mode state from click records.

Two-step procedure, mirroring how the measurement actually runs:

* separate readout: the four joint-click fractions conditioned on a
  herald give the diagonal weights (p00, p01, p10, p11) directly;
* interfering readout: conditional click rates versus fringe phase are
  fitted to rate(phi) = A (1 + V cos(phi - phi0)) through the linear
  parameterization (A, A V cos phi0, A V sin phi0), and the visibility
  bounds the coherence via d = V (p10 + p01) / 2.

Each herald type and each detector yields its own fringe; the four fits
are combined by inverse-variance weighting after aligning the known
phase relations (the second detector is half a fringe away, and the
second herald type carries an extra pi).  Uncertainties on the final
concurrence come from a multinomial bootstrap over the recorded
contingency tables, which is equivalent to resampling heralded trials
with replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .engine import CharacterizeCounts, OUTCOME_A, OUTCOME_AB, OUTCOME_B
from .errors import FitError
from .model import ConcurrenceResult, RestrictedDensityMatrix, concurrence_from_rho
from .records import RecordSet

DEFAULT_BOOTSTRAP = 1000
MIN_BOOTSTRAP = 100
LOW_HERALD_COUNT = 100
_BOOTSTRAP_STREAM = 0xB007


def _wrap_phase(phi: float) -> float:
    """Wrap to (-pi, pi]."""
    return float(math.atan2(math.sin(phi), math.cos(phi)))


# ---------------------------------------------------------------------------
# diagonals (separate readout)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalEstimate:
    """Joint-click fractions of heralded separate-readout trials."""

    p00: float
    p01: float
    p10: float
    p11: float
    sigma_p00: float
    sigma_p01: float
    sigma_p10: float
    sigma_p11: float
    n_heralds: int

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p00, self.p01, self.p10, self.p11)


def _diagonals_from_counts(counts: np.ndarray, n: int) -> DiagonalEstimate:
    # counts indexed by outcome 2*click_2a + click_2b, pooled over heralds
    if n <= 0:
        raise FitError("no heralded separate-readout trials to estimate diagonals from")
    p_none = counts[0] / n
    p_b = counts[OUTCOME_B] / n
    p_a = counts[OUTCOME_A] / n
    p_ab = counts[OUTCOME_AB] / n

    def sig(p: float) -> float:
        return math.sqrt(max(p * (1.0 - p), 0.0) / n)

    return DiagonalEstimate(
        p00=p_none,
        p01=p_b,
        p10=p_a,
        p11=p_ab,
        sigma_p00=sig(p_none),
        sigma_p01=sig(p_b),
        sigma_p10=sig(p_a),
        sigma_p11=sig(p_ab),
        n_heralds=n,
    )


def separate_outcome_counts(records: RecordSet) -> np.ndarray:
    """Per-herald outcome counts, shape (2, 4), outcome = 2*click_2a + click_2b."""
    if records.header.mode != "S":
        raise FitError(
            f"diagonal estimation needs separate-readout records, got mode {records.header.mode!r}"
        )
    outcome = 2 * records.click_2a.astype(np.int64) + records.click_2b.astype(np.int64)
    counts = np.zeros((2, 4), dtype=np.int64)
    np.add.at(counts, (records.herald.astype(np.int64), outcome), 1)
    return counts


def estimate_diagonals(records: RecordSet) -> DiagonalEstimate:
    """Diagonal weights of the restricted matrix, with binomial errors.

    A click at the detector watching the U path means one photon in mode
    U (weight p10); both herald types measure the same diagonals, so the
    counts are pooled.
    """
    counts = separate_outcome_counts(records)
    return _diagonals_from_counts(counts.sum(axis=0), int(len(records)))


# ---------------------------------------------------------------------------
# fringe fit (interfering readout)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FringeData:
    """Conditional counts per herald type and fringe phase."""

    phases: np.ndarray  # (K,)
    n_heralds: np.ndarray  # (2, K)
    counts_2a: np.ndarray  # (2, K)
    counts_2b: np.ndarray  # (2, K)

    def __post_init__(self) -> None:
        k = len(self.phases)
        for name in ("n_heralds", "counts_2a", "counts_2b"):
            if getattr(self, name).shape != (2, k):
                raise ValueError(f"{name} must have shape (2, {k})")
        if k < 3:
            raise FitError(f"fringe fitting needs >= 3 phases, got {k}")
        if np.any(self.counts_2a > self.n_heralds) or np.any(self.counts_2b > self.n_heralds):
            raise ValueError("conditional counts exceed herald counts")


def fringe_data_from_records(records: RecordSet) -> FringeData:
    if records.header.mode != "I":
        raise FitError(
            f"fringe fitting needs interfering-readout records, got mode {records.header.mode!r}"
        )
    phases = np.asarray(records.header.phases, dtype=float)
    k = len(phases)
    if k < 3:
        raise FitError(f"fringe fitting needs >= 3 phases, got {k}")
    h = records.herald.astype(np.int64)
    cell = records.phase_index.astype(np.int64)
    n_heralds = np.zeros((2, k), dtype=np.int64)
    counts_2a = np.zeros((2, k), dtype=np.int64)
    counts_2b = np.zeros((2, k), dtype=np.int64)
    np.add.at(n_heralds, (h, cell), 1)
    np.add.at(counts_2a, (h, cell), records.click_2a.astype(np.int64))
    np.add.at(counts_2b, (h, cell), records.click_2b.astype(np.int64))
    return FringeData(phases=phases, n_heralds=n_heralds, counts_2a=counts_2a, counts_2b=counts_2b)


@dataclass(frozen=True)
class SingleFringeFit:
    """One herald/detector fringe: rate(phi) = A + B1 cos phi + B2 sin phi."""

    amplitude: float  # A
    visibility: float  # sqrt(B1^2+B2^2)/A, clamped to [0, 1]
    phase: float  # atan2(B2, B1)
    sigma_visibility: float
    sigma_phase: float
    clamped: bool


def _fit_single_fringe(
    phases: np.ndarray, counts: np.ndarray, n_heralds: np.ndarray
) -> SingleFringeFit:
    mask = n_heralds > 0
    if mask.sum() < 3:
        raise FitError("fringe fit needs counts at >= 3 distinct phases")
    phi = phases[mask]
    n = n_heralds[mask].astype(float)
    y = counts[mask] / n
    # plug-in binomial variance with a half-count floor so empty rates
    # still carry finite weight
    y_tilde = (counts[mask] + 0.5) / (n + 1.0)
    var = y_tilde * (1.0 - y_tilde) / n

    x = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    w = 1.0 / var
    xtwx = x.T @ (w[:, None] * x)
    if np.linalg.cond(xtwx) > 1e12:
        raise FitError("degenerate fringe design matrix (phases not distinct enough)")
    cov = np.linalg.inv(xtwx)
    beta = cov @ (x.T @ (w * y))
    a, b1, b2 = beta
    if a <= 0.0:
        raise FitError(f"fringe fit produced non-positive mean rate A = {a:.3e}")
    r = math.hypot(b1, b2)
    v = r / a
    clamped = v > 1.0
    # delta-method errors from the parameter covariance
    if r > 0.0:
        grad_v = np.array([-r / a**2, b1 / (r * a), b2 / (r * a)])
        grad_phi = np.array([0.0, -b2 / r**2, b1 / r**2])
        # a circular phase is never more uncertain than "unknown"; the cap
        # also tames the delta-method blowup as r -> 0
        sigma_phase = min(math.sqrt(max(grad_phi @ cov @ grad_phi, 0.0)), math.pi)
    else:
        grad_v = np.array([0.0, 1.0 / a, 1.0 / a])
        sigma_phase = math.pi  # phase undefined for a flat fringe
    sigma_v = math.sqrt(max(grad_v @ cov @ grad_v, 0.0))
    return SingleFringeFit(
        amplitude=float(a),
        visibility=min(v, 1.0),
        phase=float(math.atan2(b2, b1)),
        sigma_visibility=float(sigma_v),
        sigma_phase=float(sigma_phase),
        clamped=clamped,
    )


@dataclass(frozen=True)
class FringeFit:
    """Combined visibility and per-herald fringe phases.

    ``phase_d1a``/``phase_d1b`` are referenced to the D2a detector; the
    D2b fringes enter each combination shifted by pi (the two output
    ports are half a fringe apart).
    """

    visibility: float
    sigma_visibility: float
    phase_d1a: float
    sigma_phase_d1a: float
    phase_d1b: float
    sigma_phase_d1b: float
    per_fringe: tuple[SingleFringeFit, ...]  # (d1a,D2a), (d1a,D2b), (d1b,D2a), (d1b,D2b)
    any_clamped: bool


def _inverse_variance(values: Sequence[float], sigmas: Sequence[float]) -> tuple[float, float]:
    weights = np.array([1.0 / max(s, 1e-15) ** 2 for s in sigmas])
    combined = float(np.dot(weights, values) / weights.sum())
    return combined, float(1.0 / math.sqrt(weights.sum()))


def _combine_phases(
    values: Sequence[float], sigmas: Sequence[float]
) -> tuple[float, float]:
    # circular inverse-variance combination (phases may straddle +-pi)
    weights = np.array([1.0 / max(s, 1e-15) ** 2 for s in sigmas])
    z = complex(np.sum(weights * np.exp(1j * np.asarray(values)))) / weights.sum()
    return _wrap_phase(math.atan2(z.imag, z.real)), float(1.0 / math.sqrt(weights.sum()))


def fit_fringe(data: FringeData) -> FringeFit:
    """Fit all four fringes and combine by inverse-variance weighting."""
    fits = []
    for h in (0, 1):
        for counts in (data.counts_2a[h], data.counts_2b[h]):
            fits.append(_fit_single_fringe(data.phases, counts, data.n_heralds[h]))
    v, sigma_v = _inverse_variance(
        [f.visibility for f in fits], [f.sigma_visibility for f in fits]
    )
    # D2b fringes sit half a fringe from D2a on the same herald.
    phase_a, sigma_a = _combine_phases(
        [fits[0].phase, fits[1].phase - math.pi],
        [fits[0].sigma_phase, fits[1].sigma_phase],
    )
    phase_b, sigma_b = _combine_phases(
        [fits[2].phase, fits[3].phase - math.pi],
        [fits[2].sigma_phase, fits[3].sigma_phase],
    )
    return FringeFit(
        visibility=min(max(v, 0.0), 1.0),
        sigma_visibility=sigma_v,
        phase_d1a=phase_a,
        sigma_phase_d1a=sigma_a,
        phase_d1b=phase_b,
        sigma_phase_d1b=sigma_b,
        per_fringe=tuple(fits),
        any_clamped=any(f.clamped for f in fits),
    )


def herald_phase_shift(fit: FringeFit) -> tuple[float, float]:
    """(phase_d1b - phase_d1a) wrapped to (-pi, pi], with its error."""
    delta = _wrap_phase(fit.phase_d1b - fit.phase_d1a)
    return delta, math.hypot(fit.sigma_phase_d1a, fit.sigma_phase_d1b)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def assemble_rho(
    diagonals: DiagonalEstimate, visibility: float
) -> tuple[RestrictedDensityMatrix, bool]:
    """Restricted matrix with the visibility-bounded coherence.

    d = V (p10 + p01) / 2, clamped to the physicality bound
    sqrt(p01 p10) when statistical fluctuations push it past (the clamp
    is reported so callers can flag the repair).
    """
    d = visibility * (diagonals.p10 + diagonals.p01) / 2.0
    bound = math.sqrt(diagonals.p01 * diagonals.p10)
    clamped = d > bound
    rho = RestrictedDensityMatrix(
        p00=diagonals.p00,
        p01=diagonals.p01,
        p10=diagonals.p10,
        p11=diagonals.p11,
        d=min(d, bound),
    )
    return rho, clamped


# ---------------------------------------------------------------------------
# characterization statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationStats:
    """Unconditional/joint detection statistics of one ensemble."""

    p1: float
    p2: float
    p12: float
    g12: float
    p_c: float
    sigma_p1: float
    sigma_p2: float
    sigma_p12: float
    sigma_g12: float
    sigma_p_c: float
    n_trials: int


CountsLike = Union[CharacterizeCounts, tuple[int, int, int, int]]


def estimate_correlations(counts: CountsLike) -> CorrelationStats:
    """Plug-in estimators for (p1, p2, p12, g12, p_c) with delta-method errors.

    Accepts the engine's CharacterizeCounts or a plain tuple
    (n_trials, n_1, n_2, n_12) — the sufficient statistics of a
    characterization run.
    """
    if isinstance(counts, CharacterizeCounts):
        n, n1, n2, n12 = counts.n_trials, counts.n_1, counts.n_2, counts.n_12
    else:
        n, n1, n2, n12 = counts
    if n <= 0:
        raise FitError("characterization needs at least one trial")
    if n1 <= 0 or n2 <= 0:
        raise FitError(f"cannot form correlations with n_1 = {n1}, n_2 = {n2}")
    if n12 > min(n1, n2):
        raise ValueError("joint count exceeds a marginal count")

    p1, p2, p12 = n1 / n, n2 / n, n12 / n
    g12 = p12 / (p1 * p2)
    p_c = p12 / p1

    # multinomial covariance of (p1, p2, p12), noting p12 is a sub-event
    # of both marginals
    cov = (
        np.array(
            [
                [p1 * (1 - p1), p12 - p1 * p2, p12 * (1 - p1)],
                [p12 - p1 * p2, p2 * (1 - p2), p12 * (1 - p2)],
                [p12 * (1 - p1), p12 * (1 - p2), p12 * (1 - p12)],
            ]
        )
        / n
    )
    grad_g = np.array([-g12 / p1, -g12 / p2, g12 / p12]) if p12 > 0 else np.zeros(3)
    grad_pc = np.array([-p_c / p1, 0.0, p_c / p12]) if p12 > 0 else np.zeros(3)
    sigma_g = math.sqrt(max(grad_g @ cov @ grad_g, 0.0))
    sigma_pc = math.sqrt(max(grad_pc @ cov @ grad_pc, 0.0))
    return CorrelationStats(
        p1=p1,
        p2=p2,
        p12=p12,
        g12=g12,
        p_c=p_c,
        sigma_p1=math.sqrt(p1 * (1 - p1) / n),
        sigma_p2=math.sqrt(p2 * (1 - p2) / n),
        sigma_p12=math.sqrt(p12 * (1 - p12) / n),
        sigma_g12=sigma_g,
        sigma_p_c=sigma_pc,
        n_trials=n,
    )


# ---------------------------------------------------------------------------
# bootstrap and the full pipeline
# ---------------------------------------------------------------------------


def _pipeline_c0(
    sep_counts: np.ndarray,
    n_sep: int,
    fringe: FringeData,
) -> tuple[RestrictedDensityMatrix, DiagonalEstimate, FringeFit, bool, float]:
    diagonals = _diagonals_from_counts(sep_counts, n_sep)
    fit = fit_fringe(fringe)
    rho, clamped = assemble_rho(diagonals, fit.visibility)
    c0 = concurrence_from_rho(rho).C0
    return rho, diagonals, fit, clamped, c0


def _fringe_from_tables(phases: np.ndarray, tables: np.ndarray) -> FringeData:
    # tables: (2, K, 4) outcome counts
    return FringeData(
        phases=phases,
        n_heralds=tables.sum(axis=2),
        counts_2a=tables[:, :, OUTCOME_A] + tables[:, :, OUTCOME_AB],
        counts_2b=tables[:, :, OUTCOME_B] + tables[:, :, OUTCOME_AB],
    )


def interfere_outcome_tables(records: RecordSet) -> tuple[np.ndarray, np.ndarray]:
    """(phases, counts[herald, phase, outcome]) from interfering records."""
    if records.header.mode != "I":
        raise FitError(
            f"expected interfering-readout records, got mode {records.header.mode!r}"
        )
    phases = np.asarray(records.header.phases, dtype=float)
    k = len(phases)
    outcome = 2 * records.click_2a.astype(np.int64) + records.click_2b.astype(np.int64)
    tables = np.zeros((2, k, 4), dtype=np.int64)
    np.add.at(
        tables,
        (records.herald.astype(np.int64), records.phase_index.astype(np.int64), outcome),
        1,
    )
    return phases, tables


@dataclass(frozen=True)
class TomographyResult:
    """Everything the two-step reconstruction produces."""

    rho: RestrictedDensityMatrix
    diagonals: DiagonalEstimate
    fringe: FringeFit
    concurrence: ConcurrenceResult
    d_clamped: bool
    p_c: float  # p10 + p01 + 2 p11
    n_bootstrap: int
    warnings: tuple[str, ...]


def bootstrap_concurrence(
    separate: RecordSet,
    interfere: RecordSet,
    n_resamples: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> tuple[ConcurrenceResult, tuple[str, ...]]:
    """Concurrence with a bootstrap standard error.

    Resamples each lane's heralded trials with replacement (implemented
    as a multinomial redraw of the sufficient contingency tables, which
    is distribution-identical and much faster), re-runs the full
    pipeline per resample, and reports the standard deviation of the
    unclamped C0.  The point estimate comes from the full sample.
    """
    if n_resamples < MIN_BOOTSTRAP:
        raise ValueError(f"n_resamples must be >= {MIN_BOOTSTRAP}, got {n_resamples}")
    sep_tables = separate_outcome_counts(separate)
    phases, int_tables = interfere_outcome_tables(interfere)
    n_sep = int(sep_tables.sum())
    n_int = int(int_tables.sum())
    warnings: list[str] = []
    if min(n_sep, n_int) < LOW_HERALD_COUNT:
        warnings.append(
            f"low herald count (separate {n_sep}, interfere {n_int}): "
            "bootstrap sigma is unreliable"
        )

    _, _, _, _, c0_point = _pipeline_c0(
        sep_tables.sum(axis=0), n_sep, _fringe_from_tables(phases, int_tables)
    )

    rng = np.random.default_rng(np.random.SeedSequence((seed, _BOOTSTRAP_STREAM)))
    p_sep = sep_tables.ravel() / n_sep
    p_int = int_tables.ravel() / n_int
    draws = np.empty(n_resamples)
    failures = 0
    for r in range(n_resamples):
        sep_r = rng.multinomial(n_sep, p_sep).reshape(sep_tables.shape)
        int_r = rng.multinomial(n_int, p_int).reshape(int_tables.shape)
        try:
            _, _, _, _, draws[r] = _pipeline_c0(
                sep_r.sum(axis=0), n_sep, _fringe_from_tables(phases, int_r)
            )
        except FitError:
            draws[r] = np.nan
            failures += 1
    if failures > 0.01 * n_resamples:
        raise FitError(
            f"bootstrap pipeline failed on {failures}/{n_resamples} resamples"
        )
    good = draws[~np.isnan(draws)]
    sigma = float(np.std(good, ddof=1)) if len(good) > 1 else 0.0
    result = ConcurrenceResult(C=max(0.0, c0_point), C0=c0_point, sigma=sigma)
    return result, tuple(warnings)


def measured_state(result: TomographyResult) -> "MeasuredState":
    """Package a reconstruction as a state-with-errors for chain inversion.

    sigma_d combines the visibility and diagonal errors by the delta
    method on d = V (p10 + p01) / 2.
    """
    from .inference import MeasuredState

    diag, fit = result.diagonals, result.fringe
    half_sum = (diag.p10 + diag.p01) / 2.0
    sigma_d = math.sqrt(
        (fit.sigma_visibility * half_sum) ** 2
        + (fit.visibility * diag.sigma_p10 / 2.0) ** 2
        + (fit.visibility * diag.sigma_p01 / 2.0) ** 2
    )
    return MeasuredState(
        rho=result.rho,
        sigma_p00=diag.sigma_p00,
        sigma_p01=diag.sigma_p01,
        sigma_p10=diag.sigma_p10,
        sigma_p11=diag.sigma_p11,
        sigma_d=sigma_d,
    )


def analyze_pair(
    separate: RecordSet,
    interfere: RecordSet,
    n_bootstrap: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> TomographyResult:
    """Full reconstruction from one separate and one interfering lane."""
    diagonals = estimate_diagonals(separate)
    fit = fit_fringe(fringe_data_from_records(interfere))
    rho, clamped = assemble_rho(diagonals, fit.visibility)
    concurrence, warnings = bootstrap_concurrence(
        separate, interfere, n_resamples=n_bootstrap, seed=seed
    )
    if clamped:
        warnings = warnings + ("coherence clamped to sqrt(p01 p10)",)
    return TomographyResult(
        rho=rho,
        diagonals=diagonals,
        fringe=fit,
        concurrence=concurrence,
        d_clamped=clamped,
        p_c=diagonals.p10 + diagonals.p01 + 2.0 * diagonals.p11,
        n_bootstrap=n_bootstrap,
        warnings=warnings,
    )
