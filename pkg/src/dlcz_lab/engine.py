"""Seeded Monte Carlo engine for write/herald/read trials.

The physics cost is paid once per configuration: the exact click-outcome
distributions (herald stage, and field-2 stage conditioned on each herald
type and fringe phase) are computed from the truncated Fock model, and the
per-trial work is then two categorical draws.  That is what makes 1e8-trial
campaigns cheap.

Determinism contract: trials are processed in fixed batches of
``batch_size``; batch ``i`` uses the RNG stream seeded by
``SeedSequence((seed, i))`` and always draws the same two uniform arrays,
so the record stream is byte-identical no matter how many worker processes
are used (or whether the pool is used at all).

Storage decay: a storage time ``tau > tau0`` multiplies both field-2 paths
by a survival factor s(tau) and injects an uncorrelated Poisson background
nu(tau) on each field-2 detector, with s and nu calibrated in closed form
so that a single-ensemble characterization reproduces the configured decay
curves p_c(tau) and g12(tau) to first order in the click probabilities::

    r_p = exp(-(tau-tau0)/tau_d_pc)        # target p_c(tau)/p_c(tau0)
    G   = g_floor + (g0-g_floor) exp(-(tau-tau0)/tau_d_g)
    s   = r_p * g0 (G-1) / (G (g0-1))      # survival multiplier
    nu  = pc0 (r_p - s)                    # excess background per detector

At ``tau = tau0`` these reduce exactly to s = 1, nu = 0.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Optional, Sequence

import numpy as np

from . import fock
from .config import ExperimentConfig
from .errors import ConfigError
from .records import FORMAT_VERSION, RecordHeader, RecordSet

# Outcome index for the two field-2 detectors: 2*click_2a + click_2b.
OUTCOME_NONE, OUTCOME_B, OUTCOME_A, OUTCOME_AB = 0, 1, 2, 3

# Herald categories drawn per trial.
HERALD_NONE, HERALD_D1A, HERALD_D1B, HERALD_BOTH = 0, 1, 2, 3


def subseed(seed: int, index: int) -> int:
    """Independent 64-bit sub-seed for (seed, index), order-stable."""
    return int(np.random.SeedSequence((seed, index)).generate_state(1, dtype=np.uint64)[0])


def decay_factors(cfg: ExperimentConfig) -> tuple[float, float]:
    """(survival multiplier s, per-detector excess background nu) at
    cfg.storage_time; see the module docstring for the closed form."""
    decay = cfg.decay_model()
    dt = cfg.storage_time - decay.tau0
    r_p = math.exp(-dt / decay.tau_d_pc)
    g = decay.g_floor + (decay.g0 - decay.g_floor) * math.exp(-dt / decay.tau_d_g)
    s = r_p * decay.g0 * (g - 1.0) / (g * (decay.g0 - 1.0))
    s = min(max(s, 0.0), 1.0)
    nu = max(decay.pc0 * (r_p - s), 0.0)
    return s, nu


def _cumulative(probs: np.ndarray, atol: float = fock.CLICK_NORM_ATOL) -> np.ndarray:
    cum = np.cumsum(probs)
    if abs(cum[-1] - 1.0) > atol:
        raise RuntimeError(f"outcome distribution sums to {cum[-1]}, not 1")
    cum[-1] = 1.0
    return cum


def _merged_pair_probs(
    patterns: Sequence[fock.ClickPattern], bits_a: tuple[int, ...], bits_b: tuple[int, ...]
) -> np.ndarray:
    """Collapse a multi-mode click distribution onto two logical detectors.

    Logical detector a fires when any mode index in ``bits_a`` fired, and
    likewise for b.  Returns probabilities indexed by 2*a + b.
    """
    probs = np.zeros(4)
    for pat in patterns:
        a = any(pat.clicked(i) for i in bits_a)
        b = any(pat.clicked(i) for i in bits_b)
        probs[2 * int(a) + int(b)] += pat.probability
    return probs


@dataclass(frozen=True)
class EntangleTables:
    """Precomputed exact outcome distributions for one entangle config."""

    herald_probs: np.ndarray  # (4,): none, D1a, D1B, both
    herald_cum: np.ndarray  # (4,)
    readout_probs: np.ndarray  # (2, n_cells, 4): herald x phase cell x outcome
    readout_cum: np.ndarray  # (2, n_cells, 4)
    phases: tuple[float, ...]  # phase per cell; () in separate mode (1 cell)
    n_cells: int
    survival_factor: float
    excess_background: float
    truncation_tail: float


def build_entangle_tables(cfg: ExperimentConfig) -> EntangleTables:
    """Exact herald and conditional-readout distributions for ``cfg``."""
    n_max = cfg.n_max
    s, nu = decay_factors(cfg)

    # Write stage: modes (0) U spin wave, (1) field 1U, (2) D spin wave,
    # (3) field 1D.  The relative write phase theta rides on field 1D, the
    # two field-1 paths suffer their chain losses and interfere on the
    # 50/50 herald splitter; D1a watches mode 1, D1b mode 3.
    state = fock.product(fock.make_tmsv(cfg.chi, n_max), fock.make_tmsv(cfg.chi, n_max))
    state = fock.apply_phase(state, 3, cfg.theta)
    state = fock.apply_loss(state, 1, cfg.field1_efficiency_u)
    state = fock.apply_loss(state, 3, cfg.field1_efficiency_d)
    state = fock.apply_beamsplitter(state, 1, 3, 0.5)

    d1 = [cfg.detector("d1a"), cfg.detector("d1b")]
    herald_probs = np.array(
        [p.probability for p in fock.click_distribution(fock.reduce_to_modes(state, (1, 3)), d1)]
    )

    d2a = cfg.detector("d2a")
    d2b = cfg.detector("d2b")
    d2a = fock.DetectorModel(d2a.efficiency, d2a.dark_mean + nu)
    d2b = fock.DetectorModel(d2b.efficiency, d2b.dark_mean + nu)
    blind = lambda det: fock.DetectorModel(det.efficiency, 0.0)  # noqa: E731

    if cfg.readout_mode == "separate":
        phases: tuple[float, ...] = ()
        n_cells = 1
    else:
        phases = cfg.phase_values()
        n_cells = len(phases)

    readout = np.zeros((2, n_cells, 4))
    tail = 0.0
    for herald_pattern, row in ((0b01, 0), (0b10, 1)):
        if herald_probs[row + 1] <= 0.0:
            # this herald never fires, so its conditional row is never
            # sampled; keep the table normalized with a placeholder
            readout[row, :, OUTCOME_NONE] = 1.0
            continue
        atoms = fock.condition_on_pattern(state, d1, herald_pattern, keep_modes=(0, 2))
        # Retrieval: spin waves map onto fields 2U/2D through the combined
        # retrieval+path efficiency, scaled by the storage survival.
        fields2 = fock.apply_loss(atoms, 0, s * cfg.field2_efficiency_u)
        fields2 = fock.apply_loss(fields2, 1, s * cfg.field2_efficiency_d)
        if cfg.readout_mode == "separate":
            dist = fock.click_distribution(fields2, [d2a, d2b])
            readout[row, 0] = _merged_pair_probs(dist, (0,), (1,))
            tail = max(tail, fields2.tail)
        else:
            # Interfering readout: the D field is split into the component
            # that overlaps the U mode (amplitude xi stays in mode 1) and
            # an orthogonal remainder (mode 2).  The overlapped modes meet
            # on the 50/50 readout splitter; the remainder is split 50/50
            # between the same two detectors without interfering.
            ext = fock.product(fields2, fock.vacuum(2, n_max))
            ext = fock.apply_beamsplitter(ext, 1, 2, cfg.xi**2)
            ext = fock.apply_beamsplitter(ext, 2, 3, 0.5)
            for k, phi in enumerate(phases):
                st = fock.apply_phase(ext, 0, phi)
                st = fock.apply_beamsplitter(st, 0, 1, 0.5)
                dist = fock.click_distribution(st, [d2a, d2b, blind(d2a), blind(d2b)])
                readout[row, k] = _merged_pair_probs(dist, (0, 2), (1, 3))
                tail = max(tail, st.tail)

    readout_cum = np.stack(
        [[_cumulative(readout[h, k]) for k in range(n_cells)] for h in range(2)]
    )
    return EntangleTables(
        herald_probs=herald_probs,
        herald_cum=_cumulative(herald_probs),
        readout_probs=readout,
        readout_cum=readout_cum,
        phases=phases,
        n_cells=n_cells,
        survival_factor=s,
        excess_background=nu,
        truncation_tail=max(tail, state.tail),
    )


@dataclass(frozen=True)
class CharacterizeCounts:
    """Joint threshold-count statistics of a single-ensemble run."""

    ensemble: str
    n_trials: int
    n_1: int  # field-1 clicks
    n_2: int  # field-2 clicks
    n_12: int  # joint clicks
    counts: tuple[int, int, int, int]  # (neither, 2 only, 1 only, both)


@dataclass(frozen=True)
class PhaseCounts:
    """Per herald type and phase cell: heralds and conditional clicks."""

    phases: tuple[float, ...]
    n_heralds: np.ndarray  # (2, n_cells)
    clicks_2a: np.ndarray  # (2, n_cells)
    clicks_2b: np.ndarray  # (2, n_cells)
    coincidences: np.ndarray  # (2, n_cells)

    @classmethod
    def from_cell_counts(
        cls, phases: tuple[float, ...], cells: np.ndarray
    ) -> "PhaseCounts":
        return cls(
            phases=phases,
            n_heralds=cells.sum(axis=2),
            clicks_2a=cells[:, :, OUTCOME_A] + cells[:, :, OUTCOME_AB],
            clicks_2b=cells[:, :, OUTCOME_B] + cells[:, :, OUTCOME_AB],
            coincidences=cells[:, :, OUTCOME_AB],
        )


@dataclass(frozen=True)
class RunSummary:
    """Aggregated counting statistics and provenance for one run."""

    kind: str  # "entangle" | "characterize"
    config: dict[str, Any]
    config_hash: str
    seed: int
    n_trials: int
    readout_mode: str  # "S" | "I" | "" (characterize)
    n_heralds_d1a: int
    n_heralds_d1b: int
    n_heralds_both: int
    herald_probability: float
    per_phase: Optional[PhaseCounts]
    characterize: Optional[CharacterizeCounts]
    survival_factor: float
    excess_background: float
    truncation_tail: float
    wall_seconds: float
    trials_per_second: float
    simulated_duration_seconds: float
    format_version: int = FORMAT_VERSION

    @property
    def n_heralds(self) -> int:
        return self.n_heralds_d1a + self.n_heralds_d1b

    def to_document(self, include_timing: bool = True) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "format_version": self.format_version,
            "kind": self.kind,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "n_trials": self.n_trials,
            "readout_mode": self.readout_mode,
            "n_heralds_d1a": self.n_heralds_d1a,
            "n_heralds_d1b": self.n_heralds_d1b,
            "n_heralds_both": self.n_heralds_both,
            "herald_probability": self.herald_probability,
            "survival_factor": self.survival_factor,
            "excess_background": self.excess_background,
            "truncation_tail": self.truncation_tail,
        }
        if self.per_phase is not None:
            doc["per_phase"] = {
                "phases": list(self.per_phase.phases),
                "n_heralds": self.per_phase.n_heralds.tolist(),
                "clicks_2a": self.per_phase.clicks_2a.tolist(),
                "clicks_2b": self.per_phase.clicks_2b.tolist(),
                "coincidences": self.per_phase.coincidences.tolist(),
            }
        if self.characterize is not None:
            doc["characterize"] = {
                "ensemble": self.characterize.ensemble,
                "n_trials": self.characterize.n_trials,
                "n_1": self.characterize.n_1,
                "n_2": self.characterize.n_2,
                "n_12": self.characterize.n_12,
                "counts": list(self.characterize.counts),
            }
        if include_timing:
            doc["timing"] = {
                "wall_seconds": self.wall_seconds,
                "trials_per_second": self.trials_per_second,
                "simulated_duration_seconds": self.simulated_duration_seconds,
            }
        return doc


_WORKER_TABLES: Optional[EntangleTables] = None
_WORKER_ARGS: Optional[tuple[int, int, int]] = None  # (seed, batch_size, n_trials)


def _init_worker(tables: EntangleTables, args: tuple[int, int, int]) -> None:
    global _WORKER_TABLES, _WORKER_ARGS
    _WORKER_TABLES = tables
    _WORKER_ARGS = args


def _sample_batch(
    tables: EntangleTables, seed: int, batch_size: int, n_trials: int, batch_index: int
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, ...]]:
    """Sample one batch; returns (herald counts, cell counts, record columns).

    Always draws two full uniform arrays from the batch stream so results
    do not depend on how earlier batches went.
    """
    start = batch_index * batch_size
    size = min(batch_size, n_trials - start)
    rng = np.random.default_rng(np.random.SeedSequence((seed, batch_index)))
    u_herald = rng.random(size)
    u_readout = rng.random(size)

    herald = np.searchsorted(tables.herald_cum, u_herald, side="right").astype(np.int8)
    herald_counts = np.bincount(herald, minlength=4).astype(np.int64)

    heralded = np.flatnonzero((herald == HERALD_D1A) | (herald == HERALD_D1B))
    trial_index = start + heralded.astype(np.int64)
    herald_type = (herald[heralded] - 1).astype(np.int8)  # 0 = D1a, 1 = D1b
    cell = (trial_index % tables.n_cells).astype(np.int32)

    cum_rows = tables.readout_cum[herald_type, cell]  # (n, 4)
    outcome = (u_readout[heralded, None] >= cum_rows[:, :3]).sum(axis=1).astype(np.int8)

    cell_counts = np.zeros((2, tables.n_cells, 4), dtype=np.int64)
    np.add.at(cell_counts, (herald_type, cell, outcome), 1)

    click_2a = (outcome >> 1).astype(bool)
    click_2b = (outcome & 1).astype(bool)
    return herald_counts, cell_counts, (trial_index, herald_type, cell, click_2a, click_2b)


def _sample_batch_worker(batch_index: int):
    assert _WORKER_TABLES is not None and _WORKER_ARGS is not None
    seed, batch_size, n_trials = _WORKER_ARGS
    return _sample_batch(_WORKER_TABLES, seed, batch_size, n_trials, batch_index)


def default_threads() -> int:
    return max(os.cpu_count() or 1, 1)


def run_entangle(
    cfg: ExperimentConfig, threads: Optional[int] = None
) -> tuple[RunSummary, RecordSet]:
    """Simulate ``cfg.n_trials`` write/herald/read trials.

    Returns the aggregated summary and the heralded-trial records.  The
    record stream is byte-identical for any ``threads`` value.
    """
    if threads is None:
        threads = default_threads()
    t0 = time.perf_counter()
    tables = build_entangle_tables(cfg)
    n_batches = -(-cfg.n_trials // cfg.batch_size)
    args = (cfg.seed, cfg.batch_size, cfg.n_trials)

    if threads > 1 and n_batches > 1:
        with ProcessPoolExecutor(
            max_workers=min(threads, n_batches),
            initializer=_init_worker,
            initargs=(tables, args),
        ) as pool:
            results = list(pool.map(_sample_batch_worker, range(n_batches), chunksize=16))
    else:
        results = [_sample_batch(tables, *args, i) for i in range(n_batches)]

    herald_counts = np.zeros(4, dtype=np.int64)
    cell_counts = np.zeros((2, tables.n_cells, 4), dtype=np.int64)
    columns = [[], [], [], [], []]  # type: list[list[np.ndarray]]
    for h_counts, c_counts, cols in results:
        herald_counts += h_counts
        cell_counts += c_counts
        for store, col in zip(columns, cols):
            store.append(col)
    trial_index, herald_type, cell, click_2a, click_2b = (
        np.concatenate(cols) if cols else np.zeros(0, dtype=dt)
        for cols, dt in zip(columns, (np.int64, np.int8, np.int32, bool, bool))
    )

    wall = time.perf_counter() - t0
    mode = "S" if cfg.readout_mode == "separate" else "I"
    header = RecordHeader(
        kind="entangle",
        mode=mode,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        n_trials=cfg.n_trials,
        batch_size=cfg.batch_size,
        theta=cfg.theta,
        storage_time=cfg.storage_time,
        phases=tables.phases,
    )
    records = RecordSet(
        header=header,
        trial_index=trial_index,
        herald=herald_type,
        phase_index=cell,
        click_2a=click_2a,
        click_2b=click_2b,
    )
    n_a = int(herald_counts[HERALD_D1A])
    n_b = int(herald_counts[HERALD_D1B])
    summary = RunSummary(
        kind="entangle",
        config=cfg.resolved(),
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        n_trials=cfg.n_trials,
        readout_mode=mode,
        n_heralds_d1a=n_a,
        n_heralds_d1b=n_b,
        n_heralds_both=int(herald_counts[HERALD_BOTH]),
        herald_probability=(n_a + n_b) / cfg.n_trials,
        per_phase=PhaseCounts.from_cell_counts(tables.phases, cell_counts),
        characterize=None,
        survival_factor=tables.survival_factor,
        excess_background=tables.excess_background,
        truncation_tail=tables.truncation_tail,
        wall_seconds=wall,
        trials_per_second=cfg.n_trials / wall if wall > 0 else float("inf"),
        simulated_duration_seconds=cfg.n_trials / (cfg.trial_rate * cfg.duty_factor),
    )
    return summary, records


def characterize_probs(cfg: ExperimentConfig, ensemble: Optional[str] = None) -> np.ndarray:
    """Exact joint click probabilities for a single-ensemble run.

    The chosen ensemble's field 1 goes straight to the herald detector
    (D1a model, no mixing) and its field 2 to a readout detector (D2a
    model); both are measured every trial.  Outcome index is
    2*click_1 + click_2.
    """
    ensemble = ensemble or cfg.ensemble
    if ensemble not in ("u", "d"):
        raise ConfigError(f"ensemble must be 'u' or 'd', got {ensemble!r}")
    s, nu = decay_factors(cfg)
    eta1 = getattr(cfg, f"field1_efficiency_{ensemble}")
    eta2 = getattr(cfg, f"field2_efficiency_{ensemble}")
    state = fock.make_tmsv(cfg.chi, cfg.n_max)  # modes: (0) spin wave, (1) field 1
    state = fock.apply_loss(state, 1, eta1)
    state = fock.apply_loss(state, 0, s * eta2)
    d2 = cfg.detector("d2a")
    detectors = [
        fock.DetectorModel(d2.efficiency, d2.dark_mean + nu),  # field 2 (mode 0)
        cfg.detector("d1a"),  # field 1 (mode 1)
    ]
    # Pattern bit 0 = field-2 click, bit 1 = field-1 click; reorder to
    # (neither, 2 only, 1 only, both) = index 2*click_1 + click_2.
    dist = fock.click_distribution(state, detectors)
    probs = np.array([dist[0].probability, dist[1].probability,
                      dist[2].probability, dist[3].probability])
    total = probs.sum()
    return probs / total


def run_characterize(cfg: ExperimentConfig, ensemble: Optional[str] = None) -> RunSummary:
    """Single-ensemble counting run; every trial measures both fields.

    Per-trial sampling reduces to a multinomial draw over the four joint
    outcomes per batch (same per-batch RNG streams as run_entangle), so
    arbitrarily long characterizations are effectively free.
    """
    ensemble = ensemble or cfg.ensemble
    t0 = time.perf_counter()
    probs = characterize_probs(cfg, ensemble)
    s, nu = decay_factors(cfg)
    counts = np.zeros(4, dtype=np.int64)
    n_batches = -(-cfg.n_trials // cfg.batch_size)
    for batch_index in range(n_batches):
        size = min(cfg.batch_size, cfg.n_trials - batch_index * cfg.batch_size)
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, batch_index)))
        counts += rng.multinomial(size, probs)

    # counts order: (neither, field-2 only, field-1 only, both)
    n_1 = int(counts[2] + counts[3])
    n_2 = int(counts[1] + counts[3])
    n_12 = int(counts[3])
    wall = time.perf_counter() - t0
    stats = CharacterizeCounts(
        ensemble=ensemble,
        n_trials=cfg.n_trials,
        n_1=n_1,
        n_2=n_2,
        n_12=n_12,
        counts=tuple(int(c) for c in counts),
    )
    return RunSummary(
        kind="characterize",
        config=cfg.resolved(),
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        n_trials=cfg.n_trials,
        readout_mode="",
        n_heralds_d1a=n_1,
        n_heralds_d1b=0,
        n_heralds_both=0,
        herald_probability=n_1 / cfg.n_trials,
        per_phase=None,
        characterize=stats,
        survival_factor=s,
        excess_background=nu,
        truncation_tail=fock.make_tmsv(cfg.chi, cfg.n_max).tail,
        wall_seconds=wall,
        trials_per_second=cfg.n_trials / wall if wall > 0 else float("inf"),
        simulated_duration_seconds=cfg.n_trials / (cfg.trial_rate * cfg.duty_factor),
    )


SWEEP_PARAMETERS = ("chi", "storage_time")


def sweep(
    cfg: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    threads: Optional[int] = None,
) -> list[RunSummary]:
    """One independent entangle run per value, with derived sub-seeds.

    Point ``i`` runs with ``parameter`` set to ``values[i]`` and seed
    ``subseed(cfg.seed, i)``; results are returned in input order.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")
    summaries = []
    for index, value in enumerate(values):
        sub = replace(cfg, **{parameter: float(value)}, seed=subseed(cfg.seed, index))
        summary, _ = run_entangle(sub, threads=threads)
        summaries.append(summary)
    return summaries
