"""Acceptance gate: the ten headline checks, one line each.

Every test prints exactly one ``[criterion N] PASS`` line with the
measured numbers once its assertions hold; a failed criterion shows up
as a failed test (run with ``-rA`` or ``-s`` to see the lines).  The two
statistics-heavy criteria share one flagship run through a module-scoped
fixture.  Closed-form expectations appear as the plain interval bounds
they must land in; derivations for the frozen reference constants live
with the modules that own them.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from dlcz_lab import fock
from dlcz_lab.cli import main
from dlcz_lab.config import build_config
from dlcz_lab.engine import (
    OUTCOME_A,
    OUTCOME_AB,
    OUTCOME_B,
    OUTCOME_NONE,
    build_entangle_tables,
    characterize_probs,
    run_characterize,
    run_entangle,
)
from dlcz_lab.inference import (
    REFERENCE_CHAIN,
    REFERENCE_DETECTED_STATE,
    forward_loss,
    infer_chain,
    invert_loss,
)
from dlcz_lab.model import (
    DecayModel,
    ModelParams,
    RestrictedDensityMatrix,
    concurrence_analytic,
    concurrence_c0,
    concurrence_from_rho,
    diagonals_from_model,
    g12_from_chi,
    separability_time,
    threshold_g12,
    visibility,
)
from dlcz_lab.tomography import (
    analyze_pair,
    estimate_correlations,
    herald_phase_shift,
)
from conftest import random_density

ANALYTIC_REFERENCE_C = concurrence_analytic(0.135, 0.95, 60.0)

FLAGSHIP_TRIALS = 130_000_000
FLAGSHIP_BUDGET_SECONDS = 600.0


def report(criterion: int, text: str) -> None:
    print(f"[criterion {criterion:2d}] PASS — {text}")


@pytest.fixture(scope="module")
def flagship():
    """Separate + interfering lanes at the bundled reference point."""
    cfg = build_config({})
    t0 = time.perf_counter()
    sep_summary, sep_records = run_entangle(
        replace(cfg, n_trials=FLAGSHIP_TRIALS, readout_mode="separate", seed=101)
    )
    int_summary, int_records = run_entangle(
        replace(cfg, n_trials=FLAGSHIP_TRIALS, readout_mode="interfere", seed=102)
    )
    result = analyze_pair(sep_records, int_records, n_bootstrap=1000, seed=7)
    wall = time.perf_counter() - t0
    return {
        "result": result,
        "n_heralds": sep_summary.n_heralds + int_summary.n_heralds,
        "wall": wall,
    }


def test_criterion_01_closed_form_reference_point():
    c = ANALYTIC_REFERENCE_C
    assert 0.089 <= c <= 0.094
    report(1, f"closed-form C(p_c=0.135, xi=0.95, g12=60) = {c:.5f} in [0.089, 0.094]")


def test_criterion_02_threshold_crossing():
    g = threshold_g12(0.135, 0.95)
    assert 6.5 <= g <= 7.5
    report(2, f"zero crossing at g12 = {g:.4f} in [6.5, 7.5]")


def test_criterion_03_retrieval_asymptote():
    c = concurrence_analytic(0.135, 0.95, 1e6)
    assert abs(c - 0.12825) < 1e-3
    report(3, f"C at g12 = 1e6 is {c:.6f}, within 1e-3 of 0.12825")


def test_criterion_04_storage_decay_crossing():
    decay = DecayModel(
        tau0=0.2e-6, pc0=0.135, g0=30.0, tau_d_pc=13e-6, tau_d_g=13e-6, g_floor=1.0
    )
    tau = separability_time(decay, 0.95)
    assert 17e-6 <= tau <= 23e-6
    report(4, f"separability onset at {tau * 1e6:.2f} us in [17, 23] us")


def test_criterion_05_inference_chain_windows():
    with pytest.warns(Warning):
        stages = infer_chain(REFERENCE_DETECTED_STATE.rho, REFERENCE_CHAIN, clip=True)
    c_out = stages.output.concurrence.C
    c_atomic = stages.atomic.concurrence.C
    assert 0.25 <= c_out <= 0.45
    assert 0.6 <= c_atomic <= 1.0
    report(5, f"C_output = {c_out:.4f} in [0.25, 0.45]; C_atomic = {c_atomic:.4f} in [0.6, 1.0]")


def test_criterion_06_statistical_closure(flagship):
    c = flagship["result"].concurrence
    n_heralds = flagship["n_heralds"]
    wall = flagship["wall"]
    assert n_heralds >= 200_000
    assert c.sigma is not None and c.sigma <= 0.004
    gap = abs(c.C - ANALYTIC_REFERENCE_C)
    assert gap <= 3.0 * c.sigma
    assert wall <= FLAGSHIP_BUDGET_SECONDS
    report(
        6,
        f"C = {c.C:.5f} vs analytic {ANALYTIC_REFERENCE_C:.5f} "
        f"(gap {gap:.5f} <= 3 sigma = {3 * c.sigma:.5f}); "
        f"{n_heralds} heralds, sigma = {c.sigma:.5f} <= 0.004; "
        f"wall {wall:.1f} s <= {FLAGSHIP_BUDGET_SECONDS:.0f} s",
    )


def test_criterion_07_oracle_property_suite():
    # two indistinguishable photons on a balanced splitter never split
    state = fock.pure_state(2, 3, {(1, 1): 1.0})
    hom = fock.apply_beamsplitter(state, 0, 1, transmittance=0.5).populations()[1, 1]
    assert hom <= 1e-12

    # channels preserve the trace (loss always; splitter below the cutoff)
    rho = random_density(40, 2, 3, max_total=3)
    trace0 = rho.trace()
    lossy = fock.apply_loss(rho, 0, 0.37)
    mixed = fock.apply_beamsplitter(lossy, 0, 1, transmittance=0.7, phase=0.3)
    trace_drift = max(abs(lossy.trace() - trace0), abs(mixed.trace() - trace0))
    assert trace_drift <= 1e-12

    # click distributions over all patterns are normalized
    clicks = fock.click_distribution(
        fock.apply_loss(fock.make_tmsv(0.08, 3), 1, 0.4),
        [fock.DetectorModel(0.6, 1e-3), fock.DetectorModel(0.5, 2e-3)],
    )
    click_norm_gap = abs(sum(outcome.probability for outcome in clicks) - 1.0)
    assert click_norm_gap <= 1e-9

    # loss map round trip
    rho_r = RestrictedDensityMatrix(p00=0.7, p01=0.12, p10=0.14, p11=0.04, d=0.09)
    back = invert_loss(forward_loss(rho_r, 0.62, 0.81), 0.62, 0.81)
    round_trip = max(
        abs(getattr(back, name) - getattr(rho_r, name))
        for name in ("p00", "p01", "p10", "p11")
    )
    round_trip = max(round_trip, abs(back.d - rho_r.d))
    assert round_trip <= 1e-10

    # exact outcome tables track the counting model to first order in chi
    worst = 0.0
    for chi in (0.005, 0.02, 0.05):
        gaps, p11_gap, p11_bound = _first_order_gaps(chi)
        assert max(gaps.values()) <= 3.0 * chi, (chi, gaps)
        # p11 keeps a chi-independent floor: the threshold-detector
        # conditioning and the model's p_c^2/g12 disagree at O(1%) even
        # as chi -> 0, so it carries its own frozen envelope
        assert p11_gap <= p11_bound, (chi, p11_gap)
        worst = max(worst, max(gaps.values()) / (3.0 * chi))
    report(
        7,
        f"HOM {hom:.1e} <= 1e-12; trace drift {trace_drift:.1e} <= 1e-12; "
        f"click norm {click_norm_gap:.1e} <= 1e-9; loss round trip {round_trip:.1e} <= 1e-10; "
        f"first-order gaps <= {worst:.2f} of the 3 chi budget",
    )


def _first_order_gaps(chi: float):
    """Relative deviations between exact tables and the counting model."""
    base = {"n_trials": 1, "chi": chi,
            "field2_efficiency_u": 0.1, "field2_efficiency_d": 0.1}
    sep = build_entangle_tables(build_config(dict(base, readout_mode="separate")))
    probs = sep.readout_probs[0, 0]
    p00 = float(probs[OUTCOME_NONE])
    p01 = float(probs[OUTCOME_B])
    p10 = float(probs[OUTCOME_A])
    p11 = float(probs[OUTCOME_AB])

    cp = characterize_probs(build_config(base), "u")
    g12 = float(cp[3] / ((cp[2] + cp[3]) * (cp[1] + cp[3])))

    intf = build_entangle_tables(build_config(dict(base, readout_mode="interfere")))
    phases = np.array(intf.phases)
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    rate = intf.readout_probs[0, :, OUTCOME_A] + intf.readout_probs[0, :, OUTCOME_AB]
    mean, b1, b2 = np.linalg.lstsq(design, rate, rcond=None)[0]
    v = math.hypot(b1, b2) / mean

    p_c = 1.0 - p00
    model = diagonals_from_model(ModelParams(chi=chi, p_c=p_c, xi=0.95, g12=g12))
    c0_exact = concurrence_from_rho(
        RestrictedDensityMatrix(p00, p01, p10, p11, v * (p01 + p10) / 2.0)
    ).C0

    def rel(a: float, b: float) -> float:
        return abs(a - b) / abs(b)

    gaps = {
        "g12": rel(g12, g12_from_chi(chi)),
        "p01": rel(p01, model.p01),
        "p10": rel(p10, model.p10),
        "V": rel(v, visibility(g12, 0.95)),
        "C0": rel(c0_exact, concurrence_c0(p_c, 0.95, g12)),
    }
    return gaps, rel(p11, model.p11), 0.015 + 2.0 * chi


def test_criterion_08_cross_correlation_physics():
    cfg = build_config({
        "chi": 0.05,
        "field1_efficiency_u": 0.1, "field1_efficiency_d": 0.1,
        "field2_efficiency_u": 0.1, "field2_efficiency_d": 0.1,
        "n_trials": 10_000_000, "seed": 0,
    })
    stats = estimate_correlations(run_characterize(cfg).characterize)
    target = 1.0 + 1.0 / 0.05
    assert abs(stats.g12 - target) / target <= 0.05
    report(
        8,
        f"estimated g12 = {stats.g12:.3f} +- {stats.sigma_g12:.3f}, "
        f"within 5% of {target:.0f}",
    )


def test_criterion_09_herald_sign_contract(flagship):
    shift, sigma = herald_phase_shift(flagship["result"].fringe)
    gap = abs(abs(shift) - math.pi)
    assert gap <= 3.0 * sigma
    report(
        9,
        f"D1a/D1b fringe offset gap = {shift:+.4f} rad "
        f"(|pi| distance {gap:.4f} <= 3 sigma = {3 * sigma:.4f})",
    )


def test_criterion_10_thread_count_determinism(tmp_path):
    argv = ["entangle", "--set", "run.n_trials=200000",
            "--set", "run.readout_mode=interfere",
            "--set", "run.batch_size=16384", "--seed", "77", "--bootstrap", "100"]
    assert main([*argv, "--out", str(tmp_path / "t1"), "--threads", "1"]) == 0
    assert main([*argv, "--out", str(tmp_path / "t3"), "--threads", "3"]) == 0
    one = (tmp_path / "t1" / "records.csv").read_bytes()
    three = (tmp_path / "t3" / "records.csv").read_bytes()
    assert one == three
    report(10, f"records byte-identical across --threads 1/3 ({len(one)} bytes)")
