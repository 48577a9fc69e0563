"""The bundled reference operating point reproduces its calibration targets.

These are regression locks on the constants in dlcz_lab.config: the
chain efficiencies were solved (scripts/derive_reference_calibration.py)
so that the exact outcome tables hit three measured targets, and the
resulting exact observables are frozen here at full precision.  If any
of these move, either the tables changed or the constants did.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from dlcz_lab.config import (
    REFERENCE_CHI,
    REFERENCE_FIELD1_EFFICIENCY,
    REFERENCE_FIELD2_EFFICIENCY_D,
    REFERENCE_FIELD2_EFFICIENCY_U,
    REFERENCE_G0,
    REFERENCE_PC0,
    REFERENCE_XI,
    build_config,
)
from dlcz_lab.engine import (
    OUTCOME_A,
    OUTCOME_AB,
    OUTCOME_B,
    OUTCOME_NONE,
    build_entangle_tables,
    characterize_probs,
)
from dlcz_lab.model import concurrence_c0, g12_from_chi

# calibration targets
HERALD_TARGET = 9.0e-4
P10_TARGET = 0.0647
P01_TARGET = 0.0707

# frozen exact observables implied by the calibrated constants
P00_EXACT = 0.8643054032366483
P11_EXACT = 0.0002945967633517169
FRINGE_MEAN_RATE = 0.06800097663756871
VISIBILITY_EXACT = 0.9186044563056239
PIPELINE_C0 = 0.09246531127104245
CHAR_U_G12 = 59.84922335758747
CHAR_U_PC = 0.12790504485114804
CHAR_D_G12 = 59.83791664818277
CHAR_D_PC = 0.13971185930060306


@pytest.fixture(scope="module")
def separate_tables():
    return build_entangle_tables(build_config({"n_trials": 1, "readout_mode": "separate"}))


@pytest.fixture(scope="module")
def interfere_tables():
    return build_entangle_tables(build_config({"n_trials": 1, "readout_mode": "interfere"}))


def test_reference_constants_are_the_calibrated_solution():
    assert REFERENCE_CHI == pytest.approx(1.0 / 59.0, rel=1e-15)
    assert g12_from_chi(REFERENCE_CHI) == pytest.approx(REFERENCE_G0, rel=1e-12)
    assert REFERENCE_FIELD1_EFFICIENCY == 0.026123988139368472
    assert REFERENCE_FIELD2_EFFICIENCY_U == 0.12422047533656168
    assert REFERENCE_FIELD2_EFFICIENCY_D == 0.13573966728621165


def test_herald_probability_hits_target(separate_tables):
    p = float(separate_tables.herald_probs[1] + separate_tables.herald_probs[2])
    assert p == pytest.approx(HERALD_TARGET, abs=1e-12)


def test_separate_conditionals_hit_targets(separate_tables):
    probs = separate_tables.readout_probs[0, 0]
    assert probs[OUTCOME_A] == pytest.approx(P10_TARGET, abs=1e-12)
    assert probs[OUTCOME_B] == pytest.approx(P01_TARGET, abs=1e-12)
    assert probs[OUTCOME_NONE] == pytest.approx(P00_EXACT, rel=1e-12)
    assert probs[OUTCOME_AB] == pytest.approx(P11_EXACT, rel=1e-12)
    # the two heralds give the same conditionals at theta = 0
    other = separate_tables.readout_probs[1, 0]
    np.testing.assert_allclose(other, probs, rtol=1e-12)


def test_exact_fringe_visibility(interfere_tables):
    phases = np.array(interfere_tables.phases)
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    rate = (
        interfere_tables.readout_probs[0, :, OUTCOME_A]
        + interfere_tables.readout_probs[0, :, OUTCOME_AB]
    )
    mean, b1, b2 = np.linalg.lstsq(design, rate, rcond=None)[0]
    assert mean == pytest.approx(FRINGE_MEAN_RATE, rel=1e-12)
    assert math.hypot(b1, b2) / mean == pytest.approx(VISIBILITY_EXACT, rel=1e-12)


def test_infinite_statistics_pipeline_concurrence(separate_tables):
    probs = separate_tables.readout_probs[0, 0]
    d = VISIBILITY_EXACT * (probs[OUTCOME_A] + probs[OUTCOME_B]) / 2.0
    from dlcz_lab.model import RestrictedDensityMatrix, concurrence_from_rho

    rho = RestrictedDensityMatrix(
        p00=float(probs[OUTCOME_NONE]),
        p01=float(probs[OUTCOME_B]),
        p10=float(probs[OUTCOME_A]),
        p11=float(probs[OUTCOME_AB]),
        d=float(d),
    )
    c0 = concurrence_from_rho(rho).C0
    assert c0 == pytest.approx(PIPELINE_C0, rel=1e-12)
    # the exact pipeline sits within 1e-3 of the closed-form value: the
    # closed form drops the O(chi^2) double-excitation corrections
    analytic = concurrence_c0(REFERENCE_PC0, REFERENCE_XI, REFERENCE_G0)
    assert abs(c0 - analytic) < 1e-3


@pytest.mark.parametrize(
    "ensemble,g12_expected,pc_expected",
    [("u", CHAR_U_G12, CHAR_U_PC), ("d", CHAR_D_G12, CHAR_D_PC)],
)
def test_characterize_probs_frozen(ensemble, g12_expected, pc_expected):
    cfg = build_config({"n_trials": 1, "ensemble": ensemble})
    probs = characterize_probs(cfg, ensemble)
    p1 = probs[2] + probs[3]
    p2 = probs[1] + probs[3]
    p12 = probs[3]
    assert p12 / (p1 * p2) == pytest.approx(g12_expected, rel=1e-12)
    assert p12 / p1 == pytest.approx(pc_expected, rel=1e-12)
    # the normalized cross-correlation sits near (but below) 1/chi + 1:
    # detector-side losses do not change g12 to first order, the
    # residual comes from higher excitation numbers
    assert abs(p12 / (p1 * p2) - 60.0) < 0.2


def test_characterize_is_symmetric_in_field1():
    # both ensembles share the field-1 chain, so p1 matches exactly
    pu = characterize_probs(build_config({"n_trials": 1}), "u")
    pd = characterize_probs(build_config({"n_trials": 1}), "d")
    assert pu[2] + pu[3] == pytest.approx(pd[2] + pd[3], rel=1e-12)


def test_calibration_is_insensitive_to_truncation():
    # n_max = 5 vs the default: at chi = 1/59 even a harsh truncation
    # moves the herald probability by well under the precision the
    # targets are quoted to
    cfg = build_config({"n_trials": 1, "readout_mode": "separate"})
    hi = build_entangle_tables(cfg)
    lo = build_entangle_tables(replace(cfg, n_max=5))
    p_hi = float(hi.herald_probs[1] + hi.herald_probs[2])
    p_lo = float(lo.herald_probs[1] + lo.herald_probs[2])
    assert p_hi == pytest.approx(p_lo, rel=1e-4)
    assert hi.truncation_tail < 1e-6
