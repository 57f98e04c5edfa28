import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photon_bench import optics, qcore
from photon_bench.optics import (
    SourceKind, SourceSpec, VisibilityKind, VisibilityModel, WaveplateKind, WaveplateSpec,
)
from photon_bench.qcore import DensityMatrix, ImpossibleOutcome, PureState


def _fid(rho, psi):
    a = psi.amplitudes
    return float(np.real(np.vdot(a, rho.mat @ a)))


PHI_MINUS = qcore.bell_state("PhiMinus").dm()
PHI_PLUS = qcore.bell_state("PhiPlus").dm()


def test_hwp_at_22_5_maps_h_to_plus():
    u = optics.waveplate_unitary(WaveplateSpec(WaveplateKind.HALF, math.pi / 8))
    out = u @ qcore.KETS["H"]
    assert abs(np.vdot(qcore.KETS["+"], out)) == pytest.approx(1, abs=1e-12)


def test_qwp_at_45_maps_h_to_circular():
    u = optics.waveplate_unitary(WaveplateSpec(WaveplateKind.QUARTER, math.pi / 4))
    out = u @ qcore.KETS["H"]
    overlaps = [abs(np.vdot(qcore.KETS[k], out)) for k in ("R", "L")]
    assert max(overlaps) == pytest.approx(1, abs=1e-12)


def test_waveplate_angle_wraps_mod_pi():
    a = optics.waveplate_unitary(WaveplateSpec(WaveplateKind.HALF, 0.3))
    b = optics.waveplate_unitary(WaveplateSpec(WaveplateKind.HALF, 0.3 + math.pi))
    np.testing.assert_allclose(a, b, atol=1e-12)


@given(theta=st.floats(-10, 10, allow_nan=False), kind=st.sampled_from(list(WaveplateKind)))
def test_waveplates_unitary(theta, kind):
    assert qcore.is_unitary(optics.waveplate_unitary(WaveplateSpec(kind, theta)))


def test_source_spec_validation():
    with pytest.raises(ValueError):
        SourceSpec(SourceKind.PAIR, 1e3, 9.6e6)  # no correlation time
    with pytest.raises(ValueError):
        SourceSpec(SourceKind.LASER, 0, 1e6)
    s = SourceSpec(SourceKind.LASER, 8e5, 1e6)
    assert s.with_rate(10).rate == 10


def test_visibility_factor_values():
    assert optics.visibility_factor(VisibilityModel(VisibilityKind.UNIT)) == 1
    ex = optics.visibility_factor(VisibilityModel(VisibilityKind.EXPONENTIAL, 3e-9, 20e-9))
    x = 3 / 40
    assert ex == pytest.approx((1 - math.exp(-x)) / x, rel=1e-14)
    ga = optics.visibility_factor(VisibilityModel(VisibilityKind.GAUSSIAN, 3e-9, 20e-9))
    assert ex < ga < 1


def test_visibility_factor_numeric_average():
    w, tau = 7e-9, 5e-9
    t = np.linspace(-w / 2, w / 2, 200001)
    num = np.trapezoid(np.exp(-np.abs(t) / tau), t) / w
    got = optics.visibility_factor(VisibilityModel(VisibilityKind.EXPONENTIAL, w, tau))
    assert got == pytest.approx(num, rel=1e-8)


def test_pbs_projector():
    np.testing.assert_array_equal(optics.pbs_postselect_projector(), np.diag([1, 0, 0, 1]))


def test_dephasing_scales_coherence_only():
    out = optics.apply_pairwise_dephasing(PHI_PLUS, 0, 1, 0.3)
    np.testing.assert_allclose(np.diag(out.mat).real, [0.5, 0, 0, 0.5], atol=1e-15)
    assert out.mat[0, 3].real == pytest.approx(0.15)


def test_dephasing_half_visibility_eigenvalues():
    out = optics.apply_pairwise_dephasing(PHI_PLUS, 0, 1, 0.5)
    assert out.mat[0, 3].real == pytest.approx(0.25) and out.mat[3, 0].real == pytest.approx(0.25)
    np.testing.assert_allclose(np.sort(out.eigenvalues()), [0, 0, 0.25, 0.75], atol=1e-12)


@settings(max_examples=60)
@given(seed=st.integers(0, 2**32 - 1), v=st.floats(0, 1))
def test_dephasing_keeps_states_physical(seed, v):
    rho = qcore.haar_random_state(np.random.default_rng(seed), 3).dm()
    out = optics.apply_pairwise_dephasing(rho, 1, 2, v)
    assert out.eigenvalues().min() > -1e-12
    np.testing.assert_allclose(np.diag(out.mat), np.diag(rho.mat), atol=1e-12)


def test_bsm_on_phi_plus_pair():
    # the PBS keeps all of |Phi+>; the ++ analyzers then pass half
    out = optics.partial_bsm(PHI_PLUS, 0, 1)
    assert out.probability == pytest.approx(0.5)
    assert out.conditional is None


def test_bsm_probability_product_input():
    # PBS coincidence 1/2, ++ analyzers 1/4 of the surviving Phi+- mixture -> 1/8 overall
    full = PureState.from_label("+").dm().tensor(PHI_MINUS)
    out = optics.partial_bsm(full, 2, 0)
    assert out.probability == pytest.approx(1 / 8, abs=1e-12)


def test_bsm_impossible_outcome():
    with pytest.raises(ImpossibleOutcome):
        optics.partial_bsm(DensityMatrix.from_label("HV"), 0, 1)


def test_teleport_ideal_pauli_inputs():
    for label in qcore.KETS:
        psi = PureState.from_label(label)
        p, rho = optics.teleport(psi, PHI_MINUS)
        assert p == pytest.approx(1 / 8, abs=1e-12)
        assert _fid(rho, psi) == pytest.approx(1, abs=1e-12)


def test_teleport_without_correction_flips_equator():
    plus = PureState.from_label("+")
    _, rho = optics.teleport(plus, PHI_MINUS, apply_correction=False)
    assert _fid(rho, plus) == pytest.approx(0, abs=1e-12)
    h = PureState.from_label("H")
    _, rho = optics.teleport(h, PHI_MINUS, apply_correction=False)
    assert _fid(rho, h) == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("v", [0.0, 0.3, 0.596, 1.0])
def test_teleport_dephased_fidelity(v):
    for label, expected in [("H", 1.0), ("V", 1.0), ("+", (1 + v) / 2), ("L", (1 + v) / 2)]:
        psi = PureState.from_label(label)
        _, rho = optics.teleport(psi, PHI_MINUS, visibility=v)
        assert _fid(rho, psi) == pytest.approx(expected, abs=1e-12)


def test_build_ghz_ideal():
    p, rho = optics.build_ghz(PHI_MINUS, PureState.from_label("+"))
    assert p == pytest.approx(0.5)
    np.testing.assert_allclose(rho.mat, qcore.ghz_state(-1).dm().mat, atol=1e-12)


def test_build_ghz_with_h_third_is_product():
    p, rho = optics.build_ghz(PHI_MINUS, PureState.from_label("H"))
    assert p == pytest.approx(0.5)
    np.testing.assert_allclose(rho.mat, DensityMatrix.from_label("HHH").mat, atol=1e-12)


@pytest.mark.parametrize("v", [0.2, 0.7, 0.96])
def test_build_ghz_mermin_scales_with_visibility(v):
    _, rho = optics.build_ghz(PHI_MINUS, PureState.from_label("+"), v)
    a = sum(s * qcore.expectation(rho, qcore.pauli_string(t))
            for s, t in zip((1, 1, 1, -1), ("YYX", "YXY", "XYY", "XXX")))
    assert a == pytest.approx(4 * v, abs=1e-12)


def test_multiphoton_probabilities():
    laser = SourceSpec(SourceKind.LASER, 8e5, 1e6)
    e = optics.multiphoton_emission_probs(laser, 3e-9)
    mu = 2.4e-3
    assert e.p0 + e.p1 + e.p2plus == pytest.approx(1, abs=1e-15)
    assert e.p2plus == pytest.approx(mu * mu / 2, rel=2e-3)


def test_fidelity_inversions():
    assert optics.visibility_from_fidelity(0.798) == pytest.approx(0.596)
    assert optics.accidental_fraction_from_fidelity(0.91) == pytest.approx(0.18)
