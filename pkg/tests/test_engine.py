import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.linalg import expm

from rnnv_forge import spinops as so
from rnnv_forge.engine import (PropagationError, average_hamiltonian_1, chemical_shift_hamiltonian,
                               effective_vs_exact_error, event_propagator, evolve, hamiltonian,
                               interaction_frame_hamiltonian, interaction_frame_term, j_hamiltonian,
                               phase_aligned_distance, propagate)
from rnnv_forge.experiments import singlet_filter_protocol, singlet_order, t00_filter, thermal_state
from rnnv_forge.params import DAND, DELTA, FINITE, SpinSystem
from rnnv_forge.sequence import (FilterMarker, PulseEvent, PulseSequence, SequenceError, SequenceRecipe,
                                 SymmetryNumbers, basic_element_A, basic_element_B, build_m2s, build_riffled,
                                 build_sod, build_standard, composite_asbo11, composite_bb1, composite_sp7,
                                 conjugate, delay, phase_shift, pulse, time_reverse)
from rnnv_forge.symmetry import ALL_TERMS, rf_propagator, st_terms, scaling_factor_numeric

J = 54.39
R431 = SymmetryNumbers(4, 3, 1)
SHIFTED = DAND.with_(delta_omega_sum=2 * math.pi * 30)


def riffled(sym=R431, ctx=DELTA):
    return build_riffled(sym, basic_element_A(sym, J, ctx), basic_element_B(sym, J, ctx), J)


def test_j_hamiltonian_spectrum():
    w = np.linalg.eigvalsh(j_hamiltonian(DAND))
    assert np.allclose(sorted(w), np.array([-0.75, 0.25, 0.25, 0.25]) * DAND.omega_J)


def test_hamiltonian_is_hermitian_and_conserves_fz():
    h = hamiltonian(SHIFTED, DELTA.with_(offset=100.0))
    assert so.is_hermitian(h)
    assert np.allclose(so.commutator(h, so.total("z")), 0)
    h_rf = hamiltonian(DAND, rf={"amplitude": 1e4, "phase": 0.3})
    assert np.allclose(h_rf, hamiltonian(DAND, rf=(1e4, 0.3)))
    assert not np.allclose(so.commutator(h_rf, so.total("z")), 0)


def test_offset_adds_to_sum_frequency():
    a = chemical_shift_hamiltonian(DAND, DELTA.with_(offset=10.0))
    b = chemical_shift_hamiltonian(DAND.with_(delta_omega_sum=20.0))
    assert np.allclose(a, b)


def test_propagate_matches_expm():
    seq = PulseSequence((delay(1e-3), pulse(90, 30, FINITE), delay(2e-3)))
    h0 = hamiltonian(SHIFTED)
    h1 = hamiltonian(SHIFTED, rf=(FINITE.omega_nut_nominal, math.radians(30)))
    ref = expm(-1j * h0 * 2e-3) @ expm(-1j * h1 * float(seq.events[1].duration)) @ expm(-1j * h0 * 1e-3)
    assert np.allclose(propagate(seq, SHIFTED, FINITE), ref, atol=1e-12)


def test_delta_180_inverts_z():
    rho = evolve(so.total("z"), PulseSequence((pulse(180, 0),)), DAND)
    assert np.allclose(rho, -so.total("z"))


def test_event_propagator_is_cached_and_read_only():
    e = delay(1e-3)
    u = event_propagator(e, DAND, DELTA)
    assert u is event_propagator(e, DAND, DELTA)
    with pytest.raises(ValueError):
        u[0, 0] = 1


def test_markers_are_rejected_with_index():
    seq = build_sod(J, DAND.theta_ST, m2=1)
    with pytest.raises(PropagationError) as info:
        propagate(seq, DAND)
    assert info.value.index == next(i for i, e in enumerate(seq.events) if isinstance(e, FilterMarker))


def test_evolve_record():
    rho, hist = evolve(thermal_state(), basic_element_A(R431, J), DAND, record=True)
    assert len(hist) == 6
    assert hist[-1][0] == pytest.approx(float(R431.tau_r(J)))
    assert np.allclose(hist[-1][1], rho)


@pytest.mark.parametrize("numbers", [(4, 3, 1), (8, 7, 3), (10, 3, -2)])
def test_rf_returns_to_identity_over_a_cycle(numbers):
    sym = SymmetryNumbers(*numbers)
    u = rf_propagator(riffled(sym))
    assert phase_aligned_distance(u, np.eye(2)) < 1e-12


pulses = st.builds(lambda f, p: PulseEvent(f, p), st.floats(0, 720), st.floats(0, 360))
delays = st.floats(0, 0.02).map(delay)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(pulses, delays), min_size=1, max_size=12), st.floats(-500, 500))
def test_propagators_are_unitary(events, sum_hz):
    system = DAND.with_(delta_omega_sum=2 * math.pi * sum_hz)
    u = propagate(PulseSequence(tuple(events)), system)
    assert so.is_unitary(u, 1e-10)


@pytest.mark.parametrize("t", [0.0013, 0.004, 0.0071, 0.0122])
def test_interaction_frame_terms_sum_to_exact(t):
    e = basic_element_A(R431, J)
    exact = interaction_frame_hamiltonian(t, e, SHIFTED)
    total = sum(interaction_frame_term(t, e, SHIFTED, DELTA, term) for term in ALL_TERMS)
    assert np.allclose(total, exact, atol=1e-12)


def test_average_hamiltonian_matches_quadrature_oracle():
    seq = riffled()
    ah = average_hamiltonian_1(seq, SHIFTED)
    # Simpson over each delay; delta pulses sit on the boundaries.
    acc = np.zeros((4, 4), dtype=complex)
    t0 = 0.0
    for ev in seq.events:
        d = float(ev.duration)
        if d > 0:
            ts = np.linspace(t0 + 1e-12, t0 + d - 1e-12, 801)
            vals = np.array([interaction_frame_hamiltonian(t, seq, SHIFTED) for t in ts])
            acc += simpson(vals, x=ts, axis=0)
        t0 += d
    assert np.allclose(ah.matrix, acc / t0, atol=1e-6)


def test_average_hamiltonian_selects_st_terms():
    ah = average_hamiltonian_1(riffled(), SHIFTED)
    kappa = scaling_factor_numeric(R431, basic_element_A(R431, J), st_terms(R431)[0], J).kappa
    assert ah.coefficient(1, 1) == pytest.approx(DAND.delta_omega_diff / 2 * kappa, abs=1e-9)
    scale = ah.norm
    for (m, mu), c in ah.terms.items():
        if (m, mu) not in ((1, 1), (-1, -1)):
            assert abs(c) < 1e-12 * scale


def test_nu_sign_moves_the_coupling():
    sym = SymmetryNumbers(4, 3, -1)
    ah = average_hamiltonian_1(riffled(sym), SHIFTED)
    assert abs(ah.coefficient(1, 1)) < 1e-12
    assert abs(ah.coefficient(1, -1)) > 10


def test_average_hamiltonian_duration_check():
    with pytest.raises(SequenceError):
        average_hamiltonian_1(riffled(), DAND, expected_duration=1.0)
    with pytest.raises(SequenceError):
        average_hamiltonian_1(PulseSequence((pulse(90, 0),)), DAND)


def test_standard_and_riffled_agree_to_first_order():
    a = average_hamiltonian_1(build_standard(R431, basic_element_A(R431, J), J), SHIFTED)
    b = average_hamiltonian_1(riffled(), SHIFTED)
    assert np.allclose(a.matrix, b.matrix, atol=1e-12)


def test_effective_error_is_second_order():
    errs = [effective_vs_exact_error(riffled(), DAND.with_(delta_omega_diff=2 * math.pi * d))
            for d in (7.5, 3.75, 1.875)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_effective_error_vanishes_without_shifts():
    assert effective_vs_exact_error(riffled(), SpinSystem(J)) < 1e-12


def test_phase_shift_leaves_singlet_order_unchanged():
    base = riffled()
    so_ = [singlet_order(t00_filter(evolve(thermal_state(), phase_shift(base, phi), DAND))) for phi in (0, 37, 200)]
    assert so_ == pytest.approx([so_[0]] * 3, abs=1e-12)


@pytest.mark.parametrize("scale", [0.95, 1.05])
def test_riffled_beats_standard_under_amplitude_error(scale):
    ctx = FINITE.with_(amplitude_scale=scale)
    std = singlet_filter_protocol(SequenceRecipe(R431, "standard"), None, 10, 10, DAND, ctx)
    rif = singlet_filter_protocol(SequenceRecipe(R431, "riffled"), None, 10, 10, DAND, ctx)
    assert rif > 0.6
    assert rif > std + 0.1


def test_time_reverse_with_conjugation_gives_transpose():
    m = build_m2s(J, DAND.theta_ST)
    u = propagate(m, DAND)
    assert phase_aligned_distance(propagate(conjugate(time_reverse(m)), DAND), u.T) < 1e-10
    # Plain reversal is not the adjoint.
    assert phase_aligned_distance(propagate(time_reverse(m), DAND), u.conj().T) > 1e-3


@pytest.mark.parametrize("seq, theta", [
    (composite_bb1(math.pi / 2), math.pi / 2),
    (composite_asbo11(), math.pi),
    (composite_sp7(), math.pi),
])
def test_composite_net_rotation(seq, theta):
    assert phase_aligned_distance(rf_propagator(seq), so.su2_pulse(theta, 0.0)) < 1e-12


def test_bb1_tolerates_amplitude_error():
    ctx = DELTA.with_(amplitude_scale=0.9)
    target = so.su2_pulse(math.pi / 2, 0.0)
    plain = phase_aligned_distance(rf_propagator(PulseSequence((pulse(90, 0),)), ctx), target)
    bb1 = phase_aligned_distance(rf_propagator(composite_bb1(math.pi / 2), ctx), target)
    assert bb1 < plain / 10
