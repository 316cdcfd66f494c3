import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnv_forge.params import DAND, DELTA, FINITE, exact
from rnnv_forge.sequence import (
    DelayEvent, FilterMarker, InfeasibleTimingError, PulseEvent, PulseSequence, SequenceError,
    SequenceRecipe, SymmetryNumbers, asbo11_phases, basic_element_A, basic_element_B, build_elements,
    build_m2s, build_riffled, build_s2m, build_sod, build_standard, composite_asbo11, composite_bb1,
    composite_sp7, conjugate, m2s_counts, normalize_phase, phase_shift, pulse, pulsepol, scale_delays,
    sod_m1, time_reverse, wimperis_angle,
)

J = 54.39
R431 = SymmetryNumbers(4, 3, 1)
R873 = SymmetryNumbers(8, 7, 3)


def pulses(seq):
    return [(p.flip_deg, round(p.phase_deg, 6)) for p in seq.pulses]


def test_symmetry_numbers_validation():
    with pytest.raises(SequenceError, match="even"):
        SymmetryNumbers(3, 3, 1)
    with pytest.raises(SequenceError):
        SymmetryNumbers(4, 0, 1)
    with pytest.raises(SequenceError):
        SymmetryNumbers.parse("4,3")
    assert SymmetryNumbers.parse(" 8, 7, 3") == R873
    assert R431.phase_deg == 45.0
    assert str(R431) == "R4_3^1"


def test_tau_r_is_exact():
    assert R431.tau_r(J) == Fraction(3, 4) / Fraction("54.39")
    assert float(R431.tau_r(J)) == pytest.approx(13.789e-3, abs=1e-6)


def test_event_validation():
    with pytest.raises(SequenceError):
        PulseEvent(-90, 0)
    with pytest.raises(SequenceError):
        PulseEvent(90, 0, "delta", Fraction(1, 10**6))
    with pytest.raises(SequenceError):
        PulseEvent(90, 0, "shaped")
    with pytest.raises(SequenceError):
        DelayEvent(Fraction(-1))
    with pytest.raises(SequenceError):
        FilterMarker("SOD", (("m1", 0),))
    with pytest.raises(SequenceError):
        FilterMarker("Q")


def test_phase_normalization():
    assert normalize_phase(-90) == 270.0
    assert normalize_phase(360.0000000001) == 0.0
    assert normalize_phase(-1e-12) == 0.0


def test_phase_shift_definition():
    seq = PulseSequence((PulseEvent(90, 0), DelayEvent(Fraction(1, 1000))))
    out = phase_shift(seq, 90)
    assert pulses(out) == [(90, 90.0)]
    assert out.events[1] == seq.events[1]


def test_phase_shift_inverse():
    a = basic_element_A(R431, J)
    assert phase_shift(phase_shift(a, 45), -45) == a


def test_conjugate_example_and_involution():
    a = basic_element_A(R431, J)
    assert pulses(conjugate(a)) == [(90, 270.0), (180, 0.0), (90, 270.0)]
    assert conjugate(conjugate(a)) == a


def test_conjugated_shifted_b_element_matches_listing():
    b = basic_element_B(R431, J)
    assert pulses(phase_shift(conjugate(b), -45)) == [(90, normalize_phase(-135)), (180, normalize_phase(-225)),
                                                      (90, normalize_phase(-135))]


def test_basic_elements_delta():
    a = basic_element_A(R431, J)
    b = basic_element_B(R431, J)
    assert pulses(a) == [(90, 90.0), (180, 0.0), (90, 90.0)]
    assert pulses(b) == [(90, 90.0), (180, 180.0), (90, 90.0)]
    assert a.events[1].duration == Fraction(3, 8) / exact(J)
    assert a.total_duration == R431.tau_r(J)


def test_finite_element_timing():
    a = basic_element_A(R431, J, FINITE, tau_r=13800e-6)
    assert a.events[0].duration == Fraction(1, 50000)  # 20 us 90-degree pulse
    assert float(a.events[1].duration) == pytest.approx(6860e-6, abs=1e-12)
    assert a.total_duration == exact(13800e-6)
    nominal = basic_element_A(R431, J, FINITE)
    assert abs(float(nominal.total_duration - R431.tau_r(J))) < 2e-7


def test_finite_pulse_duration_matches_nutation():
    for flip in (45, 90, 180, 360):
        p = pulse(flip, 0, FINITE)
        assert float(p.duration) == pytest.approx(math.radians(flip) / FINITE.omega_nut_nominal, abs=1e-12)


def test_central_timing_rule():
    a = basic_element_A(R431, J, FINITE, composite="asbo11", tau_r=13800e-6, timing="central")
    assert float(a.events[1].duration) == pytest.approx(6460e-6, abs=1e-12)
    with pytest.raises(SequenceError):
        basic_element_A(R431, J, FINITE, timing="middle")


def test_infeasible_timing_names_minimum_nutation():
    slow = FINITE.with_(omega_nut_nominal=2 * math.pi * 10.0)
    with pytest.raises(InfeasibleTimingError) as info:
        basic_element_A(R431, J, slow)
    # 360 degrees of nutation must fit in tau_R.
    assert info.value.min_nutation_hz == pytest.approx(1 / float(R431.tau_r(J)), rel=1e-9)
    assert "minimum feasible nutation" in str(info.value)


def test_standard_build_structure_and_duration():
    seq = build_standard(R431, basic_element_A(R431, J), J)
    assert len(seq.pulses) == 12
    assert seq.total_duration == 3 / exact(J)
    assert pulses(seq)[:6] == [(90, 135.0), (180, 45.0), (90, 135.0), (90, 225.0), (180, 315.0), (90, 225.0)]


def test_standard_rejects_wrong_duration():
    with pytest.raises(SequenceError):
        build_standard(R873, basic_element_A(R431, J), J)


def test_r873_riffled_phases():
    seq = build_riffled(R873, basic_element_A(R873, J), basic_element_B(R873, J), J)
    assert seq.total_duration == 7 / exact(J)
    assert len(seq.pulses) == 24
    first_pair = pulses(seq)[:6]
    expected = [(90, 157.5), (180, 67.5), (90, 157.5), (90, normalize_phase(-157.5)), (180, 112.5),
                (90, normalize_phase(-157.5))]
    assert first_pair == expected
    assert pulses(seq)[6:12] == expected
    e = float(basic_element_A(R873, J).events[1].duration)
    assert e == pytest.approx(7 / 16 / J)  # half of tau_R


def test_r873_standard_phases():
    seq = build_standard(R873, basic_element_A(R873, J), J)
    assert {p for _, p in pulses(seq)} >= {157.5, 67.5}


def test_riffled_rejects_mismatched_durations():
    with pytest.raises(SequenceError):
        build_riffled(R431, basic_element_A(R431, J), basic_element_B(R431, J, FINITE, composite="asbo11"))


def test_pulsepol_is_shifted_riffled_r431():
    riffled = build_riffled(R431, basic_element_A(R431, J), basic_element_B(R431, J))
    assert pulsepol(J) .events == phase_shift(riffled, -45).events
    assert float(pulsepol(J).events[1].duration) == pytest.approx(3 / 8 / J)


def test_pulsepol_literal_chain():
    # (R_A)_0 (R'_B)_-90: the -45 degree shift of the riffled pair, composed literally.
    seq = pulsepol(J)
    assert pulses(seq)[:6] == [(90, 90.0), (180, 0.0), (90, 90.0), (90, 180.0), (180, 90.0), (90, 180.0)]


@settings(max_examples=40, deadline=None)
@given(st.floats(-720, 720, allow_nan=False), st.sampled_from([(4, 3, 1), (8, 7, 3), (10, 3, -2), (6, 5, 2)]))
def test_phase_shift_equivariance(phi, numbers):
    sym = SymmetryNumbers(*numbers)
    a, b = basic_element_A(sym, J), basic_element_B(sym, J)
    # B enters conjugated, so its shift flips sign.
    lhs = build_riffled(sym, phase_shift(a, phi), phase_shift(b, -phi))
    rhs = phase_shift(build_riffled(sym, a, b), phi)
    assert [(p.flip_deg, round(p.phase_deg, 6) % 360) for p in lhs.pulses] == \
        [(p.flip_deg, round(p.phase_deg, 6) % 360) for p in rhs.pulses]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(4, 3, 1), (8, 7, 3), (10, 3, -2), (4, 1, -1), (10, 7, 2)]),
       st.floats(10.0, 200.0, allow_nan=False))
def test_duration_bookkeeping_is_exact(numbers, j):
    sym = SymmetryNumbers(*numbers)
    seq = build_riffled(sym, basic_element_A(sym, j), basic_element_B(sym, j), j)
    assert seq.total_duration == sym.n / exact(j)


def test_build_elements_partial_counts():
    a, b = basic_element_A(R431, J), basic_element_B(R431, J)
    assert len(build_elements(R431, a, b, 0)) == 0
    assert len(build_elements(R431, a, b, 9).pulses) == 27
    with pytest.raises(SequenceError):
        build_elements(R431, a, b, -1)


def test_bb1_example():
    assert math.degrees(wimperis_angle(math.pi / 2)) == pytest.approx(97.18, abs=0.005)
    assert math.degrees(wimperis_angle(math.pi)) == pytest.approx(104.48, abs=0.005)
    got = [(f, round(p, 2)) for f, p in pulses(composite_bb1(math.pi / 2))]
    assert got == [(45, 0.0), (180, 97.18), (360, 291.54), (180, 97.18), (45, 0.0)]
    with pytest.raises(SequenceError):
        composite_bb1(0.0)


def test_asbo11_phases():
    printed = [98.81, 255.52, 172.24, 240, 67.76, 0, 292.24, 120, 187.76, 104.45, 261.19]
    got = asbo11_phases()
    # The tenth phase is 104.48 (= theta_W(pi)) to two decimals; see the decisions ledger.
    for i, (g, p) in enumerate(zip(got, printed)):
        assert g == pytest.approx(p, abs=0.04 if i == 9 else 0.006)
    assert got[9] == pytest.approx(math.degrees(wimperis_angle(math.pi)), abs=1e-9)
    assert len(composite_asbo11().pulses) == 11


def test_asbo11_antisymmetry():
    ph = asbo11_phases()
    assert [round(x, 9) for x in ph[::-1]] == [round(normalize_phase(-x), 9) for x in ph]


def test_sp7_list():
    assert pulses(composite_sp7()) == [(60, 180.0), (180, 0.0), (240, 180.0), (420, 0.0), (240, 180.0), (180, 0.0),
                                       (60, 180.0)]


def test_m2s_counts_and_structure():
    assert m2s_counts(math.radians(7.85)) == (11, 5)
    m = build_m2s(J, DAND.theta_ST)
    assert m.label == "M2S(n1=11,n2=5)"
    # 90 + 11 echoes of 3 pulses + 90 + 5 echoes
    assert len(m.pulses) == 2 + 3 * 16
    t_e = 1 / (2 * exact(J))
    assert float(t_e) == pytest.approx(9.193e-3, abs=1e-6)
    with pytest.raises(SequenceError):
        m2s_counts(math.pi / 3)


def test_m2s_mlev4_phase_cycle():
    m = build_m2s(J, DAND.theta_ST)
    centers = [p.phase_deg for p in m.pulses if p.flip_deg == 180]
    assert centers[:8] == [0.0, 0.0, 180.0, 180.0, 0.0, 0.0, 180.0, 180.0]
    assert centers[11:15] == [0.0, 0.0, 180.0, 180.0]


def test_m2s_finite_timing_matches_reference_table():
    m = build_m2s(J, DAND.theta_ST, FINITE, tau_e=9.24e-3)
    delays = [float(e.duration) for e in m.events if isinstance(e, DelayEvent)]
    assert delays[0] == pytest.approx(4580e-6, abs=1e-12)  # tau_1
    assert delays[22] == pytest.approx(4600e-6, abs=1e-12)  # tau_2


def test_s2m_is_time_reverse():
    m = build_m2s(J, DAND.theta_ST)
    s = build_s2m(J, DAND.theta_ST)
    assert s.events == m.events[::-1]
    assert time_reverse(time_reverse(m)) == m


def test_sod():
    theta = math.radians(7.85)
    assert sod_m1(theta) == 8
    s = build_sod(J, theta)
    markers = [e for e in s.events if isinstance(e, FilterMarker)]
    assert len(markers) == 7
    assert markers[0].parameters["m1"] == 8
    assert markers[0].parameters["tau_e_ns"] == pytest.approx(1e9 / (2 * J), abs=1e-3)
    assert len(build_sod(J, theta, m2=3, m1=7).pulses) == 3 * 7 * 3


def test_scale_delays():
    a = basic_element_A(R431, J)
    b = scale_delays(a, 1.1)
    assert b.events[1].duration == a.events[1].duration * exact(1.1)
    assert pulses(b) == pulses(a)


def test_json_round_trip_and_determinism():
    seq = build_sod(J, DAND.theta_ST, m2=2) + pulsepol(J, FINITE)
    text = seq.to_json()
    assert text == (build_sod(J, DAND.theta_ST, m2=2) + pulsepol(J, FINITE)).to_json()
    back = PulseSequence.from_dict(json.loads(text))
    assert [e.kind for e in back.events] == [e.kind for e in seq.events]
    assert pulses(back) == pulses(seq)
    assert abs(float(back.total_duration - seq.total_duration)) < 1e-12


def test_recipe_builds():
    r = SequenceRecipe(R431, "riffled")
    assert r.build(4).events == build_riffled(R431, basic_element_A(R431, J), basic_element_B(R431, J)).events
    assert r.cycle() == r.build(4)
    assert SequenceRecipe(R431, "pulsepol").build(4).events == pulsepol(J).events
    m = SequenceRecipe(construction="m2s", theta_ST=DAND.theta_ST)
    assert m.reconversion(1).events == build_s2m(J, DAND.theta_ST).events
    assert len(m.build(0)) == 0
    with pytest.raises(SequenceError):
        SequenceRecipe(construction="m2s").build(1)
    with pytest.raises(SequenceError):
        SequenceRecipe(construction="zigzag")


def test_pulsepol_differs_from_printed_cycle_only_in_outer_phases():
    from pathlib import Path
    golden = json.loads((Path(__file__).parent / "golden" / "pulsepol.json").read_text())
    printed = [(p["flip_deg"], p["phase_deg"]) for p in golden["cycle"]]
    derived = pulses(phase_shift(build_riffled(R431, basic_element_A(R431, J), basic_element_B(R431, J)), -45))
    # Literal chain: (R_A)_+45 (R'_B)_-45 shifted by -45 degrees.
    literal = pulses(phase_shift(basic_element_A(R431, J), 0)) + pulses(phase_shift(conjugate(basic_element_B(R431, J)), -90))
    assert derived[:6] == literal
    diff = [i for i, (a, b) in enumerate(zip(derived[:6], printed)) if a != b]
    assert diff == [3, 5]
    for i in diff:
        assert derived[i][0] == printed[i][0] == 90
        assert (derived[i][1] - printed[i][1]) % 360 == 180
