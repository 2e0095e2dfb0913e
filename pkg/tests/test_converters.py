"""Controller unit behavior: PLL tracking, ride-through machine, droops,
current clamps and the overvoltage foldback."""

import cmath
import math

import pytest
from hypothesis import given, settings, strategies as st

from acisland import GflConverter, GfmConverter, PllState, gfm_droop_omega
from acisland.converters import FAULT_RIDE, NORMAL, RECOVERY, TWO_PI

W0 = TWO_PI * 50.0


def make_gfl(**kw):
    kw.setdefault("name", "u1")
    kw.setdefault("bus", "b1")
    kw.setdefault("omega0", W0)
    return GflConverter(**kw)


def make_gfm(**kw):
    kw.setdefault("name", "g1")
    kw.setdefault("bus", "b0")
    kw.setdefault("omega0", W0)
    return GfmConverter(**kw)


# --- PLL -----------------------------------------------------------------

def test_pll_phase_step_matches_critically_damped_closed_form():
    # kp = 2a, ki = a^2 puts a double pole at a; for a phase step dth the
    # linearized error is e(t) = dth*(1 - a*t)*exp(-a*t), so the frequency
    # output is w - w0 = -e'(t) = dth*a*exp(-a*t)*(2 - a*t)
    a = 40.0
    dth = 0.05
    pll = PllState(omega0=W0, kp=2 * a, ki=a * a)
    v = cmath.exp(1j * dth)
    dt = 1.0e-5
    t = 0.0
    for _ in range(int(0.12 / dt)):
        pll.step(v, dt)
        t += dt
        expected = dth * a * math.exp(-a * t) * (2.0 - a * t)
        assert pll.omega - W0 == pytest.approx(expected, abs=2.0e-3)
    # the error term overshoots past t = 1/a and only then decays; after a
    # few more time constants the angle estimate has converged on the step
    for _ in range(int(0.2 / dt)):
        pll.step(v, dt)
    assert pll.theta == pytest.approx(dth, abs=1.0e-4)


def test_pll_holds_during_voltage_collapse():
    pll = PllState(omega0=W0)
    pll.step(cmath.exp(0.3j), 1.0e-4)
    w_before, th_before = pll.omega, pll.theta
    for _ in range(100):
        pll.step(0.05 + 0.0j, 1.0e-4)       # below v_freeze
    assert pll.omega == w_before
    assert pll.theta == th_before


# --- GFM droop curve -----------------------------------------------------

def test_gfm_droop_endpoints():
    assert gfm_droop_omega(0.5, 1.0, 1.2, 0.03, W0) == W0
    assert gfm_droop_omega(1.0, 1.0, 1.2, 0.03, W0) == W0
    w_top = gfm_droop_omega(1.2, 1.0, 1.2, 0.03, W0)
    assert w_top / TWO_PI == pytest.approx(51.5, abs=1.0e-12)
    assert gfm_droop_omega(1.1, 1.0, 1.2, 0.03, W0) / TWO_PI == pytest.approx(50.75)
    # loading beyond the thermal limit cannot push frequency further
    assert gfm_droop_omega(5.0, 1.0, 1.2, 0.03, W0) == w_top


@settings(max_examples=200, deadline=None)
@given(p1=st.floats(0.0, 3.0), p2=st.floats(0.0, 3.0))
def test_gfm_droop_monotone_and_bounded(p1, p2):
    w1 = gfm_droop_omega(p1, 1.0, 1.2, 0.03, W0)
    w2 = gfm_droop_omega(p2, 1.0, 1.2, 0.03, W0)
    if p1 <= p2:
        assert w1 <= w2
    assert W0 <= w1 <= W0 * 1.03 + 1e-12


# --- FRT state machine ---------------------------------------------------

def test_frt_thresholds_are_strict_enter_inclusive_exit():
    c = make_gfl(p_ref=1.0)
    assert c.frt_transition(0.85) == NORMAL          # not strictly below
    assert c.frt_transition(0.8499) == FAULT_RIDE
    assert c.frt_transition(0.8999) == FAULT_RIDE    # hysteresis band holds
    assert c.frt_transition(0.90) == RECOVERY
    assert c.frt_transition(0.86) == RECOVERY        # band does not re-trip
    assert c.frt_transition(0.84) == FAULT_RIDE      # a real dip does


def test_frt_commands_zero_power_and_entry_clears_droop():
    c = make_gfl(p_ref=1.0, q_ref=0.2, droop_pu_per_hz=0.25)
    c.droop_df = -0.4
    c.droop_active = True
    c.frt_transition(0.5)
    assert c.frt == FAULT_RIDE
    assert c.droop_df == 0.0
    assert c.commanded_power(2.0e-4) == (0.0, 0.0)


def test_recovery_ramps_at_stated_rate_then_rearms_normal():
    c = make_gfl(p_ref=1.0, recovery_ramp=2.0)
    c.frt_transition(0.5)
    c.frt_transition(0.95)
    assert c.frt == RECOVERY
    assert c.relock_left == pytest.approx(c.droop_hold)
    dt = 1.0e-3
    cmd, _ = c.commanded_power(dt)
    assert cmd == pytest.approx(2.0 * dt)
    for _ in range(int(0.5 / dt) + 2):
        c.commanded_power(dt)
    assert c.frt == NORMAL
    assert c.commanded_power(dt)[0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.1), min_size=1, max_size=60))
def test_frt_transitions_only_on_threshold_crossings(vms):
    c = make_gfl(p_ref=1.0)
    for vm in vms:
        before = c.frt
        after = c.frt_transition(vm)
        if before == NORMAL and after == FAULT_RIDE:
            assert vm < 0.85
        elif before == FAULT_RIDE and after == RECOVERY:
            assert vm >= 0.90
        elif before == RECOVERY and after == FAULT_RIDE:
            assert vm < 0.85
        else:
            assert before == after
        if c.frt == FAULT_RIDE:
            assert c.commanded_power(1.0e-4) == (0.0, 0.0)


# --- GFL droop -----------------------------------------------------------

def test_droop_curtails_toward_zero_never_boosts_never_reverses():
    c = make_gfl(p_ref=0.8, droop_pu_per_hz=0.4, rating=0.5)
    c.droop_active = True
    c.droop_df = -0.5                 # half a hertz over nominal
    assert c.droop_delta_p() == pytest.approx(0.4 * 0.5 * -0.5)
    assert c.target_p() == pytest.approx(0.8 - 0.1)
    c.droop_df = -20.0                # absurd excursion: clamp at zero
    assert c.target_p() == 0.0
    c.droop_df = +0.5                 # under-frequency: never above dispatch
    assert c.target_p() == pytest.approx(0.8)


def test_droop_curtails_import_toward_zero_too():
    c = make_gfl(p_ref=-1.0, droop_pu_per_hz=0.3)
    c.droop_active = True
    c.droop_df = +0.5                 # positive offset moves import toward 0
    assert c.target_p() == pytest.approx(-1.0 + 0.15)
    c.droop_df = +10.0
    assert c.target_p() == 0.0


def test_droop_arming_hysteresis_through_full_step():
    c = make_gfl(p_ref=0.5, droop_pu_per_hz=0.3, droop_tau=0.05)
    dt = 2.0e-4
    # spin the terminal phasor 0.3 Hz slow: PLL reports under-frequency,
    # below the 0.10 Hz arming threshold nothing happens... then 0.5 Hz
    for doff, expect_active in ((0.05, False), (0.5, True)):
        th = 0.0
        for _ in range(int(1.0 / dt)):
            th -= TWO_PI * doff * dt
            c.step(cmath.exp(1j * th), c.i_d, 0.0, dt)
        assert c.droop_active is expect_active
    # back on frequency: the filtered deviation decays and the droop disarms
    th = 0.0
    for _ in range(int(2.0 / dt)):
        c.step(cmath.exp(1j * th), c.i_d, 0.0, dt)
    assert abs(c.droop_df) < 0.02
    assert c.droop_active is False


# --- current handling ----------------------------------------------------

def test_outer_loop_clamps_current_to_device_limit():
    c = make_gfl(p_ref=1.0, rating=0.5, i_limit=1.2, outer_bw=1.0e4)
    for _ in range(200):
        c.outer_loop(2.0, 0.0, 0.0, 0.0, 1.0, 1.0e-3)
    assert math.hypot(c.i_d, c.i_q) == pytest.approx(1.2 * 0.5)
    assert c.limited is True


def test_overvoltage_foldback_scales_injection():
    c = make_gfl(p_ref=1.0, ovp_tau=0.0)
    i = c.step(1.21 + 0.0j, 1.0, 0.0, 2.0e-4)
    expected_gain = (1.10 / 1.21) ** 2
    assert c.ovp_gain == pytest.approx(expected_gain)
    assert abs(i) == pytest.approx(math.hypot(c.i_d, c.i_q) * expected_gain)


def test_trip_takes_unit_out_of_service():
    c = make_gfl(p_ref=1.0)
    c.trip()
    assert c.in_service is False
    assert c.step(1.0 + 0j, 0.0, 0.0, 2.0e-4) == 0j


# --- GFM behavior --------------------------------------------------------

def test_gfm_droop_acts_on_filtered_magnitude_export_sign_proof():
    g = make_gfm()
    for _ in range(3000):                   # 0.6 s, 60 filter time constants
        g.step(1.0 + 0j, -1.2, 2.0e-4)      # exporting 1.2 pu
    assert g.frequency_hz == pytest.approx(51.5, abs=1.0e-6)


def test_gfm_voltage_integrator_holds_while_limited():
    g = make_gfm()
    g.limited = True
    x_before = g.x_v
    g.step(0.5 + 0j, 0.0, 2.0e-4)           # large error, frozen integrator
    assert g.x_v == x_before
    g.limited = False
    g.step(0.5 + 0j, 0.0, 2.0e-4)
    assert g.x_v > x_before


def test_gfm_emf_never_exceeds_ceiling():
    g = make_gfm(e_ceiling=1.5)
    for _ in range(20000):
        e = g.step(0.2 + 0j, 0.0, 2.0e-4)   # permanent undervoltage
    assert abs(e) <= 1.5 + 1e-12
    assert g.e_mag == pytest.approx(1.5)
