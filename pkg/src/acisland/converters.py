"""Averaged converter models for the island simulation.

Two families are modelled on the positive-sequence phasor level:

* grid-following (GFL) units, used for the wind farms and the exporting
  HVDC links.  A synchronous-reference-frame PLL tracks the terminal
  voltage angle, integral power loops shape a current command in the PLL
  frame, and a three-state machine (normal / fault-ride / recovery)
  suppresses injection while the terminal voltage is depressed.  An
  optional frequency droop curtails the active reference when the island
  frequency rises above nominal.

* one grid-forming (GFM) unit, an internal voltage source behind a filter
  impedance.  Its frequency deviates from nominal only inside the overload
  band between the nominal power and the thermal limit, so the frequency
  itself signals how far into the overload region the unit is driven.

Sign convention: converter current is injected into the network, so power
flowing out of the island into an HVDC link shows up negative.  The GFM
droop therefore acts on the magnitude of the measured power.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi

# FRT state machine states
NORMAL = 0
FAULT_RIDE = 1
RECOVERY = 2

_FRT_NAMES = {NORMAL: "normal", FAULT_RIDE: "fault_ride", RECOVERY: "recovery"}


def frt_state_name(state: int) -> str:
    return _FRT_NAMES[state]


def clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


def clamp_toward_zero(x: float, ref: float) -> float:
    """Clamp ``x`` to the interval between 0 and ``ref`` (either sign of ref)."""
    return clamp(x, min(0.0, ref), max(0.0, ref))


@dataclass
class PllState:
    """Synchronous-reference-frame PLL.

    The loop filter gains give the linearized error dynamics the
    characteristic polynomial s^2 + kp*s + ki; the defaults place a double
    pole at 40 rad/s.  Below ``v_freeze`` the terminal angle is meaningless,
    so both the angle and frequency estimates are held.
    """

    omega0: float
    kp: float = 80.0
    ki: float = 1600.0
    v_freeze: float = 0.1
    theta: float = 0.0
    omega: float = field(init=False)
    integ: float = 0.0

    def __post_init__(self) -> None:
        self.omega = self.omega0

    def step(self, v: complex, dt: float) -> float:
        """Advance one step against terminal voltage phasor ``v``; returns omega."""
        vm = abs(v)
        if vm < self.v_freeze:
            return self.omega
        err = (v * cmath.exp(-1j * self.theta)).imag / vm
        self.integ += self.ki * err * dt
        self.omega = self.omega0 + self.kp * err + self.integ
        # common reference frame rotates at omega0, so theta tracks the offset
        self.theta += (self.omega - self.omega0) * dt
        return self.omega


def gfm_droop_omega(p_abs: float, p_nominal: float, p_thermal: float,
                    droop_frac: float, omega0: float) -> float:
    """Frequency command from loading: flat up to nominal power, then a
    linear rise reaching ``omega0 * (1 + droop_frac)`` at the thermal limit."""
    overload = max(0.0, min(p_abs, p_thermal) - p_nominal)
    return omega0 * (1.0 + droop_frac * overload / (p_thermal - p_nominal))


@dataclass
class GflConverter:
    """Grid-following converter: PLL, FRT state machine, integral power loops.

    Dispatch references and delivered signals are in system per unit;
    limits, slew rates and droop gains are expressed on the converter's
    own rating and scaled by it where they act.
    ``droop_pu_per_hz`` curtails the active reference toward zero when the
    PLL frequency exceeds nominal; it never boosts past the dispatch value
    and never reverses the sign of the reference.  The curtailment follows
    the PLL frequency through a first-order actuation lag ``droop_tau``,
    the plant-level response time of the curtailed unit; the lag is also
    what keeps the island-wide droop loop well damped.  The droop signal
    is cleared when a fault is detected and blanked for ``droop_hold``
    after the voltage recovers, so PLL re-lock transients never leak into
    the restored power reference; it arms only past ``droop_activate`` of
    deviation (releasing below ``droop_release``), because bus angles
    drift during any coordinated power ramp and the PLL faithfully reports
    that drift as a few tens of mHz the curtailment must not chase.

    Above the overvoltage knee ``v_ovp`` the hardware folds the injected
    current back by ``(v_ovp / v)**2``, so delivered power falls as the
    terminal voltage rises.  Without this the island has no sink for excess
    infeed once the grid-forming unit saturates: every extra ampere would
    go into the shunt capacitance and the voltage would run away.  The
    foldback gain tracks its target through the lag ``ovp_tau``, which both
    models the protection response time and keeps the step-to-step
    voltage/current interaction contraction-stable.
    """

    name: str
    bus: str
    omega0: float
    rating: float = 1.0             # unit MVA / system MVA base
    p_ref: float = 0.0              # system pu, generation positive
    q_ref: float = 0.0              # system pu
    v_enter: float = 0.85
    v_exit: float = 0.90
    v_ovp: float = 1.10             # overvoltage knee of the hardware foldback
    ovp_tau: float = 0.005          # s, response time of the foldback gain
    p_frt: float = 0.0              # system pu
    q_frt: float = 0.0
    recovery_ramp: float = 0.5      # device pu/s slew of the restored reference
    i_limit: float = 1.2            # device pu
    outer_bw: float = 20.0          # rad/s, integral power-loop bandwidth
    droop_pu_per_hz: float = 0.0    # device pu curtailed per Hz over nominal
    droop_tau: float = 0.25         # s, actuation lag of the curtailment
    droop_hold: float = 0.15        # s, droop blackout after voltage recovery
    droop_activate: float = 0.10    # Hz, deviation that arms the droop
    droop_release: float = 0.02     # Hz, deviation that disarms it again
    pll_kp: float = 80.0
    pll_ki: float = 1600.0

    pll: PllState = field(init=False)
    frt: int = field(init=False, default=NORMAL)
    i_d: float = field(init=False, default=0.0)
    i_q: float = field(init=False, default=0.0)
    ramp_p: float = field(init=False, default=0.0)
    ramp_q: float = field(init=False, default=0.0)
    droop_df: float = field(init=False, default=0.0)
    droop_active: bool = field(init=False, default=False)
    relock_left: float = field(init=False, default=0.0)
    ovp_gain: float = field(init=False, default=1.0)
    limited: bool = field(init=False, default=False)
    in_service: bool = field(init=False, default=True)

    def __post_init__(self) -> None:
        self.pll = PllState(omega0=self.omega0, kp=self.pll_kp, ki=self.pll_ki)
        self.reset_to_dispatch()

    def reset_to_dispatch(self) -> None:
        """Preload loop states consistent with dispatch at 1 pu voltage."""
        self.frt = NORMAL
        self.ramp_p = abs(self.p_ref)
        self.ramp_q = abs(self.q_ref)
        self.droop_df = 0.0
        self.droop_active = False
        self.relock_left = 0.0
        self.ovp_gain = 1.0
        self.i_d = self.p_ref
        self.i_q = -self.q_ref

    def droop_delta_p(self) -> float:
        """Active-power offset commanded by the frequency droop, system pu."""
        if self.droop_pu_per_hz == 0.0 or not self.droop_active:
            return 0.0
        return self.droop_pu_per_hz * self.rating * self.droop_df

    def target_p(self) -> float:
        """Droop-adjusted active reference, clamped between 0 and dispatch."""
        return clamp_toward_zero(self.p_ref + self.droop_delta_p(), self.p_ref)

    def frt_transition(self, vm: float) -> int:
        """Advance the FRT state machine against terminal voltage magnitude."""
        if self.frt == NORMAL:
            if vm < self.v_enter:
                self.frt = FAULT_RIDE
                self.droop_df = 0.0
        elif self.frt == FAULT_RIDE:
            if vm >= self.v_exit:
                self.frt = RECOVERY
                self.ramp_p = abs(self.p_frt)
                self.ramp_q = abs(self.q_frt)
                self.relock_left = self.droop_hold
        elif self.frt == RECOVERY:
            if vm < self.v_enter:
                self.frt = FAULT_RIDE
                self.droop_df = 0.0
        return self.frt

    def commanded_power(self, dt: float) -> tuple[float, float]:
        """Power command for this step, honoring FRT and the recovery slew."""
        if self.frt == FAULT_RIDE:
            return self.p_frt, self.q_frt
        tp = self.target_p()
        if self.frt == RECOVERY:
            slew = self.recovery_ramp * self.rating * dt
            self.ramp_p = min(self.ramp_p + slew, abs(self.p_ref))
            self.ramp_q = min(self.ramp_q + slew, abs(self.q_ref))
            cmd_p = math.copysign(min(abs(tp), self.ramp_p), tp) if tp else 0.0
            cmd_q = math.copysign(min(abs(self.q_ref), self.ramp_q), self.q_ref) if self.q_ref else 0.0
            if self.ramp_p >= abs(tp) and self.ramp_q >= abs(self.q_ref):
                self.frt = NORMAL
            return cmd_p, cmd_q
        self.ramp_p = abs(self.p_ref)
        self.ramp_q = abs(self.q_ref)
        return tp, self.q_ref

    def outer_loop(self, cmd_p: float, cmd_q: float, p_meas: float, q_meas: float,
                   vm: float, dt: float) -> None:
        """Integrate the current command in the PLL frame.

        In fault-ride the loops have no authority (the terminal voltage may
        be collapsed), so the current command decays directly toward the
        fault setpoint at the loop bandwidth instead of winding up.
        """
        if self.frt == FAULT_RIDE:
            vf = max(vm, 0.2)
            self.i_d += self.outer_bw * (cmd_p / vf - self.i_d) * dt
            self.i_q += self.outer_bw * (-cmd_q / vf - self.i_q) * dt
        else:
            di_d = self.outer_bw * (cmd_p - p_meas) * dt
            di_q = self.outer_bw * -(cmd_q - q_meas) * dt
            if self.ovp_gain < 0.999:
                # foldback is overriding the output: winding the command
                # further up cannot raise delivered power, so hold instead
                if abs(self.i_d + di_d) > abs(self.i_d):
                    di_d = 0.0
                if abs(self.i_q + di_q) > abs(self.i_q):
                    di_q = 0.0
            self.i_d += di_d
            self.i_q += di_q
        mag = math.hypot(self.i_d, self.i_q)
        limit = self.i_limit * self.rating
        if mag > limit:
            scale = limit / mag
            self.i_d *= scale
            self.i_q *= scale
            self.limited = True
        else:
            self.limited = False

    def step(self, v: complex, p_meas: float, q_meas: float, dt: float) -> complex:
        """One control step; returns the injected current in the network frame."""
        if not self.in_service:
            self.i_d = self.i_q = 0.0
            return 0j
        vm = abs(v)
        self.pll.step(v, dt)
        self.frt_transition(vm)
        # the droop may only sample frequency the PLL actually tracks: it is
        # cleared on fault detection and blanked while the PLL re-locks, so
        # ride-through transients cannot leak into the restored reference
        if self.relock_left > 0.0:
            self.relock_left -= dt
        elif self.frt != FAULT_RIDE:
            df = (self.omega0 - self.pll.omega) / TWO_PI
            if self.droop_tau > 0.0:
                self.droop_df += (df - self.droop_df) * dt / self.droop_tau
            else:
                self.droop_df = df
        # armed only past a real excursion so that the angle drift of an
        # ordinary power ramp is ignored; once armed the full droop law
        # applies unchanged, so the re-balanced equilibrium is unaffected
        if self.droop_active:
            if abs(self.droop_df) < self.droop_release:
                self.droop_active = False
        elif abs(self.droop_df) > self.droop_activate:
            self.droop_active = True
        cmd_p, cmd_q = self.commanded_power(dt)
        self.outer_loop(cmd_p, cmd_q, p_meas, q_meas, vm, dt)
        target = 1.0
        if vm > self.v_ovp:
            r = self.v_ovp / vm
            target = r * r
        if self.ovp_tau > 0.0:
            self.ovp_gain += (target - self.ovp_gain) * dt / self.ovp_tau
        else:
            self.ovp_gain = target
        return (complex(self.i_d, self.i_q) * self.ovp_gain
                * cmath.exp(1j * self.pll.theta))

    def trip(self) -> None:
        self.in_service = False
        self.i_d = self.i_q = 0.0


@dataclass
class GfmConverter:
    """Grid-forming converter: droop-governed voltage source behind a filter.

    The voltage magnitude is regulated at the converter bus by an integral
    loop with proportional trim; the angle integrates the droop frequency.
    Current limiting acts as an override on the voltage reference: the
    engine rescales the EMF magnitude, never past ``e_ceiling``, so the
    filter current lands exactly on ``i_limit``.  While the override is
    active the voltage integrator is held to avoid windup.  If no EMF
    within the ceiling can hold the limit, the excess current flows and is
    reported, which is what lets a run with broken re-balance coordination
    be detected instead of silently masked.
    """

    name: str
    bus: str
    omega0: float
    rating: float = 1.0             # unit MVA / system MVA base
    p_nominal: float = 1.0          # device pu
    p_thermal: float = 1.2          # device pu
    droop_frac: float = 0.03
    v_ref: float = 1.015
    filter_z: complex = 0.0025 + 0.05j
    i_limit: float = 1.2
    tau_p_meas: float = 0.010
    kp_v: float = 0.5
    ki_v: float = 40.0
    e_ceiling: float = 1.5

    theta: float = field(init=False, default=0.0)
    omega: float = field(init=False)
    x_v: float = field(init=False)
    e_mag: float = field(init=False)
    p_filt: float = field(init=False, default=0.0)
    limited: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        self.omega = self.omega0
        self.x_v = self.v_ref
        self.e_mag = self.v_ref

    def droop_omega(self, p_abs: float) -> float:
        return gfm_droop_omega(p_abs, self.p_nominal, self.p_thermal,
                               self.droop_frac, self.omega0)

    def step(self, v: complex, p_raw: float, dt: float) -> complex:
        """One control step; returns the internal EMF phasor.

        ``p_raw`` is the power delivered into the converter bus this step
        (export-negative); the droop acts on its filtered magnitude so the
        sign convention cannot flip the frequency direction.
        """
        self.p_filt += (p_raw - self.p_filt) * dt / self.tau_p_meas
        self.omega = self.droop_omega(abs(self.p_filt) / self.rating)
        self.theta += (self.omega - self.omega0) * dt
        err = self.v_ref - abs(v)
        if not self.limited:
            self.x_v += self.ki_v * err * dt
        self.e_mag = clamp(self.x_v + self.kp_v * err, 0.0, self.e_ceiling)
        return self.e_mag * cmath.exp(1j * self.theta)

    @property
    def frequency_hz(self) -> float:
        return self.omega / TWO_PI
