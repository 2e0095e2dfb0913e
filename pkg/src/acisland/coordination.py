"""Dispatch planning and analytic prediction of post-trip equilibria.

The planning layer works in MW and Hz.  Given a dispatch plan it sizes the
wind-farm frequency droop gain so that, if every exporting GFL link is
lost, the curtailment exactly closes the power balance with the GFM unit
at its thermal limit.  The same balance algebra predicts the steady state
after any partial or total loss of export, which the simulation engine is
checked against.

Two independent solvers are provided for the balance fixed point: a
bisection driven to float precision and a brute-force dense frequency
scan used as its verification twin in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class PlanError(ValueError):
    """Raised for dispatch plans that are inconsistent or out of range."""


@dataclass(frozen=True)
class DispatchPlan:
    """Pre-fault dispatch of the island, in MW.

    ``p_export_mw`` is the total scheduled export over the grid-following
    HVDC links and ``p_gfm_prefault_mw`` the magnitude of the GFM link's
    pre-fault export; generation and export must balance exactly since the
    planning model is lossless.
    """

    p_export_mw: float
    n_wf: int
    p_gfm_nominal_mw: float
    p_gfm_prefault_mw: float
    wf_dispatch_mw: tuple[float, ...]
    gfm_droop_frac: float = 0.03
    overload_factor: float = 1.2
    link_exports_mw: tuple[float, ...] = ()
    f0_hz: float = 50.0

    def __post_init__(self) -> None:
        if self.n_wf < 1:
            raise PlanError("need at least one wind farm")
        if len(self.wf_dispatch_mw) != self.n_wf:
            raise PlanError("wf_dispatch_mw length does not match n_wf")
        if self.p_export_mw < 0 or any(w < 0 for w in self.wf_dispatch_mw):
            raise PlanError("negative dispatch")
        if not 0.0 < self.gfm_droop_frac < 0.5:
            raise PlanError("gfm_droop_frac out of range")
        if self.overload_factor <= 1.0:
            raise PlanError("overload_factor must exceed 1")
        if not 0.0 <= self.p_gfm_prefault_mw <= self.p_gfm_nominal_mw + 1e-6:
            raise PlanError("GFM pre-fault export outside [0, nominal]")
        total_wf = sum(self.wf_dispatch_mw)
        imbalance = total_wf - self.p_export_mw - self.p_gfm_prefault_mw
        if abs(imbalance) > 1e-6:
            raise PlanError(f"pre-fault dispatch does not balance ({imbalance:+.3e} MW)")
        links = self.link_exports_mw or (self.p_export_mw,)
        if abs(sum(links) - self.p_export_mw) > 1e-6:
            raise PlanError("per-link exports do not sum to total export")
        object.__setattr__(self, "link_exports_mw", tuple(links))

    @property
    def p_gfm_thermal_mw(self) -> float:
        return self.overload_factor * self.p_gfm_nominal_mw

    @property
    def delta_f_max_hz(self) -> float:
        """Frequency rise when the GFM is driven to its thermal limit."""
        return self.gfm_droop_frac * self.f0_hz

    @property
    def surplus_mw(self) -> float:
        """Export power the GFM overload band cannot absorb after a total loss."""
        headroom = self.p_gfm_thermal_mw - self.p_gfm_prefault_mw
        return self.p_export_mw - headroom

    def gfm_export_at(self, f_hz: float) -> float:
        """Inverse droop: GFM export magnitude implied by frequency ``f_hz``."""
        if f_hz <= self.f0_hz:
            return self.p_gfm_nominal_mw
        frac = min(f_hz - self.f0_hz, self.delta_f_max_hz) / self.delta_f_max_hz
        return self.p_gfm_nominal_mw + frac * (self.p_gfm_thermal_mw - self.p_gfm_nominal_mw)


def compute_gfl_droop_gain(plan: DispatchPlan, formula: str = "deadband") -> float:
    """Per-wind-farm droop gain in MW/Hz sized for total loss of export.

    The default ``deadband`` form spreads the unabsorbable surplus over the
    frequency band the GFM droop can actually signal (``delta_f_max_hz``),
    so the curtailment reaches exactly the surplus when the frequency
    saturates at the top of the band.  The ``literal`` form normalizes by
    the thermal-limit power instead; it is retained for comparison but it
    is inconsistent with the band endpoints unless the droop fraction is
    read as frequency deviation per unit of thermal-limit power.
    """
    if plan.surplus_mw <= 0.0:
        return 0.0
    if formula == "deadband":
        return plan.surplus_mw / (plan.n_wf * plan.delta_f_max_hz)
    if formula == "literal":
        denom = plan.n_wf * plan.gfm_droop_frac * plan.p_gfm_thermal_mw
        return plan.surplus_mw / denom
    raise PlanError(f"unknown gain formula {formula!r}")


@dataclass(frozen=True)
class EquilibriumPrediction:
    """Predicted steady state after losing ``tripped_export_mw`` of export."""

    f_hz: float
    gfm_export_mw: float
    wf_outputs_mw: tuple[float, ...]
    delta_p_mw: float              # uniform per-WF curtailment before clamping
    tripped_export_mw: float
    feasible: bool
    imbalance_mw: float = 0.0      # residual surplus when infeasible
    iterations: int = 0


def _wf_outputs(plan: DispatchPlan, k_mw_per_hz: float, f_hz: float) -> list[float]:
    df = max(0.0, f_hz - plan.f0_hz)
    return [max(0.0, w - k_mw_per_hz * df) for w in plan.wf_dispatch_mw]


def predict_post_fault_equilibrium(plan: DispatchPlan, k_gfl_mw_per_hz: float,
                                   tripped_export_mw: float) -> EquilibriumPrediction:
    """Joint fixed point of the GFM droop and the wind-farm power droops.

    Solves for the frequency at which curtailed wind generation, the
    remaining scheduled export and the GFM droop response balance.  The
    bisection interval is collapsed to float precision so the balance
    identity holds to far better than 1e-6 MW.  Infeasibility (surplus left
    over even at the top of the droop band) is reported, not raised.
    """
    if not 0.0 <= tripped_export_mw <= plan.p_export_mw + 1e-9:
        raise PlanError("tripped export outside [0, total export]")
    remaining = plan.p_export_mw - tripped_export_mw
    f0 = plan.f0_hz
    f_max = f0 + plan.delta_f_max_hz

    def balance(f: float) -> float:
        return sum(_wf_outputs(plan, k_gfl_mw_per_hz, f)) - remaining - plan.gfm_export_at(f)

    # At nominal frequency the GFM absorbs anything up to its nominal power.
    need_at_f0 = sum(plan.wf_dispatch_mw) - remaining
    if need_at_f0 <= plan.p_gfm_nominal_mw + 1e-9:
        return EquilibriumPrediction(
            f_hz=f0, gfm_export_mw=need_at_f0, wf_outputs_mw=plan.wf_dispatch_mw,
            delta_p_mw=0.0, tripped_export_mw=tripped_export_mw, feasible=True)

    g_top = balance(f_max)
    scale = max(1.0, plan.p_gfm_thermal_mw)
    if g_top > 1e-9 * scale:
        outputs = tuple(_wf_outputs(plan, k_gfl_mw_per_hz, f_max))
        return EquilibriumPrediction(
            f_hz=f_max, gfm_export_mw=plan.p_gfm_thermal_mw, wf_outputs_mw=outputs,
            delta_p_mw=k_gfl_mw_per_hz * plan.delta_f_max_hz,
            tripped_export_mw=tripped_export_mw, feasible=False, imbalance_mw=g_top)

    lo, hi = f0, f_max
    iterations = 0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iterations += 1
        if balance(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    f_star = hi
    outputs = tuple(_wf_outputs(plan, k_gfl_mw_per_hz, f_star))
    return EquilibriumPrediction(
        f_hz=f_star, gfm_export_mw=sum(outputs) - remaining, wf_outputs_mw=outputs,
        delta_p_mw=k_gfl_mw_per_hz * (f_star - f0),
        tripped_export_mw=tripped_export_mw, feasible=True, iterations=iterations)


def scan_post_fault_equilibrium(plan: DispatchPlan, k_gfl_mw_per_hz: float,
                                tripped_export_mw: float,
                                df_hz: float = 1e-4) -> EquilibriumPrediction:
    """Brute-force verification twin of :func:`predict_post_fault_equilibrium`.

    Walks a dense frequency grid and picks the first point where the
    balance changes sign.  Accuracy is limited by the grid pitch; it exists
    to cross-check the bisection, not to be fast.
    """
    remaining = plan.p_export_mw - tripped_export_mw
    f0 = plan.f0_hz
    f_max = f0 + plan.delta_f_max_hz

    need_at_f0 = sum(plan.wf_dispatch_mw) - remaining
    if need_at_f0 <= plan.p_gfm_nominal_mw + 1e-9:
        return EquilibriumPrediction(
            f_hz=f0, gfm_export_mw=need_at_f0, wf_outputs_mw=plan.wf_dispatch_mw,
            delta_p_mw=0.0, tripped_export_mw=tripped_export_mw, feasible=True)

    def balance(f: float) -> float:
        return sum(_wf_outputs(plan, k_gfl_mw_per_hz, f)) - remaining - plan.gfm_export_at(f)

    n = int(round(plan.delta_f_max_hz / df_hz))
    f_prev = f0
    for i in range(1, n + 1):
        f = f0 + i * plan.delta_f_max_hz / n
        if balance(f) <= 0.0:
            f_star = 0.5 * (f_prev + f)
            outputs = tuple(_wf_outputs(plan, k_gfl_mw_per_hz, f_star))
            return EquilibriumPrediction(
                f_hz=f_star, gfm_export_mw=sum(outputs) - remaining,
                wf_outputs_mw=outputs,
                delta_p_mw=k_gfl_mw_per_hz * (f_star - f0),
                tripped_export_mw=tripped_export_mw, feasible=True, iterations=i)
        f_prev = f
    outputs = tuple(_wf_outputs(plan, k_gfl_mw_per_hz, f_max))
    return EquilibriumPrediction(
        f_hz=f_max, gfm_export_mw=plan.p_gfm_thermal_mw, wf_outputs_mw=outputs,
        delta_p_mw=k_gfl_mw_per_hz * plan.delta_f_max_hz,
        tripped_export_mw=tripped_export_mw, feasible=False,
        imbalance_mw=balance(f_max), iterations=n)


@dataclass(frozen=True)
class Contingency:
    """One export-loss case and its predicted equilibrium."""

    label: str
    tripped_export_mw: float
    prediction: EquilibriumPrediction

    @property
    def survivable(self) -> bool:
        return self.prediction.feasible


@dataclass(frozen=True)
class SurvivabilityReport:
    k_gfl_mw_per_hz: float
    cases: tuple[Contingency, ...] = field(default_factory=tuple)

    @property
    def all_survivable(self) -> bool:
        return all(c.survivable for c in self.cases)


def check_n1_survivability(plan: DispatchPlan,
                           k_gfl_mw_per_hz: float | None = None) -> SurvivabilityReport:
    """Predict the equilibrium for losing each export link and all at once.

    With gains sized by :func:`compute_gfl_droop_gain` the all-links case is
    feasible by construction, with the GFM exactly at its thermal limit
    whenever there is a positive surplus.
    """
    k = compute_gfl_droop_gain(plan) if k_gfl_mw_per_hz is None else k_gfl_mw_per_hz
    cases = []
    if len(plan.link_exports_mw) > 1:
        for i, e in enumerate(plan.link_exports_mw):
            pred = predict_post_fault_equilibrium(plan, k, e)
            cases.append(Contingency(f"link_{i + 1}", e, pred))
    pred_all = predict_post_fault_equilibrium(plan, k, plan.p_export_mw)
    cases.append(Contingency("all_links", plan.p_export_mw, pred_all))
    return SurvivabilityReport(k_gfl_mw_per_hz=k, cases=tuple(cases))
