"""Endpoint verification of a finished run against the planning arithmetic.

A report compares the steady window at the end of a trace with what the
dispatch plan says the island should settle to.  When the scenario trips
export capacity the expectation is the re-balanced equilibrium from the
planning layer; when nothing trips, the island must return to wherever it
sat before the first event.  Frequency is judged in absolute hertz,
powers relative to the expected megawatts; a window that has not gone
quiet is inconclusive rather than a pass or fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coordination import EquilibriumPrediction, predict_post_fault_equilibrium
from .engine import Trace
from .scenario import Scenario

# judged over the trailing tenth of the run
ENDPOINT_FRAC = 0.1
STATIONARY_TOL = 0.01
LIMIT_SLACK = 1e-9


@dataclass
class QuantityCheck:
    """One compared quantity: trace endpoint against its expectation."""

    name: str
    endpoint: float
    expected: float
    error: float                 # Hz for frequency, fractional for powers
    tolerance: float
    mode: str                    # "absolute_hz" | "relative"
    stationary: bool
    passed: bool

    def format(self) -> str:
        unit = "Hz" if self.mode == "absolute_hz" else ""
        verdict = "pass" if self.passed else (
            "unsettled" if not self.stationary else "FAIL")
        return (f"{self.name:16s} {self.endpoint:12.3f} "
                f"expected {self.expected:12.3f}  "
                f"err {self.error:10.4g} {unit:2s} "
                f"(tol {self.tolerance:g})  {verdict}")


@dataclass
class RunReport:
    """Endpoint verdict for one scenario run."""

    scenario: str
    verdict: str                 # "pass" | "fail" | "inconclusive"
    checks: list[QuantityCheck] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    prediction: EquilibriumPrediction | None = None
    limit_violations: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def format(self) -> str:
        lines = [f"verify {self.scenario}: {self.verdict.upper()}"]
        if self.prediction is not None:
            p = self.prediction
            lines.append(f"  predicted equilibrium: f {p.f_hz:.4f} Hz, "
                         f"GFM export {p.gfm_export_mw:.1f} MW, "
                         f"feasible={p.feasible}")
        lines += [f"  {c.format()}" for c in self.checks]
        for name, peak in sorted(self.limit_violations.items()):
            lines.append(f"  current limit violated: {name} reached "
                         f"{peak:.4f} pu")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "verdict": self.verdict,
            "checks": [vars(c).copy() for c in self.checks],
            "notes": list(self.notes),
            "limit_violations": dict(self.limit_violations),
            "prediction": None if self.prediction is None
            else vars(self.prediction).copy(),
        }


def tripped_export_mw(scenario: Scenario) -> float:
    """Total scheduled export of every link the event list takes out."""
    tripped: set[str] = set()
    for ev in scenario.events:
        if ev.kind in ("dc_fault", "trip_link"):
            tripped.add(ev.target)
    return sum(-scenario.dispatch_mw[name][0] for name in tripped)


def _expectations(scenario: Scenario, trace: Trace,
                  prediction: EquilibriumPrediction | None,
                  tripped: set[str]) -> list[tuple[str, float, str]]:
    """(column, expected value, mode) rows for the comparison."""
    rows: list[tuple[str, float, str]] = []
    if prediction is not None:
        rows.append(("f_island_hz", prediction.f_hz, "absolute_hz"))
        rows.append((f"p_{scenario.gfm.name}_mw",
                     -prediction.gfm_export_mw, "relative"))
        wf_iter = iter(prediction.wf_outputs_mw)
        for c in scenario.gfls:
            if c.role == "wind_farm":
                rows.append((f"p_{c.name}_mw", next(wf_iter), "relative"))
            elif c.name in tripped:
                rows.append((f"p_{c.name}_mw", 0.0, "relative"))
            else:
                rows.append((f"p_{c.name}_mw",
                             scenario.dispatch_mw[c.name][0], "relative"))
        return rows
    # nothing tripped: the island must come back to its pre-event state
    t_first = min((ev.t for ev in scenario.events), default=None)
    if t_first is None or t_first <= trace.t[0]:
        t_lo, t_hi = trace.t[0], trace.t[0]
    else:
        span = ENDPOINT_FRAC * (trace.t[-1] - trace.t[0])
        t_lo, t_hi = max(trace.t[0], t_first - span), t_first
    def baseline(col: str) -> float:
        w = trace.window(col, t_lo, t_hi)
        return float(w.mean()) if w.size else float(trace.column(col)[0])
    rows.append(("f_island_hz", scenario.base.f_hz, "absolute_hz"))
    for c in [scenario.gfm, *scenario.gfls]:
        rows.append((f"p_{c.name}_mw", baseline(f"p_{c.name}_mw"), "relative"))
    return rows


def emit_run_report(scenario: Scenario, trace: Trace,
                    f_tol_hz: float = 0.05,
                    p_tol_rel: float = 0.01) -> RunReport:
    """Judge a finished trace against the plan's expected endpoint."""
    plan = scenario.dispatch_plan()
    tripped = {ev.target for ev in scenario.events
               if ev.kind in ("dc_fault", "trip_link")}
    lost_mw = sum(-scenario.dispatch_mw[n][0] for n in tripped)
    prediction = None
    if lost_mw > 0.0:
        prediction = predict_post_fault_equilibrium(
            plan, scenario.k_gfl_mw_per_hz, lost_mw)

    report = RunReport(scenario=scenario.name, verdict="pass",
                       prediction=prediction)
    if any(ev.kind == "set_dispatch" for ev in scenario.events):
        report.notes.append("set_dispatch events present; expectations "
                            "use the scenario's loaded dispatch")

    s_base = scenario.base.s_base_mva
    for col, expected, mode in _expectations(scenario, trace, prediction,
                                             tripped):
        endpoint = trace.endpoint(col, ENDPOINT_FRAC)
        if mode == "absolute_hz":
            # frequency rides on a large offset, so judge motion on an
            # absolute scale instead of relative to 50 Hz
            w = trace.window(col, trace.t[-1]
                             - ENDPOINT_FRAC * (trace.t[-1] - trace.t[0]))
            stationary = float(np.std(w)) <= 0.1 * f_tol_hz
        else:
            stationary = trace.endpoint_stationary(col, ENDPOINT_FRAC,
                                                   STATIONARY_TOL)
        if mode == "absolute_hz":
            error, tol = abs(endpoint - expected), f_tol_hz
        else:
            # relative error with an absolute floor so a tripped unit's
            # zero expectation stays comparable
            floor = 0.01 * s_base
            error = abs(endpoint - expected) / max(abs(expected), floor)
            tol = p_tol_rel
        report.checks.append(QuantityCheck(
            name=col, endpoint=endpoint, expected=expected, error=error,
            tolerance=tol, mode=mode, stationary=stationary,
            passed=stationary and error <= tol))

    max_i = trace.meta.get("max_i_pu", {})
    for c in [scenario.gfm, *scenario.gfls]:
        limit = float(c.params.get("i_limit", 1.2))
        peak = max_i.get(c.name, 0.0)
        if peak > limit + LIMIT_SLACK:
            report.limit_violations[c.name] = peak

    infeasible = prediction is not None and not prediction.feasible
    unsettled = [c.name for c in report.checks if not c.stationary]
    if report.limit_violations:
        report.verdict = "fail"
    elif unsettled:
        report.verdict = "fail" if infeasible else "inconclusive"
        if not infeasible:
            report.notes.append("window not stationary: " +
                                ", ".join(unsettled))
    elif any(not c.passed for c in report.checks):
        report.verdict = "fail"
    if infeasible and report.verdict == "fail":
        report.notes.append("instability consistent with infeasible plan")
    return report


def report_from_error(scenario: Scenario, error: Exception,
                      prediction: EquilibriumPrediction | None = None
                      ) -> RunReport:
    """Report for a run that never reached its end time."""
    report = RunReport(scenario=scenario.name, verdict="fail",
                       prediction=prediction,
                       notes=[f"simulation aborted: {error}"])
    if prediction is not None and not prediction.feasible:
        report.notes.append("instability consistent with infeasible plan")
    return report
