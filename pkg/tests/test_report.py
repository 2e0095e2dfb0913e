"""Endpoint verification: expectations from the analytic equilibrium for
trip runs, from the pre-event baseline otherwise, and the verdict rules."""

import textwrap

import pytest

from acisland import SimulationError, Simulator, parse_scenario
from acisland.report import emit_run_report, report_from_error, tripped_export_mw

ISLAND = textwrap.dedent("""\
    schema_version: 1
    metadata: {name: report_island, description: verification exercises}
    base:
      s_mva: 600.0
      f_hz: 50.0
      v_kv: {hv: 275.0, mv: 132.0}
    sim: {dt: 2.0e-4, duration: 6.0}
    network:
      buses:
        - {name: island, level: hv, b_shunt: 0.1}
        - {name: gfmbus, level: hv}
        - {name: linkbus, level: hv}
        - {name: wfbus, level: mv}
      branches:
        - {from: gfmbus, to: island, r: 0.002, x: 0.1}
        - {from: linkbus, to: island, r: 0.002, x: 0.1}
        - {from: wfbus, to: island, r: 0.001, x: 0.05}
    converters:
      gfm: {name: former, bus: gfmbus, rating_mva: 600.0, params: {v_ref: 1.015}}
      gfl:
        - {name: link, bus: linkbus, role: hvdc_link, rating_mva: 600.0,
           params: {outer_bw: 60.0}}
        - {name: wf, bus: wfbus, role: wind_farm, rating_mva: 600.0,
           params: {outer_bw: 20.0}}
    dispatch:
      former: {p_mw: -60.0}
      link: {p_mw: -600.0}
      wf: {p_mw: 660.0}
    coordination: {k_gfm: 0.03, auto_gain: true}
    events:
      - {t: 0.5, kind: trip_link, target: link}
    """)


def simulate(sc, duration=None):
    sim = Simulator(sc.build(), dt=sc.dt)
    return sim.run(duration or sc.duration, events=sc.events)


@pytest.fixture(scope="module")
def trip_case():
    sc = parse_scenario(ISLAND)
    return sc, simulate(sc)


def test_trip_export_accounting():
    sc = parse_scenario(ISLAND)
    assert tripped_export_mw(sc) == pytest.approx(600.0)
    no_trip = parse_scenario(ISLAND.replace(
        "- {t: 0.5, kind: trip_link, target: link}",
        "- {t: 0.5, kind: apply_ac_fault, target: island, y_fault: 1.0e4}\n"
        "  - {t: 0.8, kind: clear_ac_fault, target: island}"))
    assert tripped_export_mw(no_trip) == 0.0


def test_trip_run_verifies_against_the_prediction(trip_case):
    sc, trace = trip_case
    report = emit_run_report(sc, trace)
    assert report.verdict == "pass"
    assert report.prediction is not None and report.prediction.feasible
    # the GFM must carry the stranded 660 MW, which its droop prices at
    # half the overload band
    assert report.prediction.f_hz == pytest.approx(50.75)
    by_name = {c.name: c for c in report.checks}
    assert by_name["f_island_hz"].mode == "absolute_hz"
    assert by_name["f_island_hz"].expected == pytest.approx(50.75)
    assert by_name["p_former_mw"].expected == pytest.approx(-660.0)
    assert by_name["p_link_mw"].expected == 0.0
    assert by_name["p_wf_mw"].expected == pytest.approx(660.0)
    assert not report.limit_violations
    text = report.format()
    assert "verify report_island: PASS" in text
    assert "f_island_hz" in text


def test_tight_tolerance_turns_the_same_run_into_fail(trip_case):
    sc, trace = trip_case
    report = emit_run_report(sc, trace, f_tol_hz=1e-9, p_tol_rel=1e-12)
    assert report.verdict == "fail"
    assert any(not c.passed for c in report.checks)


def test_truncated_run_is_inconclusive():
    sc = parse_scenario(ISLAND)
    report = emit_run_report(sc, simulate(sc, duration=0.56))
    assert report.verdict == "inconclusive"
    assert any("not stationary" in note for note in report.notes)


def test_no_trip_run_verifies_against_its_own_baseline():
    text = ISLAND.replace(
        "- {t: 0.5, kind: trip_link, target: link}",
        "- {t: 1.0, kind: apply_ac_fault, target: island, y_fault: 1.0e4}\n"
        "  - {t: 1.3, kind: clear_ac_fault, target: island}")
    text = text.replace("params: {outer_bw: 60.0}",
                        "params: {outer_bw: 60.0, recovery_ramp: 1.25}")
    text = text.replace("params: {outer_bw: 20.0}",
                        "params: {outer_bw: 20.0, recovery_ramp: 1.25}")
    sc = parse_scenario(text)
    report = emit_run_report(sc, simulate(sc))
    assert report.prediction is None
    assert report.verdict == "pass"
    by_name = {c.name: c for c in report.checks}
    assert by_name["f_island_hz"].expected == pytest.approx(50.0, abs=1e-3)
    assert by_name["p_wf_mw"].expected == pytest.approx(660.0, rel=2e-2)


def test_limit_violation_forces_fail(trip_case):
    sc, trace = trip_case
    doctored = dict(trace.meta)
    doctored["max_i_pu"] = dict(trace.meta["max_i_pu"])
    doctored["max_i_pu"]["former"] = 1.31
    original = trace.meta
    trace.meta = doctored
    try:
        report = emit_run_report(sc, trace)
    finally:
        trace.meta = original
    assert report.verdict == "fail"
    assert any("former" in v for v in report.limit_violations)


def test_aborted_simulation_reports_fail():
    sc = parse_scenario(ISLAND)
    err = SimulationError("solve failed at t=0.600000 s: no path", t=0.6)
    report = report_from_error(sc, err, prediction=None)
    assert report.verdict == "fail"
    assert any("aborted" in note for note in report.notes)
    assert not report.checks
