"""Dispatch-plan arithmetic: gain sizing, equilibrium prediction and the
balance identity, cross-checked between bisection and a dense scan."""

import pytest
from hypothesis import assume, given, settings, strategies as st

from acisland import (
    DispatchPlan,
    PlanError,
    check_n1_survivability,
    compute_gfl_droop_gain,
    predict_post_fault_equilibrium,
    scan_post_fault_equilibrium,
)

# the reference island: two 1200 MW wind farms, two export links, the GFM
# one scheduled at its nominal power
REF = DispatchPlan(p_export_mw=1200.0, n_wf=2, p_gfm_nominal_mw=1200.0,
                   p_gfm_prefault_mw=1200.0, wf_dispatch_mw=(1200.0, 1200.0))


def plans():
    """Random but always-valid dispatch plans."""
    @st.composite
    def _plan(draw):
        n_wf = draw(st.integers(1, 5))
        wf = tuple(draw(st.floats(50.0, 1500.0)) for _ in range(n_wf))
        nominal = draw(st.floats(200.0, 1500.0))
        prefault = draw(st.floats(0.0, min(nominal, sum(wf))))
        overload = draw(st.floats(1.05, 1.5))
        droop = draw(st.floats(0.01, 0.1))
        return DispatchPlan(
            p_export_mw=sum(wf) - prefault, n_wf=n_wf,
            p_gfm_nominal_mw=nominal, p_gfm_prefault_mw=prefault,
            wf_dispatch_mw=wf, gfm_droop_frac=droop,
            overload_factor=overload)
    return _plan()


def test_gain_sizing_reference_numbers():
    # surplus 2400 - 1200 export remaining... : 1200 - (1440 - 1200) = 960,
    # spread over two farms across the 1.5 Hz band
    assert REF.surplus_mw == pytest.approx(960.0)
    assert REF.delta_f_max_hz == pytest.approx(1.5)
    assert compute_gfl_droop_gain(REF) == pytest.approx(320.0, abs=1e-12)
    assert compute_gfl_droop_gain(REF, "literal") == \
        pytest.approx(960.0 / (2 * 0.03 * 1440.0))
    with pytest.raises(PlanError):
        compute_gfl_droop_gain(REF, "bogus")


def test_gain_zero_without_surplus():
    plan = DispatchPlan(p_export_mw=200.0, n_wf=2, p_gfm_nominal_mw=1200.0,
                        p_gfm_prefault_mw=1000.0,
                        wf_dispatch_mw=(600.0, 600.0))
    assert plan.surplus_mw < 0
    assert compute_gfl_droop_gain(plan) == 0.0


def test_full_trip_equilibrium():
    pred = predict_post_fault_equilibrium(REF, 320.0, 1200.0)
    assert pred.feasible
    assert pred.f_hz == pytest.approx(51.5, abs=1e-9)
    assert pred.gfm_export_mw == pytest.approx(1440.0, abs=1e-6)
    assert pred.wf_outputs_mw == pytest.approx((720.0, 720.0), abs=1e-6)
    ident = sum(pred.wf_outputs_mw) - 0.0 - pred.gfm_export_mw
    assert abs(ident) < 1e-6


def test_partial_trip_equilibrium():
    pred = predict_post_fault_equilibrium(REF, 320.0, 600.0)
    assert pred.f_hz == pytest.approx(50.75, abs=1e-9)
    assert pred.gfm_export_mw == pytest.approx(1320.0, abs=1e-6)
    assert pred.wf_outputs_mw == pytest.approx((960.0, 960.0), abs=1e-6)


def test_no_trip_is_the_identity_point():
    pred = predict_post_fault_equilibrium(REF, 320.0, 0.0)
    assert pred.f_hz == 50.0
    assert pred.gfm_export_mw == pytest.approx(1200.0)
    assert pred.wf_outputs_mw == REF.wf_dispatch_mw
    assert pred.delta_p_mw == 0.0


def test_bisection_agrees_with_dense_scan():
    for trip in (150.0, 400.0, 777.7, 1033.3, 1200.0):
        b = predict_post_fault_equilibrium(REF, 320.0, trip)
        s = scan_post_fault_equilibrium(REF, 320.0, trip)
        assert abs(b.f_hz - s.f_hz) <= 1.0e-4 + 1e-12
        assert abs(b.gfm_export_mw - s.gfm_export_mw) <= 320.0 * 2.0e-4 + 1e-9


def test_infeasible_surplus_is_reported_not_raised():
    pred = predict_post_fault_equilibrium(REF, 0.0, 1200.0)
    assert not pred.feasible
    assert pred.f_hz == pytest.approx(51.5)
    assert pred.gfm_export_mw == pytest.approx(1440.0)
    assert pred.imbalance_mw == pytest.approx(960.0, abs=1e-6)


def test_trip_bounds_checked():
    with pytest.raises(PlanError):
        predict_post_fault_equilibrium(REF, 320.0, 1300.0)
    with pytest.raises(PlanError):
        predict_post_fault_equilibrium(REF, 320.0, -1.0)


def test_gfm_export_inverse_droop_curve():
    assert REF.gfm_export_at(49.0) == 1200.0
    assert REF.gfm_export_at(50.0) == 1200.0
    assert REF.gfm_export_at(50.75) == pytest.approx(1320.0)
    assert REF.gfm_export_at(51.5) == pytest.approx(1440.0)
    assert REF.gfm_export_at(55.0) == pytest.approx(1440.0)


def test_plan_validation_rejects_bad_inputs():
    with pytest.raises(PlanError, match="balance"):
        DispatchPlan(p_export_mw=1000.0, n_wf=1, p_gfm_nominal_mw=1200.0,
                     p_gfm_prefault_mw=100.0, wf_dispatch_mw=(1200.0,))
    with pytest.raises(PlanError, match="nominal"):
        DispatchPlan(p_export_mw=0.0, n_wf=1, p_gfm_nominal_mw=1000.0,
                     p_gfm_prefault_mw=1100.0, wf_dispatch_mw=(1100.0,))
    with pytest.raises(PlanError, match="wind farm"):
        DispatchPlan(p_export_mw=0.0, n_wf=0, p_gfm_nominal_mw=1000.0,
                     p_gfm_prefault_mw=0.0, wf_dispatch_mw=())
    with pytest.raises(PlanError, match="sum"):
        DispatchPlan(p_export_mw=1200.0, n_wf=2, p_gfm_nominal_mw=1200.0,
                     p_gfm_prefault_mw=1200.0, wf_dispatch_mw=(1200.0, 1200.0),
                     link_exports_mw=(500.0, 500.0))


def test_n1_report_for_reference_island():
    rep = check_n1_survivability(REF)
    assert rep.k_gfl_mw_per_hz == pytest.approx(320.0)
    assert rep.all_survivable
    assert [c.label for c in rep.cases] == ["all_links"]
    assert rep.cases[0].prediction.f_hz == pytest.approx(51.5, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(plans())
def test_sized_gain_balances_any_full_trip(plan):
    # the uniform-share sizing only guarantees balance when every farm can
    # absorb its share of the curtailment without clamping at zero
    share = max(0.0, plan.surplus_mw) / plan.n_wf
    assume(min(plan.wf_dispatch_mw) >= share)
    k = compute_gfl_droop_gain(plan)
    pred = predict_post_fault_equilibrium(plan, k, plan.p_export_mw)
    assert pred.feasible
    ident = sum(pred.wf_outputs_mw) - pred.gfm_export_mw
    assert abs(ident) < 1e-6
    if plan.surplus_mw > 1e-6:
        assert pred.gfm_export_mw == pytest.approx(plan.p_gfm_thermal_mw,
                                                   abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(plans(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_equilibrium_frequency_monotone_in_trip_size(plan, fa, fb):
    k = compute_gfl_droop_gain(plan)
    ta, tb = fa * plan.p_export_mw, fb * plan.p_export_mw
    if ta > tb:
        ta, tb = tb, ta
    pa = predict_post_fault_equilibrium(plan, k, ta)
    pb = predict_post_fault_equilibrium(plan, k, tb)
    assert pa.f_hz <= pb.f_hz + 1e-12


@settings(max_examples=100, deadline=None)
@given(plans(), st.floats(0.0, 1.0))
def test_prediction_outputs_follow_the_droop_law(plan, frac):
    k = compute_gfl_droop_gain(plan)
    pred = predict_post_fault_equilibrium(plan, k, frac * plan.p_export_mw)
    assume(pred.feasible)
    df = pred.f_hz - plan.f0_hz
    for w0_mw, w in zip(plan.wf_dispatch_mw, pred.wf_outputs_mw):
        assert w == pytest.approx(max(0.0, w0_mw - k * df), abs=1e-9)
        assert 0.0 <= w <= w0_mw + 1e-12
