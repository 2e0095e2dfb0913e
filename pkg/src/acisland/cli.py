"""Command-line driver.

Subcommands: ``run`` executes a scenario and writes the trace, the event
log and the normalized scenario next to each other; ``plan`` prints the
droop coordination and the link-outage survivability table without
simulating; ``verify`` runs and judges the endpoint against the plan;
``plot`` renders a written trace; ``dump-ybus`` prints the network
matrix.  Scenarios are YAML paths or the bare name of a shipped fixture.

Exit codes: 0 success, 1 verification failure, 2 usage, 3 unreadable or
invalid input, 4 numerical failure inside the simulation.
"""

from __future__ import annotations

import argparse
import os
import sys

from .coordination import check_n1_survivability, predict_post_fault_equilibrium
from .engine import SimulationError, Simulator
from .plotting import PlotError, plot_trace
from .report import emit_run_report, report_from_error, tripped_export_mw
from .scenario import Scenario, ScenarioError, load_fixture, load_scenario

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

OUT_DIR_ENV = "ACISLAND_OUT_DIR"


class InputError(Exception):
    """Scenario or trace file could not be located or parsed."""


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario from a path or from the shipped fixture set."""
    if os.path.exists(ref):
        try:
            return load_scenario(ref)
        except ScenarioError as exc:
            raise InputError(f"{ref}: {exc}") from exc
        except OSError as exc:
            raise InputError(str(exc)) from exc
    try:
        return load_fixture(ref)
    except ScenarioError as exc:
        raise InputError(f"no such scenario file or fixture: {ref} ({exc})") \
            from exc


def _out_dir(arg: str | None) -> str:
    out = arg or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _warn(scenario: Scenario) -> None:
    for w in scenario.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _simulate(scenario: Scenario, dt: float | None):
    sim = Simulator(scenario.build(), dt=dt or scenario.dt)
    trace = sim.run(scenario.duration, events=scenario.events)
    return trace


def _write_outputs(scenario: Scenario, trace, out: str, every: int) -> list[str]:
    base = os.path.join(out, scenario.name)
    paths = [f"{base}.trace.csv", f"{base}.events.csv", f"{base}.scenario.yaml"]
    trace.write_csv(paths[0], every=every)
    trace.write_events_csv(paths[1])
    with open(paths[2], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(scenario.dump())
    return paths


def _cmd_run(args) -> int:
    scenario = resolve_scenario(args.scenario)
    _warn(scenario)
    out = _out_dir(args.out_dir)
    every = args.decimate if args.decimate else scenario.decimation
    if args.dt:
        every = max(1, round(every * scenario.dt / args.dt))
    try:
        trace = _simulate(scenario, args.dt)
    except SimulationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.trace is not None:
            paths = _write_outputs(scenario, exc.trace, out, every)
            print(f"partial trace written to {paths[0]}", file=sys.stderr)
        return EXIT_NUMERICAL
    paths = _write_outputs(scenario, trace, out, every)
    meta = trace.meta
    print(f"{scenario.name}: {meta['n_steps']} steps of {meta['dt']:g} s "
          f"in {meta['wall_time_s']:.2f} s wall")
    print(f"max current {max(meta['max_i_pu'].values()):.4f} pu, "
          f"max residual {meta['max_residual_pu']:.3e} pu")
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_plan(args) -> int:
    scenario = resolve_scenario(args.scenario)
    _warn(scenario)
    plan = scenario.dispatch_plan()
    k = scenario.k_gfl_mw_per_hz
    print(f"plan {scenario.name}")
    print(f"  export {plan.p_export_mw:.1f} MW over {len(plan.link_exports_mw)}"
          f" link(s), {plan.n_wf} wind farm(s)")
    print(f"  GFM nominal {plan.p_gfm_nominal_mw:.1f} MW, thermal "
          f"{plan.p_gfm_thermal_mw:.1f} MW, droop {plan.gfm_droop_frac:.3f} "
          f"({plan.delta_f_max_hz:.2f} Hz at ceiling)")
    print(f"  curtailable surplus {plan.surplus_mw:.1f} MW")
    gain_src = "auto" if scenario.auto_gain else "scenario"
    print(f"  k_gfl {k:.4f} MW/Hz per wind farm ({gain_src}, "
          f"{scenario.gain_formula})")
    for c in scenario.gfls:
        if c.role == "wind_farm":
            print(f"    {c.name}: {k / c.rating_mva:.6f} pu/Hz on "
                  f"{c.rating_mva:.0f} MVA")
    report = check_n1_survivability(plan, k)
    print(f"  link outage contingencies ({'all survivable' if report.all_survivable else 'NOT all survivable'}):")
    for case in report.cases:
        p = case.prediction
        print(f"    {case.label}: lose {case.tripped_export_mw:7.1f} MW -> "
              f"f {p.f_hz:7.4f} Hz, GFM {p.gfm_export_mw:7.1f} MW, "
              f"{'ok' if p.feasible else 'infeasible'}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = resolve_scenario(args.scenario)
    _warn(scenario)
    try:
        trace = _simulate(scenario, None)
    except SimulationError as exc:
        lost = tripped_export_mw(scenario)
        prediction = None
        if lost > 0.0:
            prediction = predict_post_fault_equilibrium(
                scenario.dispatch_plan(), scenario.k_gfl_mw_per_hz, lost)
        report = report_from_error(scenario, exc, prediction)
        print(report.format())
        if prediction is not None and not prediction.feasible:
            return EXIT_VERIFY_FAIL
        return EXIT_NUMERICAL
    report = emit_run_report(scenario, trace,
                             f_tol_hz=args.f_tol, p_tol_rel=args.p_tol)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def _cmd_plot(args) -> int:
    out = args.out or (os.path.splitext(args.trace)[0] + ".svg")
    if not os.path.exists(args.trace):
        raise InputError(f"no such trace file: {args.trace}")
    try:
        drawn = plot_trace(args.trace, out, args.columns)
    except PlotError as exc:
        raise InputError(str(exc)) from exc
    print(f"{out}: {len(drawn)} column(s)")
    return EXIT_OK


def _cmd_dump_ybus(args) -> int:
    scenario = resolve_scenario(args.scenario)
    _warn(scenario)
    net = scenario.build().network
    y = net.admittance()
    names = net.bus_names
    print("bus," + ",".join(names))
    for i, row_name in enumerate(names):
        cells = (f"{y[i, j].real:.9g}{y[i, j].imag:+.9g}j"
                 for j in range(len(names)))
        print(f"{row_name}," + ",".join(cells))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acisland",
        description="Dynamic-phasor runs and dispatch checks for "
                    "converter-fed AC islands.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write outputs")
    p_run.add_argument("scenario", help="YAML path or shipped fixture name")
    p_run.add_argument("-o", "--out-dir", default=None,
                       help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    p_run.add_argument("--dt", type=float, default=None,
                       help="override integration step (s)")
    p_run.add_argument("--decimate", type=int, default=None,
                       help="write every Nth sample (default from scenario)")
    p_run.set_defaults(func=_cmd_run)

    p_plan = sub.add_parser("plan", help="print gains and outage table")
    p_plan.add_argument("scenario")
    p_plan.set_defaults(func=_cmd_plan)

    p_ver = sub.add_parser("verify",
                           help="run and judge the endpoint against the plan")
    p_ver.add_argument("scenario")
    p_ver.add_argument("--f-tol", type=float, default=0.05,
                       help="frequency tolerance (Hz)")
    p_ver.add_argument("--p-tol", type=float, default=0.01,
                       help="relative power tolerance")
    p_ver.set_defaults(func=_cmd_verify)

    p_plot = sub.add_parser("plot", help="render a trace CSV to a figure")
    p_plot.add_argument("trace")
    p_plot.add_argument("--columns", nargs="+", default=None,
                        help="trace columns (default: standard panels)")
    p_plot.add_argument("-o", "--out", default=None,
                        help="output figure path (default: trace name .svg)")
    p_plot.set_defaults(func=_cmd_plot)

    p_ybus = sub.add_parser("dump-ybus",
                            help="print the bus admittance matrix as CSV")
    p_ybus.add_argument("scenario")
    p_ybus.set_defaults(func=_cmd_dump_ybus)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
