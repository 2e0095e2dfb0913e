"""Scenario files: parsing, validation, normalization and system building.

A scenario is one YAML document (``schema_version: 1``) that fully
describes a run: base quantities, network, converters, dispatch, droop
coordination, events and integration settings.  Parsing validates every
cross-reference and structural invariant, fills defaults, and keeps a
normalized form that dumps canonically, so fixtures diff cleanly and a
parse -> dump -> parse round trip is the identity.

Power enters the file in MW on the system base (generation positive);
the builder converts to per unit and, when ``auto_gain`` is set, sizes
the wind-farm droop gain from the dispatch plan at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources

import yaml

from .converters import GflConverter, GfmConverter, TWO_PI
from .coordination import DispatchPlan, PlanError, compute_gfl_droop_gain
from .engine import Event, SimSystem
from .network import BaseQuantities, Branch, Bus, Network

SCHEMA_VERSION = 1
EVENT_KINDS = ("apply_ac_fault", "clear_ac_fault", "dc_fault", "trip_link",
               "set_dispatch")
GFL_ROLES = ("wind_farm", "hvdc_link")

# scenario keys that map straight onto converter dataclass fields
_GFL_PARAMS = {f.name for f in fields(GflConverter) if f.init} - {
    "name", "bus", "omega0", "rating", "p_ref", "q_ref"}
_GFM_PARAMS = {f.name for f in fields(GfmConverter) if f.init} - {
    "name", "bus", "omega0", "rating", "droop_frac"}
_COMPLEX_PARAMS = {f.name for cls in (GflConverter, GfmConverter)
                   for f in fields(cls) if f.type == "complex"}


class ScenarioError(ValueError):
    """Malformed scenario: syntax (with location) or a violated invariant."""


def _parse_complex(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise ScenarioError(f"{where}: {value!r} is not a number or complex literal")


def _fmt_complex(z: complex) -> str | float:
    if z.imag == 0.0:
        return z.real
    return f"{z.real:g}{z.imag:+g}j"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return mapping[key]


def _as_mapping(node, where: str) -> dict:
    if not isinstance(node, dict):
        raise ScenarioError(f"{where}: expected a mapping, got {type(node).__name__}")
    return node


def _as_list(node, where: str) -> list:
    if not isinstance(node, list):
        raise ScenarioError(f"{where}: expected a list, got {type(node).__name__}")
    return node


@dataclass
class ConverterSpec:
    """One converter block after validation, still in file units."""

    name: str
    bus: str
    role: str                      # "gfm" | "wind_farm" | "hvdc_link"
    rating_mva: float
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    """A fully validated scenario, normalized and ready to build."""

    name: str
    description: str
    base: BaseQuantities
    buses: list[Bus]
    branches: list[Branch]
    gfm: ConverterSpec
    gfls: list[ConverterSpec]
    dispatch_mw: dict[str, tuple[float, float]]   # name -> (P MW, Q MVAr)
    events: list[Event]
    dt: float
    duration: float
    decimation: int
    k_gfm: float
    auto_gain: bool
    k_gfl_mw_per_hz: float
    gain_formula: str
    warnings: list[str] = field(default_factory=list)

    def converter_spec(self, name: str) -> ConverterSpec:
        for c in [self.gfm, *self.gfls]:
            if c.name == name:
                return c
        raise KeyError(f"no converter {name}")

    def dispatch_plan(self) -> DispatchPlan:
        """Planning-layer view of the dispatch (lossless, MW)."""
        wf = [c for c in self.gfls if c.role == "wind_farm"]
        links = [c for c in self.gfls if c.role == "hvdc_link"]
        link_exports = tuple(-self.dispatch_mw[c.name][0] for c in links)
        return DispatchPlan(
            p_export_mw=sum(link_exports),
            n_wf=len(wf),
            p_gfm_nominal_mw=self.gfm.rating_mva,
            p_gfm_prefault_mw=-self.dispatch_mw[self.gfm.name][0],
            wf_dispatch_mw=tuple(self.dispatch_mw[c.name][0] for c in wf),
            gfm_droop_frac=self.k_gfm,
            link_exports_mw=link_exports,
            f0_hz=self.base.f_hz)

    def build(self) -> SimSystem:
        """Instantiate the network and converters in system per unit."""
        net = Network(self.base, self.buses, self.branches)
        s_base = self.base.s_base_mva
        w0 = TWO_PI * self.base.f_hz
        g = self.gfm
        gfm = GfmConverter(name=g.name, bus=g.bus, omega0=w0,
                           rating=g.rating_mva / s_base,
                           droop_frac=self.k_gfm, **g.params)
        gfls = []
        for c in self.gfls:
            p_mw, q_mvar = self.dispatch_mw[c.name]
            params = dict(c.params)
            if c.role == "wind_farm" and "droop_pu_per_hz" not in params:
                params["droop_pu_per_hz"] = self.k_gfl_mw_per_hz / c.rating_mva
            gfls.append(GflConverter(
                name=c.name, bus=c.bus, omega0=w0,
                rating=c.rating_mva / s_base,
                p_ref=p_mw / s_base, q_ref=q_mvar / s_base, **params))
        return SimSystem(network=net, gfm=gfm, gfls=gfls, name=self.name)

    def normalized(self) -> dict:
        """Canonical plain-data form; the one the dump writes."""
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": {"name": self.name, "description": self.description},
            "base": {
                "s_mva": self.base.s_base_mva,
                "f_hz": self.base.f_hz,
                "v_kv": dict(sorted(self.base.v_base_kv.items())),
            },
            "sim": {"dt": self.dt, "duration": self.duration,
                    "decimation": self.decimation},
            "network": {
                "buses": [{"name": b.name, "level": b.level,
                           "b_shunt": b.shunt.imag} for b in self.buses],
                "branches": [{"from": br.from_bus, "to": br.to_bus,
                              "r": br.z.real, "x": br.z.imag,
                              "b": br.b_shunt, "tap": br.tap}
                             for br in self.branches],
            },
            "converters": {
                "gfm": self._conv_dict(self.gfm),
                "gfl": [self._conv_dict(c) for c in self.gfls],
            },
            "dispatch": {n: {"p_mw": p, "q_mvar": q}
                         for n, (p, q) in sorted(self.dispatch_mw.items())},
            "coordination": {
                "k_gfm": self.k_gfm,
                "auto_gain": self.auto_gain,
                "k_gfl_mw_per_hz": self.k_gfl_mw_per_hz,
                "gain_formula": self.gain_formula,
            },
            "events": [self._event_dict(e) for e in self.events],
        }

    @staticmethod
    def _conv_dict(c: ConverterSpec) -> dict:
        out = {"name": c.name, "bus": c.bus}
        if c.role != "gfm":
            out["role"] = c.role
        out["rating_mva"] = c.rating_mva
        if c.params:
            out["params"] = {
                k: _fmt_complex(v) if isinstance(v, complex) else v
                for k, v in sorted(c.params.items())}
        return out

    def _event_dict(self, e: Event) -> dict:
        out = {"t": e.t, "kind": e.kind, "target": e.target}
        if e.kind == "apply_ac_fault":
            out["y_fault"] = _fmt_complex(e.y_fault)
        elif e.kind == "dc_fault":
            out["ac_dip_shunt"] = _fmt_complex(e.y_fault)
            out["trip_delay"] = e.trip_delay
        elif e.kind == "set_dispatch":
            s = self.base.s_base_mva
            out["p_mw"] = e.p_ref * s
            out["q_mvar"] = e.q_ref * s
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.normalized(), sort_keys=False,
                              default_flow_style=False)


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate one scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"syntax error{loc}: {exc.problem or exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"syntax error: {exc}") from exc
    doc = _as_mapping(doc, "document")

    version = _require(doc, "schema_version", "document")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}; "
                            f"this build reads version {SCHEMA_VERSION}")

    meta = _as_mapping(doc.get("metadata", {}), "metadata")
    name = str(meta.get("name", "unnamed"))
    description = str(meta.get("description", ""))
    warnings: list[str] = []

    b = _as_mapping(_require(doc, "base", "document"), "base")
    v_kv = {str(k): float(v)
            for k, v in _as_mapping(_require(b, "v_kv", "base"), "base.v_kv").items()}
    base = BaseQuantities(s_base_mva=float(_require(b, "s_mva", "base")),
                          f_hz=float(b.get("f_hz", 50.0)), v_base_kv=v_kv)

    sim = _as_mapping(doc.get("sim", {}), "sim")
    dt = float(sim.get("dt", 2.0e-4))
    if not 0.0 < dt <= 1.0e-3:
        raise ScenarioError(f"sim.dt {dt} outside (0, 1e-3] s")
    duration = float(_require(sim, "duration", "sim"))
    if duration <= 0.0:
        raise ScenarioError("sim.duration must be positive")
    decimation = int(sim.get("decimation", max(1, round(1.0e-3 / dt))))
    if decimation < 1:
        raise ScenarioError("sim.decimation must be >= 1")

    netsec = _as_mapping(_require(doc, "network", "document"), "network")
    buses, bus_names = [], set()
    for i, nb in enumerate(_as_list(_require(netsec, "buses", "network"), "buses")):
        nb = _as_mapping(nb, f"buses[{i}]")
        bname = str(_require(nb, "name", f"buses[{i}]"))
        level = str(_require(nb, "level", f"buses[{i}]"))
        if bname in bus_names:
            raise ScenarioError(f"duplicate bus name {bname!r}")
        if level not in v_kv:
            raise ScenarioError(f"bus {bname!r} references undeclared voltage "
                                f"level {level!r}")
        bus_names.add(bname)
        buses.append(Bus(bname, level=level,
                         shunt=complex(0.0, float(nb.get("b_shunt", 0.0)))))
    branches = []
    for i, nb in enumerate(_as_list(_require(netsec, "branches", "network"),
                                    "branches")):
        nb = _as_mapping(nb, f"branches[{i}]")
        f_bus = str(_require(nb, "from", f"branches[{i}]"))
        t_bus = str(_require(nb, "to", f"branches[{i}]"))
        for end in (f_bus, t_bus):
            if end not in bus_names:
                raise ScenarioError(f"branch {f_bus}-{t_bus} references unknown "
                                    f"bus {end!r}")
        z = complex(float(_require(nb, "r", f"branches[{i}]")),
                    float(_require(nb, "x", f"branches[{i}]")))
        if z == 0:
            raise ScenarioError(f"branch {f_bus}-{t_bus} has zero impedance")
        branches.append(Branch(f_bus, t_bus, z=z,
                               b_shunt=float(nb.get("b", 0.0)),
                               tap=float(nb.get("tap", 1.0))))

    conv = _as_mapping(_require(doc, "converters", "document"), "converters")
    if "gfm" not in conv or conv["gfm"] is None:
        raise ScenarioError("exactly one GFM required (found 0)")
    if isinstance(conv["gfm"], list):
        raise ScenarioError(f"exactly one GFM required "
                            f"(found {len(conv['gfm'])})")
    gfm = _parse_converter(_as_mapping(conv["gfm"], "converters.gfm"),
                           "converters.gfm", bus_names, gfm=True)
    gfls = []
    seen = {gfm.name}
    for i, node in enumerate(_as_list(conv.get("gfl", []), "converters.gfl")):
        spec = _parse_converter(_as_mapping(node, f"gfl[{i}]"), f"gfl[{i}]",
                                bus_names, gfm=False)
        if spec.name in seen:
            raise ScenarioError(f"duplicate converter name {spec.name!r}")
        seen.add(spec.name)
        gfls.append(spec)

    dispatch = {}
    for uname, node in _as_mapping(doc.get("dispatch", {}), "dispatch").items():
        if uname not in seen:
            raise ScenarioError(f"dispatch references unknown converter {uname!r}")
        node = _as_mapping(node, f"dispatch.{uname}")
        dispatch[str(uname)] = (float(node.get("p_mw", 0.0)),
                                float(node.get("q_mvar", 0.0)))
    for uname in seen:
        dispatch.setdefault(uname, (0.0, 0.0))

    coord = _as_mapping(doc.get("coordination", {}), "coordination")
    k_gfm = float(coord.get("k_gfm", 0.03))
    auto_gain = bool(coord.get("auto_gain", False))
    gain_formula = str(coord.get("gain_formula", "deadband"))
    k_gfl = coord.get("k_gfl_mw_per_hz")

    events = _parse_events(doc.get("events", []), base, bus_names,
                           {c.name: c for c in gfls}, warnings)

    sc = Scenario(name=name, description=description, base=base, buses=buses,
                  branches=branches, gfm=gfm, gfls=gfls, dispatch_mw=dispatch,
                  events=events, dt=dt, duration=duration,
                  decimation=decimation, k_gfm=k_gfm, auto_gain=auto_gain,
                  k_gfl_mw_per_hz=0.0 if k_gfl is None else float(k_gfl),
                  gain_formula=gain_formula, warnings=warnings)

    # dispatch must balance within what the GFM can schedule; the plan
    # constructor owns that arithmetic and its error text names the cause
    try:
        plan = sc.dispatch_plan()
        if auto_gain:
            sc.k_gfl_mw_per_hz = compute_gfl_droop_gain(plan, gain_formula)
    except PlanError as exc:
        raise ScenarioError(f"dispatch invalid: {exc}") from exc
    return sc


def _parse_converter(node: dict, where: str, bus_names: set[str],
                     gfm: bool) -> ConverterSpec:
    name = str(_require(node, "name", where))
    bus = str(_require(node, "bus", where))
    if bus not in bus_names:
        raise ScenarioError(f"{where}: converter {name!r} references unknown "
                            f"bus {bus!r}")
    rating = float(_require(node, "rating_mva", where))
    if rating <= 0:
        raise ScenarioError(f"{where}: rating_mva must be positive")
    if gfm:
        role = "gfm"
        if "role" in node:
            raise ScenarioError(f"{where}: the GFM block takes no role field")
    else:
        role = str(_require(node, "role", where))
        if role not in GFL_ROLES:
            raise ScenarioError(f"{where}: unknown role {role!r} "
                                f"(expected one of {GFL_ROLES})")
    params = dict(_as_mapping(node.get("params", {}), f"{where}.params"))
    allowed = _GFM_PARAMS if gfm else _GFL_PARAMS
    for key in params:
        if key not in allowed:
            raise ScenarioError(f"{where}: unknown parameter {key!r}")
        if key in _COMPLEX_PARAMS:
            params[key] = _parse_complex(params[key], f"{where}.params.{key}")
        else:
            params[key] = float(params[key])
    return ConverterSpec(name=name, bus=bus, role=role, rating_mva=rating,
                         params=params)


def _parse_events(nodes, base: BaseQuantities, bus_names: set[str],
                  gfl_by_name: dict, warnings: list[str]) -> list[Event]:
    events = []
    for i, node in enumerate(_as_list(nodes, "events")):
        node = _as_mapping(node, f"events[{i}]")
        t = float(_require(node, "t", f"events[{i}]"))
        if t < 0:
            raise ScenarioError(f"events[{i}]: negative time {t}")
        kind = str(_require(node, "kind", f"events[{i}]"))
        if kind not in EVENT_KINDS:
            raise ScenarioError(f"events[{i}]: unknown kind {kind!r} "
                                f"(expected one of {EVENT_KINDS})")
        target = str(_require(node, "target", f"events[{i}]"))
        ev = Event(t=t, kind=kind, target=target)
        if kind in ("apply_ac_fault", "clear_ac_fault"):
            if target not in bus_names:
                raise ScenarioError(f"events[{i}]: unknown bus {target!r}")
            if kind == "apply_ac_fault":
                ev.y_fault = _parse_complex(_require(node, "y_fault",
                                                     f"events[{i}]"),
                                            f"events[{i}].y_fault")
        elif kind in ("dc_fault", "trip_link"):
            if target not in gfl_by_name:
                raise ScenarioError(f"events[{i}]: unknown link {target!r}")
            if gfl_by_name[target].role != "hvdc_link":
                raise ScenarioError(f"events[{i}]: {target!r} is not an "
                                    f"hvdc_link")
            if kind == "dc_fault":
                ev.y_fault = _parse_complex(_require(node, "ac_dip_shunt",
                                                     f"events[{i}]"),
                                            f"events[{i}].ac_dip_shunt")
                ev.trip_delay = float(node.get("trip_delay", 0.25))
        elif kind == "set_dispatch":
            if target not in gfl_by_name:
                raise ScenarioError(f"events[{i}]: unknown converter {target!r}")
            ev.p_ref = float(node.get("p_mw", 0.0)) / base.s_base_mva
            ev.q_ref = float(node.get("q_mvar", 0.0)) / base.s_base_mva
        events.append(ev)
    if any(events[i].t > events[i + 1].t for i in range(len(events) - 1)):
        warnings.append("events not sorted by time; normalized to sorted order")
        events.sort(key=lambda e: e.t)
    return events


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def fixture_names() -> list[str]:
    """Names of the scenario fixtures shipped inside the package."""
    root = resources.files(__package__).joinpath("fixtures")
    return sorted(p.name[:-5] for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def load_fixture(name: str) -> Scenario:
    """Load a shipped fixture by bare name (``.yaml`` optional)."""
    if name.endswith(".yaml"):
        name = name[:-5]
    path = resources.files(__package__).joinpath("fixtures", f"{name}.yaml")
    if not path.is_file():
        raise ScenarioError(f"no shipped fixture named {name!r} "
                            f"(have: {', '.join(fixture_names())})")
    return parse_scenario(path.read_text(encoding="utf-8"))
