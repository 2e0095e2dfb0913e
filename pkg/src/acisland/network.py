"""Positive-sequence phasor network model.

Buses, branches and shunts are assembled into a dense complex admittance
matrix; converter injections are solved against it each simulation step.
All quantities are in per unit on a single system MVA base, with one
voltage base per nominal level so physical values can be recovered.

Besides the base matrix, named *variants* can be declared that add device
admittances on top of it (for example the filter branch of a voltage
source modelled as a Norton equivalent).  Each variant caches its own
factorization, so the engine can alternate between the source picture and
the fixed-current picture of the same network without rebuild churn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT3 = math.sqrt(3.0)


class NetworkError(Exception):
    """Raised when the nodal problem is ill posed or a solve fails."""


class FaultStateError(NetworkError):
    """Raised on inconsistent fault bookkeeping (double apply, stray clear)."""


@dataclass
class BaseQuantities:
    """Per-unit bases: one MVA base system wide, one kV base per voltage level."""

    s_base_mva: float = 1200.0
    f_hz: float = 50.0
    v_base_kv: dict[str, float] = field(default_factory=dict)

    def power_to_pu(self, mw: float) -> float:
        return mw / self.s_base_mva

    def power_from_pu(self, pu: float) -> float:
        return pu * self.s_base_mva

    def voltage_to_pu(self, kv: float, level: str) -> float:
        return kv / self.v_base_kv[level]

    def voltage_from_pu(self, pu: float, level: str) -> float:
        return pu * self.v_base_kv[level]

    def current_base_ka(self, level: str) -> float:
        return self.s_base_mva / (SQRT3 * self.v_base_kv[level])

    def current_to_pu(self, ka: float, level: str) -> float:
        return ka / self.current_base_ka(level)

    def current_from_pu(self, pu: float, level: str) -> float:
        return pu * self.current_base_ka(level)

    def impedance_base_ohm(self, level: str) -> float:
        return self.v_base_kv[level] ** 2 / self.s_base_mva

    def impedance_to_pu(self, ohm: complex, level: str) -> complex:
        return ohm / self.impedance_base_ohm(level)

    def impedance_from_pu(self, pu: complex, level: str) -> complex:
        return pu * self.impedance_base_ohm(level)


@dataclass
class Bus:
    """Network node. ``shunt`` is a fixed admittance to ground in pu."""

    name: str
    level: str = "hv"
    shunt: complex = 0j
    fault_shunt: complex | None = None


@dataclass
class Branch:
    """Series element (cable or transformer) with a pi shunt and off-nominal tap."""

    from_bus: str
    to_bus: str
    z: complex
    b_shunt: float = 0.0
    tap: float = 1.0
    in_service: bool = True

    def stamp(self) -> tuple[complex, complex, complex, complex]:
        """2x2 admittance block (y_ff, y_ft, y_tf, y_tt) for this branch."""
        y = 1.0 / self.z
        t = self.tap
        y_ff = (y + 0.5j * self.b_shunt) / (t * t)
        y_tt = y + 0.5j * self.b_shunt
        y_ft = -y / t
        return y_ff, y_ft, y_ft, y_tt


class _Solver:
    """Cached reduction and inverse for one matrix variant."""

    def __init__(self, y: np.ndarray, bus_names: list[str], branches: list[Branch],
                 index: dict[str, int]):
        self.y = y
        self.active = ~np.all(np.abs(y) < 1e-14, axis=1)
        self.yr = y[np.ix_(self.active, self.active)]
        if self.yr.size:
            cond = np.linalg.cond(self.yr)
            if not np.isfinite(cond) or cond > 1e12:
                floating = _floating_component(y, bus_names, branches, index, self.active)
                raise NetworkError(
                    "admittance matrix is numerically singular; "
                    f"no grounding path for buses {floating} (cond={cond:.3g})"
                )
            self.yinv = np.linalg.inv(self.yr)
        else:
            self.yinv = np.zeros((0, 0), dtype=complex)


def _floating_component(y: np.ndarray, bus_names: list[str], branches: list[Branch],
                        index: dict[str, int], active: np.ndarray) -> list[str]:
    """Names of a connected component with no shunt path to ground."""
    n = len(bus_names)
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for br in branches:
        if br.in_service:
            a, b = index[br.from_bus], index[br.to_bus]
            adj[a].add(b)
            adj[b].add(a)
    colsum = np.abs(y.sum(axis=0))
    seen: set[int] = set()
    for start in range(n):
        if start in seen or not active[start]:
            continue
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in comp:
                    comp.add(v)
                    stack.append(v)
        seen |= comp
        if all(colsum[i] < 1e-9 for i in comp):
            return sorted(bus_names[i] for i in comp)
    return sorted(bus_names[i] for i in range(n) if active[i])


class Network:
    """Bus/branch container with cached admittance matrices.

    Structural edits (branch status changes) mark the cache dirty and force
    a rebuild; fault application and removal are O(1) edits of one diagonal
    entry, with the original entry stored so a clear restores the pre-fault
    matrix bit for bit.
    """

    def __init__(self, base: BaseQuantities, buses: list[Bus], branches: list[Branch]):
        self.base = base
        # own copies: the network mutates status and fault bookkeeping, and
        # the caller's objects must stay reusable for fresh builds
        self.buses = [replace(b) for b in buses]
        self.branches = [replace(br) for br in branches]
        self.index = {b.name: i for i, b in enumerate(self.buses)}
        if len(self.index) != len(self.buses):
            raise NetworkError("duplicate bus names")
        for br in self.branches:
            if br.from_bus not in self.index or br.to_bus not in self.index:
                raise NetworkError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
        self._variants: dict[str, dict[str, complex]] = {"base": {}}
        self._y: np.ndarray | None = None
        self._solvers: dict[str, tuple[int, _Solver]] = {}
        self._saved_diag: dict[str, complex] = {}
        self.serial = 0
        self.dirty = True

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def bus_names(self) -> list[str]:
        return [b.name for b in self.buses]

    def bus(self, name: str) -> Bus:
        return self.buses[self.index[name]]

    def mark_dirty(self) -> None:
        self.dirty = True

    def define_variant(self, name: str, shunts: dict[str, complex]) -> None:
        """Declare a named admittance variant: base matrix plus bus shunts."""
        for b in shunts:
            if b not in self.index:
                raise NetworkError(f"unknown bus {b}")
        self._variants[name] = dict(shunts)
        self._solvers.pop(name, None)

    def set_branch_status(self, from_bus: str, to_bus: str, in_service: bool) -> None:
        for br in self.branches:
            if {br.from_bus, br.to_bus} == {from_bus, to_bus}:
                br.in_service = in_service
                self.mark_dirty()
                return
        raise NetworkError(f"no branch {from_bus}-{to_bus}")

    def disable_branches_at(self, bus: str) -> int:
        """Take every branch touching ``bus`` out of service; returns the count."""
        count = 0
        for br in self.branches:
            if br.in_service and bus in (br.from_bus, br.to_bus):
                br.in_service = False
                count += 1
        if count:
            self.mark_dirty()
        return count

    def admittance(self) -> np.ndarray:
        """Base admittance matrix (faults included, variants excluded)."""
        if self.dirty or self._y is None:
            self._y = build_admittance(self)
            self._saved_diag.clear()
            self.serial += 1
            self.dirty = False
        return self._y

    def variant_admittance(self, variant: str = "base") -> np.ndarray:
        y = self.admittance().copy()
        for b, ysh in self._variants[variant].items():
            i = self.index[b]
            y[i, i] += ysh
        return y

    # -- faults ------------------------------------------------------------

    def apply_fault(self, bus: str, y_fault: complex = 1.0e4 + 0j) -> None:
        """Connect a fault admittance at a bus (large and finite for a bolted fault)."""
        b = self.bus(bus)
        if b.fault_shunt is not None:
            raise FaultStateError(f"fault already applied at {bus}")
        y = self.admittance()
        i = self.index[bus]
        self._saved_diag[bus] = y[i, i]
        y[i, i] += y_fault
        b.fault_shunt = y_fault
        self.serial += 1

    def clear_fault(self, bus: str) -> None:
        """Remove the fault at a bus, restoring the stored diagonal entry exactly."""
        b = self.bus(bus)
        if b.fault_shunt is None:
            raise FaultStateError(f"no fault applied at {bus}")
        if bus in self._saved_diag and self._y is not None:
            self._y[self.index[bus], self.index[bus]] = self._saved_diag.pop(bus)
            self.serial += 1
        else:
            self.mark_dirty()
        b.fault_shunt = None

    # -- solve -------------------------------------------------------------

    def _solver(self, variant: str) -> _Solver:
        self.admittance()
        cached = self._solvers.get(variant)
        if cached is not None and cached[0] == self.serial:
            return cached[1]
        y = self.variant_admittance(variant)
        solver = _Solver(y, self.bus_names, self.branches, self.index)
        self._solvers[variant] = (self.serial, solver)
        return solver

    def solve(self, injections: np.ndarray, variant: str = "base") -> np.ndarray:
        """Bus voltages for the given complex current injections.

        Buses with no connection at all (for example behind an opened
        breaker) are reported at 0 V; a nonzero injection there is an error.
        """
        s = self._solver(variant)
        dead = ~s.active
        if np.any(dead) and np.any(np.abs(injections[dead]) > 1e-12):
            names = [self.buses[i].name for i in np.where(dead)[0]
                     if abs(injections[i]) > 1e-12]
            raise NetworkError(f"current injected into isolated bus(es) {names}")
        v = np.zeros(self.n, dtype=complex)
        i_red = injections[s.active]
        if not i_red.size:
            return v
        v_red = s.yinv @ i_red
        residual = np.max(np.abs(s.yr @ v_red - i_red))
        if residual > 1e-10:
            v_red = np.linalg.solve(s.yr, i_red)
            residual = np.max(np.abs(s.yr @ v_red - i_red))
            if residual > 1e-10:
                raise NetworkError(f"nodal solve residual {residual:.3e} exceeds 1e-10 pu")
        v[s.active] = v_red
        return v

    def absorbed_power(self, v: np.ndarray, variant: str = "base") -> float:
        """Real power absorbed by all passive elements at voltages ``v``, in pu.

        Recomputed element by element from the same stamp formulas used in
        assembly, so it balances the injected power to rounding error.
        """
        p = 0.0
        for br in self.branches:
            if not br.in_service:
                continue
            f, t = self.index[br.from_bus], self.index[br.to_bus]
            y_ff, y_ft, y_tf, y_tt = br.stamp()
            i_f = y_ff * v[f] + y_ft * v[t]
            i_t = y_tf * v[f] + y_tt * v[t]
            p += (v[f] * np.conj(i_f)).real + (v[t] * np.conj(i_t)).real
        shunts = self._variants[variant]
        for i, b in enumerate(self.buses):
            y = b.shunt + (b.fault_shunt or 0j) + shunts.get(b.name, 0j)
            if y.real:
                p += (abs(v[i]) ** 2) * y.real
        return p


def build_admittance(net: Network) -> np.ndarray:
    """Assemble the dense base admittance matrix from scratch."""
    n = net.n
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not br.in_service:
            continue
        f, t = net.index[br.from_bus], net.index[br.to_bus]
        y_ff, y_ft, y_tf, y_tt = br.stamp()
        y[f, f] += y_ff
        y[f, t] += y_ft
        y[t, f] += y_tf
        y[t, t] += y_tt
    for i, b in enumerate(net.buses):
        y[i, i] += b.shunt
        if b.fault_shunt is not None:
            y[i, i] += b.fault_shunt
    return y
