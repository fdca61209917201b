"""Netlists and a modified-nodal-analysis transient solver.

Each time step freezes every memristor at its current state, solves the
resulting linear network, then advances the memristor states with their
terminal voltages. Inductors are integrated with backward Euler. Resistors
and inductors carry their current as an explicit MNA unknown, so KCL can be
checked on the solution without differencing nearly equal node voltages
across a 1-ohm line.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _mna
from .device import DeviceParams, MemristorState, resistance
from .errors import ParameterError, SolverError, TopologyError

GROUND = 0
ELEMENT_KINDS = ("resistor", "inductor", "voltage_source", "memristor")
DRIVES = ("bell", "food", "probe_a", "probe_b")

DEFAULT_LINE_R = 1.0
DEFAULT_LINE_L = 1e-6
DEFAULT_PROBE_DURATION = 1e-3


class Memristor:
    """A memristive element: fixed parameters plus a mutable state.

    The transient solver advances ``w`` in place, which is how state carries
    from one sweep to the next.
    """

    def __init__(self, params: DeviceParams, w: float | None = None):
        self.params = params
        self.w = params.w_init if w is None else float(w)
        MemristorState(self.w)

    @property
    def state(self) -> MemristorState:
        return MemristorState(self.w)

    @property
    def resistance(self) -> float:
        return resistance(self.params, self.w)

    def copy(self) -> "Memristor":
        return Memristor(self.params, self.w)

    def __repr__(self):
        return f"Memristor(w={self.w:.6g}, R={self.resistance:.6g})"


@dataclass(frozen=True)
class Element:
    """One two-terminal element.

    ``value`` is ohms for a resistor, henries for an inductor, a
    :class:`Memristor` for a memristor, and for a voltage source either a DC
    level in volts or ``None`` to follow the transient drive waveform.
    Current and voltage are measured from ``nodes[0]`` to ``nodes[1]``.
    """

    name: str
    kind: str
    nodes: tuple[int, int]
    value: object = None

    def __post_init__(self):
        if self.kind not in ELEMENT_KINDS:
            raise TopologyError(f"{self.name}: unknown element kind {self.kind!r}")
        if len(self.nodes) != 2 or self.nodes[0] == self.nodes[1]:
            raise TopologyError(f"{self.name}: needs two distinct nodes, got {self.nodes}")
        if self.kind in ("resistor", "inductor"):
            if not isinstance(self.value, (int, float)) or not self.value > 0:
                raise ParameterError(f"{self.name}: {self.kind} value must be > 0")
        elif self.kind == "memristor" and not isinstance(self.value, Memristor):
            raise ParameterError(f"{self.name}: memristor needs a Memristor value")


@dataclass
class Netlist:
    name: str
    elements: list[Element]
    nodes: frozenset[int] = None

    def __post_init__(self):
        if self.nodes is None:
            self.nodes = frozenset(n for e in self.elements for n in e.nodes)
        else:
            self.nodes = frozenset(self.nodes)
        self.validate()

    def validate(self) -> None:
        if GROUND not in self.nodes:
            raise TopologyError(f"{self.name}: no ground node ({GROUND})")
        names = [e.name for e in self.elements]
        if len(set(names)) != len(names):
            raise TopologyError(f"{self.name}: duplicate element names")
        adj: dict[int, set[int]] = {n: set() for n in self.nodes}
        for e in self.elements:
            for n in e.nodes:
                if n not in self.nodes:
                    raise TopologyError(f"{self.name}: {e.name} references undeclared node {n}")
            a, b = e.nodes
            adj[a].add(b)
            adj[b].add(a)
        # every element kind here conducts at DC, so connectivity to ground
        # is the same as having a DC path to ground
        seen = {GROUND}
        todo = deque([GROUND])
        while todo:
            for m in adj[todo.popleft()]:
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        floating = sorted(self.nodes - seen)
        if floating:
            raise TopologyError(f"{self.name}: node {floating[0]} has no path to ground")

    @property
    def non_ground_nodes(self) -> list[int]:
        return sorted(n for n in self.nodes if n != GROUND)

    def element(self, name: str) -> Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def memristors(self) -> list[Element]:
        return [e for e in self.elements if e.kind == "memristor"]


@dataclass(frozen=True)
class Waveform:
    kind: str
    breakpoints: tuple[tuple[float, float], ...] = ()
    amplitude: float = 0.0
    frequency: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("staircase", "sine", "constant"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.kind == "staircase":
            if not self.breakpoints:
                raise ValueError("staircase needs at least one breakpoint")
            times = [t for t, _ in self.breakpoints]
            if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
                raise ValueError("staircase breakpoints must be strictly increasing in t")

    @classmethod
    def staircase(cls, levels: Sequence[float], dwell: float) -> "Waveform":
        return cls("staircase", tuple((i * dwell, float(v)) for i, v in enumerate(levels)))

    @classmethod
    def sine(cls, amplitude: float, frequency: float) -> "Waveform":
        return cls("sine", amplitude=float(amplitude), frequency=float(frequency))

    @classmethod
    def constant(cls, value: float) -> "Waveform":
        return cls("constant", value=float(value))

    def sample(self, t) -> np.ndarray:
        """Value at times ``t``.

        A staircase level ``i`` is held on the half-open interval
        ``(t_i, t_{i+1}]`` so that backward-Euler steps ending exactly on a
        breakpoint still see the level that was active during the step.
        """
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.value)
        if self.kind == "sine":
            return self.amplitude * np.sin(2 * np.pi * self.frequency * t)
        times = np.array([bp[0] for bp in self.breakpoints])
        levels = np.array([bp[1] for bp in self.breakpoints])
        # absorb rounding in t = k*dt against breakpoint times
        t_adj = t - 1e-12 * np.maximum(np.abs(t), 1.0)
        idx = np.searchsorted(times, t_adj, side="left") - 1
        return levels[np.clip(idx, 0, len(levels) - 1)]


@dataclass(frozen=True)
class TransientConfig:
    dt: float
    t_end: float
    solver_tol: float = 1e-9
    max_newton_iters: int = 1  # reserved; every step is a single linear solve

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= self.dt * (1 - 1e-9):
            raise ValueError(f"t_end must be >= dt, got t_end={self.t_end}, dt={self.dt}")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be > 0")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Trace:
    """Solver output on the uniform grid ``t_k = k * dt``, k = 1..n.

    ``w`` and ``resistance`` hold, for each step, the frozen memristor value
    the linear solve used; the state reached after the last step is in the
    netlist's :class:`Memristor` objects. Source currents are reported as the
    current delivered out of the source's positive terminal.
    """

    time: np.ndarray
    drive: np.ndarray
    node_voltages: dict[int, np.ndarray]
    branch_currents: dict[str, np.ndarray]
    w: dict[str, np.ndarray]
    resistance: dict[str, np.ndarray]
    kcl_residual: np.ndarray
    max_branch_current: np.ndarray

    def __len__(self):
        return len(self.time)


def transient(netlist: Netlist, drive: Waveform, cfg: TransientConfig) -> Trace:
    """Run a transient analysis, advancing the netlist's memristors in place."""
    netlist.validate()
    nodes = netlist.non_ground_nodes
    idx = {n: i for i, n in enumerate(nodes)}
    idx[GROUND] = -1
    n_nodes = len(nodes)

    mem = [e for e in netlist.elements if e.kind == "memristor"]
    br = [e for e in netlist.elements if e.kind != "memristor"]
    size = n_nodes + len(br)
    a = np.zeros((size, size))
    kinds = np.zeros(len(br), dtype=np.int64)
    for j, e in enumerate(br):
        row = n_nodes + j
        p, q = idx[e.nodes[0]], idx[e.nodes[1]]
        if p >= 0:
            a[p, row] += 1.0
            a[row, p] += 1.0
        if q >= 0:
            a[q, row] -= 1.0
            a[row, q] -= 1.0
        if e.kind == "inductor":
            kinds[j] = _mna.INDUCTOR
            a[row, row] = -e.value / cfg.dt
        elif e.kind == "resistor":
            kinds[j] = _mna.RESISTOR
            a[row, row] = -e.value
        else:
            kinds[j] = _mna.SOURCE

    n_steps = cfg.n_steps
    time = np.arange(1, n_steps + 1) * cfg.dt
    drive_v = drive.sample(time)
    rhs = np.zeros((n_steps, len(br)))
    for j, e in enumerate(br):
        if e.kind == "voltage_source":
            rhs[:, j] = drive_v if e.value is None else float(e.value)

    mem_par = np.array([[m.value.params.r_on, m.value.params.r_off, m.value.params.v_th_pot,
                         m.value.params.v_th_dep, m.value.params.k_pot, m.value.params.k_dep,
                         m.value.params.alpha, m.value.params.tau_decay] for m in mem],
                       dtype=float).reshape(len(mem), 8)

    def as_int(vals):
        return np.array(vals, dtype=np.int64)

    xs, ws, rs, resid, imax, w_final, done, status, bad = _mna.run(
        a, n_nodes,
        as_int([idx[e.nodes[0]] for e in mem]), as_int([idx[e.nodes[1]] for e in mem]),
        mem_par, np.array([m.value.w for m in mem], dtype=float),
        as_int([idx[e.nodes[0]] for e in br]), as_int([idx[e.nodes[1]] for e in br]),
        as_int([n_nodes + j for j in range(len(br))]), kinds, rhs,
        float(cfg.dt), float(cfg.solver_tol))

    if status == _mna.SINGULAR:
        label = f"node {nodes[bad]}" if bad < n_nodes else f"branch {br[bad - n_nodes].name}"
        raise TopologyError(f"{netlist.name}: singular MNA matrix at {label} (step {done})")
    if status == _mna.KCL:
        raise SolverError(
            f"{netlist.name}: KCL residual {resid[done]:.3e} A exceeds "
            f"{cfg.solver_tol:g} x {imax[done]:.3e} A at step {done}", step=done)

    for m, w in zip(mem, w_final):
        m.value.w = float(w)

    volts = {n: _readonly(xs[:, idx[n]].copy()) for n in nodes}

    def v(n):
        return volts[n] if n != GROUND else np.zeros(n_steps)

    currents = {}
    for k, e in enumerate(mem):
        currents[e.name] = (v(e.nodes[0]) - v(e.nodes[1])) / rs[:, k]
    for j, e in enumerate(br):
        cur = xs[:, n_nodes + j]
        currents[e.name] = -cur if e.kind == "voltage_source" else cur.copy()
    return Trace(
        time=_readonly(time),
        drive=_readonly(drive_v),
        node_voltages=volts,
        branch_currents={k: _readonly(c) for k, c in currents.items()},
        w={e.name: _readonly(ws[:, k].copy()) for k, e in enumerate(mem)},
        resistance={e.name: _readonly(rs[:, k].copy()) for k, e in enumerate(mem)},
        kcl_residual=_readonly(resid),
        max_branch_current=_readonly(imax),
    )


def build_pavlov_netlist(line_r: float, line_l: float, dev_a: Memristor | DeviceParams,
                         dev_b: Memristor | DeviceParams, drive: str) -> Netlist:
    """Two-sample circuit in one of its four drive configurations.

    ``bell`` drives the series chain source-A-R-L-B-ground. ``food`` drives B
    alone from its line-side terminal, so B sees the food voltage with the
    opposite sign to the bell. ``probe_a``/``probe_b`` put a source across a
    single device for a resistance reading.
    """
    if not line_r > 0 or not line_l > 0:
        raise ParameterError("line_r and line_l must be > 0")
    a = dev_a if isinstance(dev_a, Memristor) else Memristor(dev_a)
    b = dev_b if isinstance(dev_b, Memristor) else Memristor(dev_b)
    if drive == "bell":
        elements = [
            Element("V", "voltage_source", (1, GROUND)),
            Element("A", "memristor", (1, 2), a),
            Element("R_line", "resistor", (2, 3), float(line_r)),
            Element("L_line", "inductor", (3, 4), float(line_l)),
            Element("B", "memristor", (4, GROUND), b),
        ]
    elif drive == "food":
        elements = [
            Element("V", "voltage_source", (1, GROUND)),
            Element("B", "memristor", (GROUND, 1), b),
        ]
    elif drive == "probe_a":
        elements = [Element("V", "voltage_source", (1, GROUND)),
                    Element("A", "memristor", (1, GROUND), a)]
    elif drive == "probe_b":
        elements = [Element("V", "voltage_source", (1, GROUND)),
                    Element("B", "memristor", (1, GROUND), b)]
    else:
        raise ValueError(f"drive must be one of {DRIVES}, got {drive!r}")
    return Netlist(f"pavlov-{drive}", elements)


def measure_resistance(netlist: Netlist, device_id: str, probe_v: float,
                       duration: float = DEFAULT_PROBE_DURATION) -> float:
    """Read a memristor's resistance with a small DC probe.

    The probe is a single solver step of length ``duration`` with ``probe_v``
    across the device alone; the device decays over that time like any other.
    """
    elem = netlist.element(device_id)
    if elem.kind != "memristor":
        raise ValueError(f"{device_id} is not a memristor")
    dev = elem.value
    limit = min(dev.params.v_th_pot, dev.params.v_th_dep)
    if not 0 < probe_v < limit:
        raise ValueError(
            f"probe voltage {probe_v} V would perturb {device_id}; need 0 < v < {limit} V")
    probe = Netlist(f"probe-{device_id}", [
        Element("V", "voltage_source", (1, GROUND), float(probe_v)),
        Element(device_id, "memristor", (1, GROUND), dev),
    ])
    tr = transient(probe, Waveform.constant(probe_v), TransientConfig(duration, duration))
    current = tr.branch_currents[device_id][-1]
    return float(probe_v / current)


def kcl_residuals(netlist: Netlist, trace: Trace) -> np.ndarray:
    """Per-step worst node current imbalance recomputed from a trace."""
    nodes = netlist.non_ground_nodes
    sums = {n: np.zeros(len(trace)) for n in nodes}
    for e in netlist.elements:
        cur = trace.branch_currents[e.name]
        if e.kind == "voltage_source":
            cur = -cur
        p, q = e.nodes
        if p != GROUND:
            sums[p] = sums[p] + cur
        if q != GROUND:
            sums[q] = sums[q] - cur
    return np.max(np.abs(np.vstack([sums[n] for n in nodes])), axis=0)
