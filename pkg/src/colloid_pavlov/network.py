"""Abstract Pavlovian cell (unconditional, conditional and motor neuron) and
cascades of such cells.

Synapses U->M and C->M are memristors. A firing pre-neuron puts a voltage
across its synapse; the motor neuron M sums the synapse currents and fires
when the sum reaches its threshold.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import GROUND, Element, Memristor, Netlist, TransientConfig, Waveform, transient
from .device import DeviceParams, default_params
from .errors import ParameterError, TopologyError

ROLES = ("drives_s1", "drives_s2")


@dataclass(frozen=True)
class StimulusPattern:
    s1_active: bool
    s2_active: bool
    duration: float = 1.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ParameterError(f"duration must be > 0, got {self.duration}")


@dataclass
class PavlovCell:
    syn_um: Memristor
    syn_cm: Memristor
    motor_threshold: float
    stim_v: float = 5.0
    read_fraction: float = 0.3  # share of stim_v C puts on C->M when firing alone
    dt: float = 0.01

    def __post_init__(self):
        if not self.motor_threshold > 0:
            raise ParameterError("motor_threshold must be > 0")
        if not self.stim_v > 0 or not self.dt > 0:
            raise ParameterError("stim_v and dt must be > 0")
        if not 0 < self.read_fraction < 1:
            raise ParameterError("read_fraction must lie in (0, 1)")
        if self.read_v >= self.syn_cm.params.v_th_pot:
            raise ParameterError(
                f"read level {self.read_v:g} V must stay below the C->M potentiation "
                f"threshold {self.syn_cm.params.v_th_pot:g} V")

    @property
    def read_v(self) -> float:
        return self.read_fraction * self.stim_v

    def check_untrained(self) -> None:
        """Raise unless U alone excites M and C alone (at full stim_v) does not."""
        if self.stim_v / self.syn_cm.resistance >= self.motor_threshold:
            raise ParameterError("C->M already passes the motor threshold at stim_v")
        if self.stim_v / self.syn_um.resistance < self.motor_threshold:
            raise ParameterError("U->M does not reach the motor threshold at stim_v")

    @classmethod
    def fresh(cls, params: DeviceParams | None = None, w_um: float = 0.95,
              w_cm: float = 0.05, motor_threshold: float = 20e-6, stim_v: float = 5.0,
              **kwargs) -> "PavlovCell":
        """An untrained cell: strong U->M, weak C->M."""
        params = params if params is not None else default_params()
        cell = cls(Memristor(params, w_um), Memristor(params, w_cm), motor_threshold,
                   stim_v, **kwargs)
        cell.check_untrained()
        return cell

    def copy(self) -> "PavlovCell":
        return PavlovCell(self.syn_um.copy(), self.syn_cm.copy(), self.motor_threshold,
                          self.stim_v, self.read_fraction, self.dt)


@dataclass(frozen=True)
class StimulusResult:
    m_fires: bool
    cell: PavlovCell
    peak_current: float


def stimulate(cell: PavlovCell, pattern: StimulusPattern) -> StimulusResult:
    """Apply one stimulus pattern to a copy of ``cell``.

    U firing puts ``stim_v`` across U->M. C firing together with U puts the
    full ``stim_v`` across C->M (the potentiating branch); C firing alone
    only applies the read level. M sums both synapse currents.
    """
    new = cell.copy()
    v_um = cell.stim_v if pattern.s1_active else 0.0
    if pattern.s2_active:
        v_cm = cell.stim_v if pattern.s1_active else cell.read_v
    else:
        v_cm = 0.0
    net = Netlist("pavlov-cell", [
        Element("V_U", "voltage_source", (1, GROUND), v_um),
        Element("UM", "memristor", (1, GROUND), new.syn_um),
        Element("V_C", "voltage_source", (2, GROUND), v_cm),
        Element("CM", "memristor", (2, GROUND), new.syn_cm),
    ])
    n = max(1, int(np.ceil(pattern.duration / cell.dt - 1e-9)))
    tr = transient(net, Waveform.constant(0.0), TransientConfig(pattern.duration / n,
                                                                pattern.duration))
    into_m = tr.branch_currents["UM"] + tr.branch_currents["CM"]
    peak = float(np.max(into_m))
    return StimulusResult(peak >= cell.motor_threshold, new, peak)


@dataclass(frozen=True)
class Edge:
    upstream: int
    downstream: int
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise TopologyError(f"edge role must be one of {ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class FiringEvent:
    round: int
    cell: int
    s1: bool
    s2: bool
    m_fires: bool
    w_cm: float


@dataclass
class CascadeNetwork:
    """Cells wired so that an upstream M firing activates a stimulus line of a
    downstream cell within the same round (cells are evaluated in
    topological order)."""

    cells: list[PavlovCell]
    edges: list[Edge]
    order: list[int] = field(init=False)
    duration: float = 1.0

    def __post_init__(self):
        n = len(self.cells)
        graph: dict[int, set[int]] = {i: set() for i in range(n)}
        for e in self.edges:
            if not (0 <= e.upstream < n and 0 <= e.downstream < n):
                raise TopologyError(f"edge {e} references a missing cell")
            if e.upstream == e.downstream:
                raise TopologyError(f"cell {e.upstream} drives itself")
            graph[e.downstream].add(e.upstream)
        try:
            self.order = list(TopologicalSorter(graph).static_order())
        except CycleError as exc:
            raise TopologyError(f"cascade graph has a cycle: {exc.args[1]}") from None

    def step(self, round_idx: int,
             external: Mapping[int, StimulusPattern] | None = None) -> list[FiringEvent]:
        """Evaluate one round; cells without any active input just rest."""
        external = external or {}
        fired: dict[int, bool] = {}
        events = {}
        for i in self.order:
            ext = external.get(i)
            s1 = bool(ext and ext.s1_active)
            s2 = bool(ext and ext.s2_active)
            for e in self.edges:
                if e.downstream == i and fired[e.upstream]:
                    if e.role == "drives_s1":
                        s1 = True
                    else:
                        s2 = True
            duration = ext.duration if ext else self.duration
            res = stimulate(self.cells[i], StimulusPattern(s1, s2, duration))
            self.cells[i] = res.cell
            fired[i] = res.m_fires
            events[i] = FiringEvent(round_idx, i, s1, s2, res.m_fires, res.cell.syn_cm.w)
        return [events[i] for i in range(len(self.cells))]

    def run(self, rounds: Iterable[Mapping[int, StimulusPattern]]) -> list[FiringEvent]:
        out = []
        for k, ext in enumerate(rounds, start=1):
            out.extend(self.step(k, ext))
        return out


def cascade(cells: Sequence[PavlovCell], edges: Sequence[Edge | tuple]) -> CascadeNetwork:
    edges = [e if isinstance(e, Edge) else Edge(*e) for e in edges]
    return CascadeNetwork(list(cells), edges)


EVENT_FIELDS = ("round", "cell", "s1", "s2", "m_fires", "w_cm")


def events_to_csv(events: Iterable[FiringEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVENT_FIELDS)
    for ev in events:
        writer.writerow([ev.round, ev.cell, int(ev.s1), int(ev.s2), int(ev.m_fires),
                         repr(float(ev.w_cm))])
    return buf.getvalue()
