"""Bell/food conditioning experiment on the two-sample circuit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import (DEFAULT_LINE_L, DEFAULT_LINE_R, DEFAULT_PROBE_DURATION, Memristor,
                      Trace, TransientConfig, Waveform, build_pavlov_netlist,
                      measure_resistance, transient)
from .device import DeviceParams
from .errors import ParameterError

ENVIRONMENTS = ("ambient", "nitrogen")
TARGETS = ("bell", "food", "probe_a", "probe_b")


@dataclass(frozen=True)
class SweepSpec:
    v_start: float
    v_end: float
    v_step: float
    dwell: float = 0.1
    target: str = "bell"

    def __post_init__(self):
        if not self.v_step > 0:
            raise ParameterError(f"v_step must be > 0, got {self.v_step}")
        if not self.dwell > 0:
            raise ParameterError(f"dwell must be > 0, got {self.dwell}")
        if self.target not in TARGETS:
            raise ParameterError(f"target must be one of {TARGETS}, got {self.target!r}")
        span = (self.v_end - self.v_start) / self.v_step
        if span < 0 or abs(span - round(span)) > 1e-9 * max(1.0, abs(span)):
            raise ParameterError(
                f"v_end - v_start must be a non-negative multiple of v_step "
                f"({self.v_start} -> {self.v_end} by {self.v_step})")

    @property
    def n_levels(self) -> int:
        return int(round((self.v_end - self.v_start) / self.v_step)) + 1

    @property
    def levels(self) -> np.ndarray:
        return self.v_start + self.v_step * np.arange(self.n_levels)

    @property
    def duration(self) -> float:
        return self.n_levels * self.dwell

    def waveform(self) -> Waveform:
        return Waveform.staircase(self.levels, self.dwell)


def default_bell() -> SweepSpec:
    return SweepSpec(0.0, 10.0, 0.05, 0.1, "bell")


def default_food() -> SweepSpec:
    return SweepSpec(0.0, 3.0, 0.01, 0.1, "food")


def default_bell_test() -> SweepSpec:
    return SweepSpec(0.0, 10.0, 0.01, 0.1, "bell")


@dataclass(frozen=True)
class ExperimentPlan:
    n_cycles: int = 15
    bell: SweepSpec = field(default_factory=default_bell)
    food: SweepSpec = field(default_factory=default_food)
    bell_test: SweepSpec = field(default_factory=default_bell_test)
    probe_v: float = 0.1
    salivation_threshold: float = 1e5
    environment: str = "ambient"
    seed: int = 0
    steps_per_level: int = 4
    line_r: float = DEFAULT_LINE_R
    line_l: float = DEFAULT_LINE_L
    idle: float = 0.0  # rest between cycles, seconds
    probe_duration: float = DEFAULT_PROBE_DURATION
    noise_ohm: float = 0.0  # std-dev of additive read noise

    def __post_init__(self):
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise ParameterError(f"n_cycles must be an integer >= 1, got {self.n_cycles}")
        if self.environment not in ENVIRONMENTS:
            raise ParameterError(
                f"environment must be one of {ENVIRONMENTS}, got {self.environment!r}")
        if self.bell.target != "bell" or self.bell_test.target != "bell":
            raise ParameterError("bell and bell_test sweeps must target 'bell'")
        if self.food.target != "food":
            raise ParameterError("food sweep must target 'food'")
        if int(self.steps_per_level) != self.steps_per_level or self.steps_per_level < 1:
            raise ParameterError("steps_per_level must be an integer >= 1")
        for name in ("probe_v", "salivation_threshold", "line_r", "line_l", "probe_duration"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if self.idle < 0 or self.noise_ohm < 0:
            raise ParameterError("idle and noise_ohm must be >= 0")

    def check_devices(self, devices: "DevicePair") -> None:
        for label, dev in (("A", devices.a), ("B", devices.b)):
            p = dev.params
            if not p.r_on < self.salivation_threshold < p.r_off:
                raise ParameterError(
                    f"salivation_threshold {self.salivation_threshold:g} outside "
                    f"(r_on, r_off) of device {label}")
            if self.probe_v >= min(p.v_th_pot, p.v_th_dep):
                raise ParameterError(f"probe_v {self.probe_v} V would perturb device {label}")


@dataclass
class DevicePair:
    a: Memristor
    b: Memristor

    @classmethod
    def fresh(cls, params_a: DeviceParams, params_b: DeviceParams | None = None) -> "DevicePair":
        return cls(Memristor(params_a), Memristor(params_b if params_b is not None else params_a))

    def copy(self) -> "DevicePair":
        return DevicePair(self.a.copy(), self.b.copy())


@dataclass(frozen=True)
class CycleRecord:
    cycle_idx: int
    r_a_after_bell: float
    r_b_after_bell: float
    r_a_after_food: float
    r_b_after_food: float

    def __post_init__(self):
        for name in ("r_a_after_bell", "r_b_after_bell", "r_a_after_food", "r_b_after_food"):
            r = getattr(self, name)
            if not (r > 0 and math.isfinite(r)):
                raise ValueError(f"{name} must be a positive finite resistance, got {r}")


@dataclass(frozen=True)
class BellTestResult:
    r_b: float
    salivation: bool
    r_a: float = float("nan")


@dataclass(frozen=True)
class ConditioningRun:
    baseline_r_a: float
    baseline_r_b: float
    records: list[CycleRecord]
    bell_test: BellTestResult | None = None


def _rest(dev: Memristor, n_steps: int, dt: float) -> None:
    # n zero-drive semi-implicit steps in closed form
    if n_steps > 0:
        dev.w = dev.w / (1.0 + dt / dev.params.tau_decay) ** n_steps


def run_sweep(plan: ExperimentPlan, devices: DevicePair, spec: SweepSpec) -> Trace:
    """Drive one staircase sweep; device states carry over to the next call.

    A device that is not part of the swept circuit (sample A during food)
    only relaxes for the duration of the sweep.
    """
    net = build_pavlov_netlist(plan.line_r, plan.line_l, devices.a, devices.b, spec.target)
    dt = spec.dwell / plan.steps_per_level
    cfg = TransientConfig(dt=dt, t_end=spec.duration)
    trace = transient(net, spec.waveform(), cfg)
    in_circuit = {e.value for e in net.memristors()}
    for dev in (devices.a, devices.b):
        if dev not in in_circuit:
            _rest(dev, cfg.n_steps, dt)
    return trace


def probe(plan: ExperimentPlan, devices: DevicePair, which: str,
          rng: np.random.Generator | None = None) -> float:
    target = {"A": "probe_a", "B": "probe_b"}[which]
    net = build_pavlov_netlist(plan.line_r, plan.line_l, devices.a, devices.b, target)
    r = measure_resistance(net, which, plan.probe_v, plan.probe_duration)
    if plan.noise_ohm > 0 and rng is not None:
        r = max(r + plan.noise_ohm * rng.standard_normal(), 1e-12)
    return r


def _rng(plan: ExperimentPlan) -> np.random.Generator:
    return np.random.default_rng(plan.seed)


def run_conditioning(plan: ExperimentPlan, devices: DevicePair,
                     rng: np.random.Generator | None = None) -> list[CycleRecord]:
    """Bell sweep, probe, food sweep, probe; ``plan.n_cycles`` times."""
    plan.check_devices(devices)
    rng = rng if rng is not None else _rng(plan)
    records = []
    rest_dt = plan.bell.dwell / plan.steps_per_level
    for cycle in range(1, plan.n_cycles + 1):
        run_sweep(plan, devices, plan.bell)
        ra_bell = probe(plan, devices, "A", rng)
        rb_bell = probe(plan, devices, "B", rng)
        run_sweep(plan, devices, plan.food)
        ra_food = probe(plan, devices, "A", rng)
        rb_food = probe(plan, devices, "B", rng)
        records.append(CycleRecord(cycle, ra_bell, rb_bell, ra_food, rb_food))
        if plan.idle > 0:
            n = int(round(plan.idle / rest_dt))
            _rest(devices.a, n, rest_dt)
            _rest(devices.b, n, rest_dt)
    return records


def detect_salivation(r_b: float, threshold: float) -> bool:
    if not (r_b > 0 and threshold > 0):
        raise ValueError("resistance and threshold must both be positive")
    return bool(r_b < threshold)


def test_bell_only(plan: ExperimentPlan, devices: DevicePair,
                   rng: np.random.Generator | None = None) -> BellTestResult:
    """Bell-only sweep followed by a read of B against the salivation threshold."""
    run_sweep(plan, devices, plan.bell_test)
    r_a = probe(plan, devices, "A", rng)
    r_b = probe(plan, devices, "B", rng)
    return BellTestResult(r_b=r_b, salivation=detect_salivation(r_b, plan.salivation_threshold),
                          r_a=r_a)


test_bell_only.__test__ = False  # keep pytest from collecting it on import


def run_experiment(plan: ExperimentPlan, devices: DevicePair,
                   bell_test: bool = True) -> ConditioningRun:
    """Baseline read, the conditioning cycles and (optionally) the bell test."""
    plan.check_devices(devices)
    rng = _rng(plan)
    base_a = probe(plan, devices, "A", rng)
    base_b = probe(plan, devices, "B", rng)
    records = run_conditioning(plan, devices, rng)
    result = test_bell_only(plan, devices, rng) if bell_test else None
    return ConditioningRun(base_a, base_b, records, result)
