"""Fit device kinetics to the measured resistance trajectory of sample B.

The loss compares simulated and measured resistances on a log10 scale and
the search runs Nelder-Mead in log-parameter space, since resistances span
two decades and the rates have no known scale.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .device import DeviceParams, PARAM_NAMES
from .errors import ConfigError, ParameterError
from .protocol import DevicePair, ExperimentPlan, probe, run_conditioning, _rng

log = logging.getLogger(__name__)

TABLE1_FILE = Path(__file__).parent / "data" / "table1.csv"
N_CYCLES = 15
MEGAOHM = 1e6

DEFAULT_FREE = ("k_pot", "k_dep", "tau_decay", "v_th_pot", "v_th_dep", "alpha")
DEFAULT_BOUNDS = {
    "k_pot": (1e-3, 1e2),
    "k_dep": (1e-3, 1e2),
    "tau_decay": (10.0, 1e5),
    "v_th_pot": (2.0, 5.0),
    "v_th_dep": (0.5, 2.9),
    "alpha": (1.0, 4.0),
    "w_init": (1e-4, 0.03),
}
SIMPLEX_DIAMETER = 1e-4


@dataclass(frozen=True)
class ReferenceTrace:
    """Resistance of sample B in ohms: before training, after each bell and
    food sweep, and after the last cycle."""

    baseline_r_b: float
    after_bell: tuple[float, ...]
    after_food: tuple[float, ...]
    final_r_b: float

    def __post_init__(self):
        object.__setattr__(self, "after_bell", tuple(float(r) for r in self.after_bell))
        object.__setattr__(self, "after_food", tuple(float(r) for r in self.after_food))
        if len(self.after_bell) != N_CYCLES or len(self.after_food) != N_CYCLES:
            raise ValueError(f"reference rows need exactly {N_CYCLES} entries")
        values = (self.baseline_r_b, self.final_r_b) + self.after_bell + self.after_food
        if not all(r > 0 and math.isfinite(r) for r in values):
            raise ValueError("reference resistances must be positive and finite")


def load_reference(path: str | Path = TABLE1_FILE) -> ReferenceTrace:
    """Read a reference table given in megaohms.

    The file is CSV with ``cycle,after_bell_mohm,after_food_mohm`` rows and
    ``# baseline_mohm=`` / ``# final_mohm=`` comment lines. This is the one
    place megaohms are converted to ohms.
    """
    meta: dict[str, float] = {}
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = float(value)
            elif line.strip():
                lines.append(line)
        for row in csv.DictReader(lines):
            rows.append(row)
    rows.sort(key=lambda r: int(r["cycle"]))
    try:
        return ReferenceTrace(
            baseline_r_b=meta["baseline_mohm"] * MEGAOHM,
            after_bell=[float(r["after_bell_mohm"]) * MEGAOHM for r in rows],
            after_food=[float(r["after_food_mohm"]) * MEGAOHM for r in rows],
            final_r_b=meta["final_mohm"] * MEGAOHM,
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing {exc.args[0]}") from None


def table1() -> ReferenceTrace:
    return load_reference(TABLE1_FILE)


@dataclass(frozen=True)
class Simulated:
    baseline_r_b: float
    after_bell: tuple[float, ...]
    after_food: tuple[float, ...]


def simulate_reference(params: DeviceParams, plan: ExperimentPlan) -> Simulated:
    """Fresh devices with ``params`` on both samples, baseline read, cycles."""
    devices = DevicePair.fresh(params)
    rng = _rng(plan)
    base = probe(plan, devices, "B", rng)
    recs = run_conditioning(plan, devices, rng)
    return Simulated(base, tuple(r.r_b_after_bell for r in recs),
                     tuple(r.r_b_after_food for r in recs))


def reference_from_params(params: DeviceParams, plan: ExperimentPlan) -> ReferenceTrace:
    """A synthetic reference generated by the model itself."""
    sim = simulate_reference(params, plan)
    return ReferenceTrace(sim.baseline_r_b, sim.after_bell, sim.after_food, sim.after_bell[-1])


UNWEIGHTED = (1.0, 1.0, 1.0)


def log_rms(sim: Simulated, ref: ReferenceTrace,
            weights: tuple[float, float, float] = UNWEIGHTED) -> float:
    """Weighted RMS of log10(sim / ref).

    ``weights`` applies to the bell row, the food row and the baseline. With
    unit weights this is the plain RMS over all 31 entries.
    """
    w_bell, w_food, w_base = weights
    # fixed order: bell rows, food rows, baseline
    terms = ([(s, r, w_bell) for s, r in zip(sim.after_bell, ref.after_bell)]
             + [(s, r, w_food) for s, r in zip(sim.after_food, ref.after_food)]
             + [(sim.baseline_r_b, ref.baseline_r_b, w_base)])
    total = 0.0
    norm = 0.0
    for s, r, w in terms:
        d = math.log10(s / r)
        total += w * (d * d)
        norm += w
    return math.sqrt(total / norm)


def objective(params: DeviceParams, plan: ExperimentPlan, ref: ReferenceTrace,
              weights: tuple[float, float, float] = UNWEIGHTED) -> float:
    """RMS of log10(simulated / measured) over both table rows and the baseline.

    Never raises on a failed simulation; returns ``inf`` and logs why.
    """
    if plan.n_cycles != len(ref.after_bell):
        raise ConfigError(f"plan runs {plan.n_cycles} cycles, reference has {len(ref.after_bell)}")
    try:
        sim = simulate_reference(params, plan)
        loss = log_rms(sim, ref, weights)
    except Exception as exc:  # noqa: BLE001 - any failure scores as infeasible
        log.warning("simulation failed for %s: %s", params, exc)
        return math.inf
    return loss if math.isfinite(loss) else math.inf


@dataclass(frozen=True)
class FitConfig:
    free_params: tuple[str, ...] = DEFAULT_FREE
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    max_evals: int = 400
    n_restarts: int = 3
    seed: int = 0
    weights: tuple[float, float, float] = UNWEIGHTED  # bell row, food row, baseline

    def __post_init__(self):
        object.__setattr__(self, "free_params", tuple(self.free_params))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 3 or min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ConfigError("weights must be three non-negative numbers, not all zero")
        if not self.free_params:
            raise ConfigError("free_params is empty")
        for name in self.free_params:
            if name not in PARAM_NAMES:
                raise ConfigError(f"unknown parameter {name!r}")
            if name not in self.bounds:
                raise ConfigError(f"no bounds for free parameter {name!r}")
            lo, hi = self.bounds[name]
            if not 0 < lo < hi:
                raise ConfigError(f"bounds for {name} must satisfy 0 < lo < hi, got ({lo}, {hi})")
        if self.max_evals < 1 or self.n_restarts < 1:
            raise ConfigError("max_evals and n_restarts must be >= 1")

    def log_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.log([self.bounds[n][0] for n in self.free_params])
        hi = np.log([self.bounds[n][1] for n in self.free_params])
        return lo, hi


@dataclass(frozen=True)
class FitResult:
    params: DeviceParams
    loss: float
    evals_used: int
    converged: bool
    best_so_far: tuple[float, ...] = ()
    restart: int = 0


class _BudgetSpent(Exception):
    pass


class _Tracker:
    """Counts evaluations, enforces the budget and remembers the best point."""

    def __init__(self, fn, budget):
        self.fn = fn
        self.budget = budget
        self.evals = 0
        self.best_x = None
        self.best_f = math.inf
        self.history: list[float] = []

    def __call__(self, x):
        if self.evals >= self.budget:
            raise _BudgetSpent
        self.evals += 1
        f = self.fn(x)
        if self.best_x is None or f < self.best_f:
            self.best_x = np.array(x, dtype=float)
            self.best_f = f
        self.history.append(self.best_f)
        return f


def _diameter(simplex: np.ndarray) -> float:
    diffs = simplex[:, None, :] - simplex[None, :, :]
    return float(np.max(np.abs(diffs)))


def fit(cfg: FitConfig, plan: ExperimentPlan, ref: ReferenceTrace,
        initial: DeviceParams | None = None) -> FitResult:
    """Multi-start bounded Nelder-Mead over ``cfg.free_params``.

    Start 0 is ``initial`` clipped into the bounds; the remaining starts are
    drawn uniformly in log space from ``cfg.seed``. ``cfg.max_evals`` caps
    each start. Ties go to the earlier start.
    """
    if initial is None:
        from .device import default_params
        initial = default_params()
    lo, hi = cfg.log_bounds()
    names = cfg.free_params

    def to_params(z):
        z = np.clip(z, lo, hi)
        return initial.replace(**{n: float(np.exp(v)) for n, v in zip(names, z)})

    def loss_at(z):
        try:
            p = to_params(z)
        except ParameterError:
            return math.inf
        return objective(p, plan, ref, cfg.weights)

    rng = np.random.default_rng(cfg.seed)
    z_init = np.clip(np.log([getattr(initial, n) for n in names]), lo, hi)
    starts = [z_init] + [rng.uniform(lo, hi) for _ in range(cfg.n_restarts - 1)]
    span = hi - lo

    best: FitResult | None = None
    history: list[float] = []
    evals_total = 0
    any_feasible = False
    for k, z0 in enumerate(starts):
        tracker = _Tracker(loss_at, cfg.max_evals)
        # initial simplex: a tenth of each bound's span, stepping inward
        simplex = [z0]
        for i in range(len(names)):
            z = z0.copy()
            step = 0.1 * span[i]
            z[i] = z[i] + step if z[i] + step <= hi[i] else z[i] - step
            simplex.append(z)
        converged = False
        try:
            res = minimize(tracker, z0, method="Nelder-Mead",
                           bounds=list(zip(lo, hi)),
                           options=dict(initial_simplex=np.array(simplex),
                                        maxfev=cfg.max_evals, maxiter=10 ** 9,
                                        xatol=SIMPLEX_DIAMETER / 2, fatol=math.inf,
                                        adaptive=len(names) > 2))
            converged = (res.status == 0
                         and _diameter(res.final_simplex[0]) <= SIMPLEX_DIAMETER)
        except _BudgetSpent:
            pass
        evals_total += tracker.evals
        prev = history[-1] if history else math.inf
        history.extend(min(prev, h) for h in tracker.history)
        if math.isfinite(tracker.best_f):
            any_feasible = True
        log.info("start %d: loss %.5g after %d evals%s", k, tracker.best_f, tracker.evals,
                 " (converged)" if converged else "")
        if tracker.best_x is None:
            continue
        if best is None or tracker.best_f < best.loss:
            best = FitResult(to_params(tracker.best_x), float(tracker.best_f), 0, converged,
                             restart=k)
    if not any_feasible or best is None:
        raise ConfigError("every start of the fit was infeasible")
    return FitResult(best.params, best.loss, evals_total, best.converged,
                     tuple(history), best.restart)


FIELD_DOCS = {
    "r_on": "low-resistance limit (fully trained), ohms",
    "r_off": "high-resistance limit (untrained), ohms",
    "v_th_pot": "potentiation threshold, volts (> 0)",
    "v_th_dep": "depression threshold magnitude, volts (> 0)",
    "k_pot": "potentiation rate, 1/s",
    "k_dep": "depression rate, 1/s",
    "alpha": "exponent on the relative over-threshold voltage (>= 1)",
    "tau_decay": "volatile relaxation time constant, seconds",
    "w_init": "state of a fresh sample, in [0, 1]",
}


def format_params(params: DeviceParams, header: Sequence[str] = ()) -> str:
    """Render a device defaults file (TOML with one documented key per line)."""
    out = [f"# {line}" for line in header]
    out.append("[device]")
    for name in PARAM_NAMES:
        out.append(f"{name} = {float(getattr(params, name))!r}  # {FIELD_DOCS[name]}")
    return "\n".join(out) + "\n"


def write_params(params: DeviceParams, path: str | Path, header: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.write_text(format_params(params, header), encoding="utf-8", newline="\n")
    return path
