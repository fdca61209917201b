"""Strict TOML run configuration.

Every section and key is checked against a fixed schema; anything unknown
is rejected with its line and column so a typo never silently falls back
to a default.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .calibrate import DEFAULT_BOUNDS, DEFAULT_FREE, UNWEIGHTED, FitConfig
from .circuit import DEFAULT_LINE_L, DEFAULT_LINE_R, DEFAULT_PROBE_DURATION
from .device import PARAM_NAMES, DeviceParams, default_params, load_params
from .errors import ConfigError, ParameterError
from .protocol import ExperimentPlan, SweepSpec

FORMATS = ("csv", "svg")
SWEEP_NAMES = ("bell", "food", "bell_test")

_PLAN_KEYS = {"n_cycles", "probe_v", "salivation_threshold", "environment", "seed",
              "steps_per_level", "idle", "probe_duration", "noise_ohm"}
_SWEEP_KEYS = {"v_start", "v_end", "v_step", "dwell"}
_CALIB_KEYS = {"reference", "free_params", "bounds", "max_evals", "n_restarts", "seed",
               "weights", "output_file", "truth"}
_CASCADE_KEYS = {"n_cells", "edges", "rounds", "motor_threshold", "stim_v", "read_fraction",
                 "w_um", "w_cm", "duration", "dt"}
_ROUND_KEYS = {"repeat", "inputs"}
_TOP = {"plan", "device_a", "device_b", "circuit", "calibration", "simulate", "cascade",
        "output"}


@dataclass(frozen=True)
class CalibrationSection:
    fit: FitConfig
    reference: str = "table1"  # "table1", "synthetic" or a CSV path
    output_file: str = "fitted-colloid.toml"
    truth: dict[str, float] = field(default_factory=dict)  # synthetic reference overrides


@dataclass(frozen=True)
class CascadeSection:
    n_cells: int
    edges: tuple[tuple[int, int, str], ...]
    rounds: tuple[tuple[int, tuple[tuple[int, bool, bool], ...]], ...]
    motor_threshold: float = 20e-6
    stim_v: float = 5.0
    read_fraction: float = 0.3
    w_um: float = 0.95
    w_cm: float = 0.05
    duration: float = 1.0
    dt: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    plan: ExperimentPlan
    device_a: DeviceParams
    device_b: DeviceParams
    calibration: CalibrationSection | None
    simulate_sweep: str
    cascade: CascadeSection | None
    out_dir: Path
    formats: tuple[str, ...]
    source: Path | None = None

    def hash(self) -> str:
        return config_hash(self)


def _locate(text: str, key: str) -> str:
    pat = re.compile(r"^\s*(\[+\s*)?([\w.]*\.)?" + re.escape(key) + r"\b")
    for n, line in enumerate(text.splitlines(), start=1):
        m = pat.search(line)
        if m:
            return f"line {n}, column {line.index(key, m.start()) + 1}"
    return "unknown position"


class _Reader:
    def __init__(self, text: str, where: str):
        self.text = text
        self.where = where

    def fail(self, msg: str, key: str | None = None) -> ConfigError:
        pos = f" ({_locate(self.text, key)})" if key else ""
        return ConfigError(f"{self.where}: {msg}{pos}")

    def table(self, doc: dict, name: str, allowed: set[str], required: bool = False) -> dict:
        tbl = doc.get(name)
        if tbl is None:
            if required:
                raise self.fail(f"missing section [{name}]")
            return {}
        if not isinstance(tbl, dict):
            raise self.fail(f"[{name}] must be a table", name)
        for key in tbl:
            if key not in allowed:
                raise self.fail(f"unknown key {key!r} in [{name}]", key)
        return tbl

    def number(self, tbl: dict, key: str, default: float) -> float:
        v = tbl.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.fail(f"{key} must be a number, got {v!r}", key)
        return float(v)

    def integer(self, tbl: dict, key: str, default: int) -> int:
        v = tbl.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.fail(f"{key} must be an integer, got {v!r}", key)
        return v


def _sweep(r: _Reader, plan_tbl: dict, name: str, default: SweepSpec) -> SweepSpec:
    tbl = r.table(plan_tbl, name, _SWEEP_KEYS)
    target = "food" if name == "food" else "bell"
    try:
        return SweepSpec(r.number(tbl, "v_start", default.v_start),
                         r.number(tbl, "v_end", default.v_end),
                         r.number(tbl, "v_step", default.v_step),
                         r.number(tbl, "dwell", default.dwell), target)
    except ParameterError as exc:
        raise r.fail(f"[plan.{name}]: {exc}", name) from None


def _plan(r: _Reader, doc: dict) -> ExperimentPlan:
    tbl = r.table(doc, "plan", _PLAN_KEYS | set(SWEEP_NAMES))
    circ = r.table(doc, "circuit", {"line_r", "line_l"})
    base = ExperimentPlan()
    env = tbl.get("environment", base.environment)
    if not isinstance(env, str):
        raise r.fail("environment must be a string", "environment")
    try:
        return ExperimentPlan(
            n_cycles=r.integer(tbl, "n_cycles", base.n_cycles),
            bell=_sweep(r, tbl, "bell", base.bell),
            food=_sweep(r, tbl, "food", base.food),
            bell_test=_sweep(r, tbl, "bell_test", base.bell_test),
            probe_v=r.number(tbl, "probe_v", base.probe_v),
            salivation_threshold=r.number(tbl, "salivation_threshold",
                                          base.salivation_threshold),
            environment=env,
            seed=r.integer(tbl, "seed", base.seed),
            steps_per_level=r.integer(tbl, "steps_per_level", base.steps_per_level),
            line_r=r.number(circ, "line_r", DEFAULT_LINE_R),
            line_l=r.number(circ, "line_l", DEFAULT_LINE_L),
            idle=r.number(tbl, "idle", base.idle),
            probe_duration=r.number(tbl, "probe_duration", DEFAULT_PROBE_DURATION),
            noise_ohm=r.number(tbl, "noise_ohm", base.noise_ohm),
        )
    except ParameterError as exc:
        raise r.fail(f"[plan]: {exc}") from None


def _device(r: _Reader, doc: dict, name: str, base_dir: Path) -> DeviceParams:
    tbl = r.table(doc, name, set(PARAM_NAMES) | {"base"})
    base_ref = tbl.get("base", "default")
    if not isinstance(base_ref, str):
        raise r.fail("base must be a string", "base")
    try:
        if base_ref == "default":
            base = default_params()
        else:
            path = Path(base_ref)
            base = load_params(path if path.is_absolute() else base_dir / path)
        overrides = {k: r.number(tbl, k, 0.0) for k in tbl if k != "base"}
        return base.replace(**overrides)
    except (ParameterError, OSError) as exc:
        raise r.fail(f"[{name}]: {exc}") from None


def _calibration(r: _Reader, doc: dict) -> CalibrationSection | None:
    if "calibration" not in doc:
        return None
    tbl = r.table(doc, "calibration", _CALIB_KEYS)
    free = tbl.get("free_params", list(DEFAULT_FREE))
    if not isinstance(free, list) or not all(isinstance(f, str) for f in free):
        raise r.fail("free_params must be a list of names", "free_params")
    bounds = dict(DEFAULT_BOUNDS)
    raw_bounds = tbl.get("bounds", {})
    if not isinstance(raw_bounds, dict):
        raise r.fail("bounds must be a table", "bounds")
    for k, v in raw_bounds.items():
        if k not in PARAM_NAMES:
            raise r.fail(f"unknown parameter {k!r} in [calibration.bounds]", k)
        if (not isinstance(v, list) or len(v) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            raise r.fail(f"bounds for {k} must be [lo, hi]", k)
        bounds[k] = (float(v[0]), float(v[1]))
    weights = tbl.get("weights", list(UNWEIGHTED))
    if (not isinstance(weights, list)
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in weights)):
        raise r.fail("weights must be a list of three numbers", "weights")
    truth = tbl.get("truth", {})
    if not isinstance(truth, dict):
        raise r.fail("truth must be a table", "truth")
    for k, v in truth.items():
        if k not in PARAM_NAMES:
            raise r.fail(f"unknown parameter {k!r} in [calibration.truth]", k)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise r.fail(f"truth value for {k} must be a number", k)
    reference = tbl.get("reference", "table1")
    output_file = tbl.get("output_file", "fitted-colloid.toml")
    if not isinstance(reference, str) or not isinstance(output_file, str):
        raise r.fail("reference and output_file must be strings", "reference")
    if reference == "synthetic" and not truth:
        raise r.fail("a synthetic reference needs a [calibration.truth] table", "reference")
    fit = FitConfig(free_params=tuple(free), bounds=bounds,
                    max_evals=r.integer(tbl, "max_evals", 400),
                    n_restarts=r.integer(tbl, "n_restarts", 3),
                    seed=r.integer(tbl, "seed", 0),
                    weights=tuple(weights))
    return CalibrationSection(fit, reference, output_file,
                              {k: float(v) for k, v in truth.items()})


def _cascade(r: _Reader, doc: dict) -> CascadeSection | None:
    if "cascade" not in doc:
        return None
    tbl = r.table(doc, "cascade", _CASCADE_KEYS)
    n = r.integer(tbl, "n_cells", 1)
    if n < 1:
        raise r.fail("n_cells must be >= 1", "n_cells")
    edges = []
    for e in tbl.get("edges", []):
        if (not isinstance(e, list) or len(e) != 3 or not isinstance(e[0], int)
                or not isinstance(e[1], int) or not isinstance(e[2], str)):
            raise r.fail("each edge must be [upstream, downstream, role]", "edges")
        edges.append((e[0], e[1], e[2]))
    rounds = []
    for rd in tbl.get("rounds", []):
        if not isinstance(rd, dict):
            raise r.fail("rounds must be an array of tables", "rounds")
        for key in rd:
            if key not in _ROUND_KEYS:
                raise r.fail(f"unknown key {key!r} in [[cascade.rounds]]", key)
        inputs = []
        for item in rd.get("inputs", []):
            if (not isinstance(item, list) or len(item) != 3
                    or not all(isinstance(x, (int, bool)) for x in item)):
                raise r.fail("each input must be [cell, s1, s2]", "inputs")
            inputs.append((int(item[0]), bool(item[1]), bool(item[2])))
        repeat = r.integer(rd, "repeat", 1)
        if repeat < 1:
            raise r.fail("repeat must be >= 1", "repeat")
        rounds.append((repeat, tuple(inputs)))
    defaults = CascadeSection(n, (), ())
    return CascadeSection(
        n, tuple(edges), tuple(rounds),
        **{k: r.number(tbl, k, getattr(defaults, k))
           for k in ("motor_threshold", "stim_v", "read_fraction", "w_um", "w_cm",
                     "duration", "dt")})


def parse_config(text: str, where: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    r = _Reader(text, where)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    for key in doc:
        if key not in _TOP:
            raise r.fail(f"unknown section [{key}]", key)
    base_dir = base_dir if base_dir is not None else Path.cwd()
    plan = _plan(r, doc)
    dev_a = _device(r, doc, "device_a", base_dir)
    dev_b = _device(r, doc, "device_b", base_dir)
    sim = r.table(doc, "simulate", {"sweep"})
    sweep = sim.get("sweep", "bell")
    if sweep not in SWEEP_NAMES:
        raise r.fail(f"simulate.sweep must be one of {SWEEP_NAMES}", "sweep")
    out = r.table(doc, "output", {"directory", "formats"})
    directory = out.get("directory", "out")
    formats = out.get("formats", ["csv", "svg"])
    if not isinstance(directory, str):
        raise r.fail("output.directory must be a string", "directory")
    if not isinstance(formats, list) or not set(formats) <= set(FORMATS) or "csv" not in formats:
        raise r.fail(f"output.formats must be a subset of {FORMATS} including csv", "formats")
    try:
        return RunConfig(plan, dev_a, dev_b, _calibration(r, doc), sweep, _cascade(r, doc),
                         Path(directory), tuple(f for f in FORMATS if f in formats))
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") if not str(exc).startswith(where) else exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_config(text, str(path), path.parent)
    return RunConfig(**{**cfg.__dict__, "source": path})


def _canonical(obj: Any) -> Any:
    if isinstance(obj, (DeviceParams,)):
        return obj.as_dict()
    if isinstance(obj, SweepSpec):
        return [obj.v_start, obj.v_end, obj.v_step, obj.dwell, obj.target]
    if isinstance(obj, (tuple, list)):
        return [_canonical(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, float):
        return repr(obj)
    return obj


def config_hash(cfg: RunConfig) -> str:
    """Short digest of every input that can change a simulated number.

    The environment label has no effect on the model, so it is left out; two
    configs differing only in that label produce identical files.
    """
    p = cfg.plan
    plan = {k: getattr(p, k) for k in ("n_cycles", "bell", "food", "bell_test", "probe_v",
                                       "salivation_threshold", "seed", "steps_per_level",
                                       "line_r", "line_l", "idle", "probe_duration",
                                       "noise_ohm")}
    payload: dict[str, Any] = {"plan": plan, "device_a": cfg.device_a,
                               "device_b": cfg.device_b, "simulate": cfg.simulate_sweep}
    if cfg.calibration is not None:
        c = cfg.calibration
        payload["calibration"] = {"free": c.fit.free_params, "bounds": dict(c.fit.bounds),
                                  "max_evals": c.fit.max_evals,
                                  "n_restarts": c.fit.n_restarts, "seed": c.fit.seed,
                                  "weights": c.fit.weights, "reference": c.reference,
                                  "truth": c.truth}
    if cfg.cascade is not None:
        payload["cascade"] = cfg.cascade.__dict__
    blob = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
