"""Command-line entry point.

Exit status: 0 on success, 2 for configuration or usage errors, 3 when a
simulation fails.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (UNWEIGHTED, fit, load_reference, log_rms, reference_from_params,
                        simulate_reference, table1, write_params)
from .config import RunConfig, load_config
from .device import optical_band_gap
from .errors import ConfigError, ParameterError, SolverError, TopologyError
from .network import PavlovCell, StimulusPattern, cascade, events_to_csv
from .plotting import plot_csv
from .protocol import DevicePair, run_experiment, run_sweep
from .reports import bell_test_csv, cycles_csv, phases_csv, render_csv, trace_csv, write_text

OUT_ENV = "PAVLOV_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("colloid_pavlov")


class _Fail(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _out_dir(cfg: RunConfig) -> Path:
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else cfg.out_dir


def _meta(cfg: RunConfig) -> dict[str, object]:
    return {"tool": "colloid-pavlov", "version": __version__, "config_hash": cfg.hash()}


def _load(path: str) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None


def _wrote(path: Path) -> None:
    print(f"wrote {path}")


def cmd_condition(args) -> int:
    cfg = _load(args.config)
    devices = DevicePair.fresh(cfg.device_a, cfg.device_b)
    try:
        cfg.plan.check_devices(devices)
    except ParameterError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None
    run = run_experiment(cfg.plan, devices)
    out = _out_dir(cfg)
    meta = _meta(cfg)
    cycles = write_text(out / "cycles.csv", cycles_csv(run, meta))
    _wrote(cycles)
    _wrote(write_text(out / "phases.csv", phases_csv(run, meta)))
    _wrote(write_text(out / "bell_test.csv",
                      bell_test_csv(run.bell_test, cfg.plan.salivation_threshold, meta)))
    if "svg" in cfg.formats:
        _wrote(plot_csv(cycles, out / "cycles.svg"))
    last = run.records[-1]
    print(f"baseline R_B = {run.baseline_r_b:.6g} ohm; after cycle {last.cycle_idx}: "
          f"R_B = {last.r_b_after_bell:.6g} ohm (bell), {last.r_b_after_food:.6g} ohm (food)")
    print(f"bell test: R_B = {run.bell_test.r_b:.6g} ohm, "
          f"salivation = {str(run.bell_test.salivation).lower()}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args.config)
    if cfg.calibration is None:
        raise _Fail(EXIT_CONFIG, f"{args.config}: no [calibration] section")
    cal = cfg.calibration
    try:
        if cal.reference == "table1":
            ref = table1()
        elif cal.reference == "synthetic":
            ref = reference_from_params(cfg.device_a.replace(**cal.truth), cfg.plan)
        else:
            path = Path(cal.reference)
            if not path.is_absolute() and cfg.source is not None:
                path = cfg.source.parent / path
            ref = load_reference(path)
    except (OSError, ValueError) as exc:
        raise _Fail(EXIT_CONFIG, f"reference {cal.reference!r}: {exc}") from None
    try:
        result = fit(cal.fit, cfg.plan, ref, initial=cfg.device_a)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None
    out = _out_dir(cfg)
    meta = _meta(cfg)
    plain = result.loss
    if cal.fit.weights != UNWEIGHTED:
        plain = log_rms(simulate_reference(result.params, cfg.plan), ref)
    rows = [("loss", result.loss), ("unweighted_loss", plain),
            ("evals_used", result.evals_used), ("converged", result.converged),
            ("restart", result.restart)]
    rows += [(k, v) for k, v in result.params.as_dict().items()]
    _wrote(write_text(out / "fit_result.csv", render_csv(("key", "value"), rows, meta)))
    hist = [(i + 1, f) for i, f in enumerate(result.best_so_far)]
    _wrote(write_text(out / "fit_history.csv",
                      render_csv(("eval", "best_loss"), hist, meta)))
    header = [f"{k}={v}" for k, v in meta.items()]
    header += [f"loss={result.loss!r}", f"evals_used={result.evals_used}",
               f"converged={str(result.converged).lower()}"]
    _wrote(write_params(result.params, out / cal.output_file, header))
    print(f"converged = {str(result.converged).lower()} after {result.evals_used} evaluations")
    if cal.fit.weights != UNWEIGHTED:
        print(f"unweighted loss = {plain:.6g}")
    print(f"loss = {result.loss:.6g}")
    return EXIT_OK


def format_ev(value: float) -> str:
    s = f"{value:#.4g}"
    return s.rstrip(".") if "e" not in s else s


def cmd_bandgap(args) -> int:
    try:
        lam = float(args.wavelength_nm)
    except ValueError:
        raise _Fail(EXIT_CONFIG, f"wavelength must be a number, got {args.wavelength_nm!r}")
    if not math.isfinite(lam) or lam <= 0:
        raise _Fail(EXIT_CONFIG, f"wavelength must be positive, got {args.wavelength_nm}")
    print(format_ev(optical_band_gap(lam)))
    return EXIT_OK


def _resting(w0: float, tau: float, dt: float, n: int) -> np.ndarray:
    return w0 / (1.0 + dt / tau) ** np.arange(n)


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    devices = DevicePair.fresh(cfg.device_a, cfg.device_b)
    spec = getattr(cfg.plan, cfg.simulate_sweep)
    w_start = {"A": devices.a.w, "B": devices.b.w}
    trace = run_sweep(cfg.plan, devices, spec)
    dt = spec.dwell / cfg.plan.steps_per_level
    cols = {}
    for name, dev in (("A", devices.a), ("B", devices.b)):
        if name in trace.w:
            cols[name] = (trace.resistance[name], trace.w[name])
        else:
            w = _resting(w_start[name], dev.params.tau_decay, dt, len(trace))
            r = dev.params.r_off * (dev.params.r_on / dev.params.r_off) ** w
            cols[name] = (r, w)
    out = _out_dir(cfg)
    meta = {**_meta(cfg), "sweep": cfg.simulate_sweep}
    path = write_text(out / "trace.csv", trace_csv(trace, cols["A"][0], cols["B"][0],
                                                   cols["A"][1], cols["B"][1], meta))
    _wrote(path)
    if "svg" in cfg.formats:
        _wrote(plot_csv(path, out / "trace.svg"))
    print(f"{len(trace)} steps; final R_A = {devices.a.resistance:.6g} ohm, "
          f"R_B = {devices.b.resistance:.6g} ohm")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        _wrote(plot_csv(args.csv, args.svg))
    except (OSError, ValueError, KeyError) as exc:
        raise _Fail(EXIT_CONFIG, f"cannot plot {args.csv}: {exc}") from None
    return EXIT_OK


def cmd_cascade(args) -> int:
    cfg = _load(args.config)
    sec = cfg.cascade
    if sec is None:
        raise _Fail(EXIT_CONFIG, f"{args.config}: no [cascade] section")
    try:
        cells = [PavlovCell.fresh(cfg.device_a, w_um=sec.w_um, w_cm=sec.w_cm,
                                  motor_threshold=sec.motor_threshold, stim_v=sec.stim_v,
                                  read_fraction=sec.read_fraction, dt=sec.dt)
                 for _ in range(sec.n_cells)]
        net = cascade(cells, sec.edges)
        net.duration = sec.duration
        rounds = []
        for repeat, inputs in sec.rounds:
            ext = {}
            for cell, s1, s2 in inputs:
                if not 0 <= cell < sec.n_cells:
                    raise TopologyError(f"round input names missing cell {cell}")
                ext[cell] = StimulusPattern(s1, s2, sec.duration)
            rounds.extend([ext] * repeat)
    except (ParameterError, TopologyError) as exc:
        raise _Fail(EXIT_CONFIG, str(exc)) from None
    events = net.run(rounds)
    out = _out_dir(cfg)
    text = "".join(f"# {k}={v}\n" for k, v in _meta(cfg).items()) + events_to_csv(events)
    _wrote(write_text(out / "events.csv", text))
    fired = sum(e.m_fires for e in events)
    print(f"{len(rounds)} rounds, {sec.n_cells} cells, {fired} firings")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colloid-pavlov",
                                description="Memristive Pavlovian-reflex simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
            ("condition", cmd_condition, "run the conditioning cycles and the bell test"),
            ("calibrate", cmd_calibrate, "fit device parameters to a reference trace"),
            ("simulate", cmd_simulate, "raw transient of one sweep on fresh devices"),
            ("cascade", cmd_cascade, "run a network of Pavlovian cells")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("bandgap", help="optical band gap (eV) from an absorption edge")
    sp.add_argument("wavelength_nm")
    sp.set_defaults(func=cmd_bandgap)
    sp = sub.add_parser("plot", help="render a cycles or trace CSV to SVG")
    sp.add_argument("csv")
    sp.add_argument("svg")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TopologyError, FloatingPointError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
