"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import os
import time

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from colloid_pavlov import cli
from colloid_pavlov.calibrate import FitConfig, fit, reference_from_params, table1
from colloid_pavlov.circuit import (GROUND, Element, Memristor, Netlist, TransientConfig,
                                    Waveform, kcl_residuals, transient)
from colloid_pavlov.device import DeviceParams, MemristorState, default_params, step_state
from colloid_pavlov.errors import TopologyError
from colloid_pavlov.network import PavlovCell, StimulusPattern, cascade, stimulate
from colloid_pavlov.protocol import (DevicePair, ExperimentPlan, probe, run_experiment,
                                     run_sweep)

from conftest import CONFIGS


def test_criterion_01_band_gap(capsys, record_criterion):
    code = cli.main(["bandgap", "370"])
    value = float(capsys.readouterr().out)
    ok = code == 0 and abs(value - 3.35) <= 0.01
    record_criterion(1, ok, f"bandgap 370 -> {value} eV")
    assert ok


def _default_run():
    t0 = time.perf_counter()
    run = run_experiment(ExperimentPlan(), DevicePair.fresh(default_params()))
    return run, time.perf_counter() - t0


def test_criterion_02_table_reproduction(record_criterion):
    run, elapsed = _default_run()
    ref = table1()
    bell = np.array([r.r_b_after_bell for r in run.records])
    rms = float(np.sqrt(np.mean(np.log10(bell / np.array(ref.after_bell)) ** 2)))
    base_ok = abs(run.baseline_r_b / 1.6e6 - 1) <= 0.10
    final_ok = 30e3 <= bell[-1] <= 50e3
    ok = rms <= 0.15 and base_ok and final_ok and elapsed < 30
    record_criterion(2, ok, f"after-bell RMS {rms:.4f}, baseline {run.baseline_r_b:.4g} ohm, "
                            f"final {bell[-1]:.4g} ohm, {elapsed:.2f} s")
    assert ok


def test_criterion_03_trajectory_shape(record_criterion):
    run, _ = _default_run()
    bell = np.array([r.r_b_after_bell for r in run.records])
    food = np.array([r.r_b_after_food for r in run.records])
    early = bool(np.all(np.diff(bell[:5]) <= 0))
    plateau = float(np.max(np.abs(np.diff(bell[5:])) / bell[5:-1]))
    above = bool(np.all(food > bell))
    ok = early and plateau <= 0.05 and above
    record_criterion(3, ok, f"cycles 1-5 non-increasing={early}, plateau step {plateau:.2%}, "
                            f"food above bell in every cycle={above}")
    assert ok


def test_criterion_04_conditioned_reflex(record_criterion):
    run, _ = _default_run()
    plan = ExperimentPlan()
    fresh = probe(plan, DevicePair.fresh(default_params()), "B")
    ok = run.bell_test.salivation and fresh >= 10 * plan.salivation_threshold
    record_criterion(4, ok, f"bell-test R_B {run.bell_test.r_b:.4g} ohm, "
                            f"fresh R_B {fresh:.4g} ohm")
    assert ok


def test_criterion_05_pinched_hysteresis(record_criterion):
    p = default_params()
    dev = Memristor(p, 0.3)
    net = Netlist("sine", [Element("V", "voltage_source", (1, GROUND)),
                           Element("M", "memristor", (1, GROUND), dev)])
    amp = 2.0 * p.v_th_pot
    tr = transient(net, Waveform.sine(amp, 1.0), TransientConfig(5e-4, 2.0))
    v, i = tr.node_voltages[1], tr.branch_currents["M"]
    zero = np.abs(v) <= 1e-12
    pinched = bool(zero.any() and np.all(np.abs(i[zero]) <= 1e-12))
    # first period; depression outweighs potentiation, so later loops narrow
    sel = tr.time <= 1.0
    x, y = v[sel], i[sel]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    rel_area = area / (np.ptp(x) * np.ptp(y))
    ok = pinched and rel_area > 1e-3
    record_criterion(5, ok, f"pinched={pinched} at {int(zero.sum())} zero crossings, "
                            f"loop area {area:.3g} V*A ({rel_area:.2%} of bounding box)")
    assert ok


def test_criterion_06_solver_correctness(record_criterion):
    div = Netlist("divider", [Element("V", "voltage_source", (1, GROUND), 10.0),
                              Element("R1", "resistor", (1, 2), 1e6),
                              Element("R2", "resistor", (2, GROUND), 1e6)])
    v_mid = transient(div, Waveform.constant(0.0), TransientConfig(1e-3, 1e-3)).node_voltages[2][-1]
    div_err = abs(v_mid - 5.0) / 5.0

    rl = Netlist("rl", [Element("V", "voltage_source", (1, GROUND), 10.0),
                        Element("R", "resistor", (1, 2), 100.0),
                        Element("L", "inductor", (2, GROUND), 1.0)])
    tau = 0.01
    i_end = transient(rl, Waveform.constant(0.0),
                      TransientConfig(tau / 100, 3 * tau)).branch_currents["L"][-1]
    rl_err = abs(i_end / (0.1 * (1 - math.exp(-3))) - 1)

    # every accepted step of the default experiment
    plan = ExperimentPlan()
    dev = DevicePair.fresh(default_params())
    worst = 0.0
    kcl_ok = True
    sweeps = [plan.bell, plan.food] * plan.n_cycles + [plan.bell_test]
    for spec in sweeps:
        tr = run_sweep(plan, dev, spec)
        kcl_ok &= bool(np.all(tr.kcl_residual <= 1e-9 * tr.max_branch_current))
        live = tr.max_branch_current > 0
        worst = max(worst, float(np.max(tr.kcl_residual[live] / tr.max_branch_current[live])))

    finals = []
    for spl in (plan.steps_per_level, 2 * plan.steps_per_level):
        run = run_experiment(ExperimentPlan(steps_per_level=spl),
                             DevicePair.fresh(default_params()))
        finals.append((run.records[-1].r_b_after_bell, run.bell_test.r_b))
    refine = max(abs(finals[1][k] / finals[0][k] - 1) for k in range(2))

    ok = div_err <= 1e-9 and rl_err <= 5e-3 and kcl_ok and refine <= 0.01
    record_criterion(6, ok, f"divider err {div_err:.1e}, RL err {rl_err:.2%}, "
                            f"worst KCL {worst:.1e}, dt/2 final R_B change {refine:.3%}")
    assert ok


_bounded = {"cases": 0, "ok": True}


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(1e-6, 5.0)), min_size=1,
                max_size=40), st.floats(0.0, 1.0))
def _check_bounded(drive, w0):
    p = default_params().replace(k_pot=50.0, k_dep=50.0)
    s = MemristorState(w0)
    for v, dt in drive:
        s = step_state(p, s, v, dt)
        if not 0.0 <= s.w <= 1.0:
            _bounded["ok"] = False
    _bounded["cases"] += 1


def test_criterion_07_device_kinetics(record_criterion):
    p = default_params().replace(tau_decay=100.0)
    s = MemristorState(0.5)
    for _ in range(1000):
        s = step_state(p, s, 0.0, 0.1)
    decay_err = abs(s.w - 0.5 * math.exp(-1))

    rng = np.random.default_rng(0)
    lim = min(p.v_th_pot, p.v_th_dep)
    a = b = MemristorState(0.7)
    same = True
    for v in rng.uniform(-lim, lim, 500) * 0.999:
        a, b = step_state(p, a, v, 0.05), step_state(p, b, 0.0, 0.05)
        same &= a.w == b.w

    _check_bounded()
    ok = decay_err <= 1e-3 and same and _bounded["ok"] and _bounded["cases"] >= 1000
    record_criterion(7, ok, f"decay err {decay_err:.1e}, sub-threshold identical={same}, "
                            f"bounded over {_bounded['cases']} random drives")
    assert ok


def test_criterion_08_calibration_integrity(record_criterion):
    plan = ExperimentPlan()
    truth = default_params().replace(k_pot=0.15, k_dep=2.0, tau_decay=5000.0)
    ref = reference_from_params(truth, plan)
    cfg = FitConfig(free_params=("k_pot", "k_dep", "tau_decay"), max_evals=400, n_restarts=1)
    t0 = time.perf_counter()
    res = fit(cfg, plan, ref, default_params())
    elapsed = time.perf_counter() - t0
    errs = {k: abs(math.log(getattr(res.params, k) / getattr(truth, k)))
            for k in cfg.free_params}
    monotone = bool(np.all(np.diff(res.best_so_far) <= 0))
    again = fit(cfg, plan, ref, default_params())
    ok = max(errs.values()) <= 0.05 and elapsed < 60 and monotone and again == res
    record_criterion(8, ok, f"worst log error {max(errs.values()):.1e}, {elapsed:.1f} s, "
                            f"monotone={monotone}, repeat identical={again == res}")
    assert ok


def test_criterion_09_protocol_invariance(tmp_path, monkeypatch, record_criterion):
    outputs = {}
    for tag, name in (("a1", "condition.toml"), ("a2", "condition.toml"),
                      ("n", "condition-nitrogen.toml")):
        d = tmp_path / tag
        monkeypatch.setenv(cli.OUT_ENV, str(d))
        assert cli.main(["condition", os.path.join(CONFIGS, name)]) == 0
        outputs[tag] = {p.name: p.read_bytes() for p in sorted(d.iterdir())}
    repeat = outputs["a1"] == outputs["a2"]
    env = outputs["a1"] == outputs["n"]
    ok = repeat and env
    record_criterion(9, ok, f"repeat identical={repeat}, ambient vs nitrogen identical={env} "
                            f"({len(outputs['a1'])} files)")
    assert ok


def test_criterion_10_network_semantics(record_criterion):
    s1 = StimulusPattern(True, False)
    s2 = StimulusPattern(False, True)
    both = StimulusPattern(True, True)
    cell = PavlovCell.fresh()
    naive_s2 = stimulate(cell, s2).m_fires
    naive_s1 = stimulate(cell, s1).m_fires
    reps = None
    for n in range(1, 101):
        cell = stimulate(cell, both).cell
        if stimulate(cell, s2).m_fires:
            reps = n
            break
    try:
        cascade([PavlovCell.fresh(), PavlovCell.fresh()], [(0, 1, "drives_s1"),
                                                          (1, 0, "drives_s1")])
        rejects = False
    except TopologyError:
        rejects = True
    ok = not naive_s2 and naive_s1 and reps is not None and rejects
    record_criterion(10, ok, f"fresh s2 fires={naive_s2}, fresh s1 fires={naive_s1}, "
                             f"s2 fires after {reps} pairings, cycle rejected={rejects}")
    assert ok
