import math

import numpy as np
import pytest

from colloid_pavlov.circuit import (GROUND, Element, Memristor, Netlist, TransientConfig,
                                    Waveform, build_pavlov_netlist, kcl_residuals,
                                    measure_resistance, transient)
from colloid_pavlov.device import DeviceParams, default_params
from colloid_pavlov.errors import SolverError, TopologyError
from colloid_pavlov.protocol import DevicePair, ExperimentPlan, default_bell, run_sweep


def _divider():
    return Netlist("divider", [
        Element("V", "voltage_source", (1, GROUND), 10.0),
        Element("R1", "resistor", (1, 2), 1e6),
        Element("R2", "resistor", (2, GROUND), 1e6),
    ])


def test_divider_mid_node_exact():
    tr = transient(_divider(), Waveform.constant(0.0), TransientConfig(1e-3, 5e-3))
    assert np.all(np.abs(tr.node_voltages[2] - 5.0) <= 1e-9 * 5.0)


def test_rl_step_response():
    r, l, v = 100.0, 1.0, 10.0
    net = Netlist("rl", [
        Element("V", "voltage_source", (1, GROUND), v),
        Element("R", "resistor", (1, 2), r),
        Element("L", "inductor", (2, GROUND), l),
    ])
    tau = l / r
    tr = transient(net, Waveform.constant(0.0), TransientConfig(tau / 100, 3 * tau))
    exact = v / r * (1 - math.exp(-3))
    assert tr.time[-1] == pytest.approx(3 * tau)
    assert tr.branch_currents["L"][-1] == pytest.approx(exact, rel=5e-3)
    assert exact == pytest.approx(0.0950, rel=5e-3)


def test_kcl_residual_on_bell_sweep():
    plan = ExperimentPlan()
    devices = DevicePair.fresh(default_params())
    tr = run_sweep(plan, devices, plan.bell)
    assert np.all(tr.kcl_residual <= 1e-9 * tr.max_branch_current)
    net = build_pavlov_netlist(1.0, 1e-6, DeviceParams(**default_params().as_dict()),
                               default_params(), "bell")
    tr2 = transient(net, default_bell().waveform(), TransientConfig(0.025, default_bell().duration))
    recomputed = kcl_residuals(net, tr2)
    assert np.all(recomputed <= 1e-9 * tr2.max_branch_current)


def test_passivity_on_bell_sweep():
    plan = ExperimentPlan()
    net = build_pavlov_netlist(plan.line_r, plan.line_l, default_params(), default_params(),
                               "bell")
    tr = transient(net, default_bell().waveform(), TransientConfig(0.025, default_bell().duration))
    v = {GROUND: np.zeros(len(tr)), **tr.node_voltages}
    dissipated = np.zeros(len(tr))
    for e in net.elements:
        if e.kind in ("memristor", "resistor"):
            p = (v[e.nodes[0]] - v[e.nodes[1]]) * tr.branch_currents[e.name]
            assert np.all(p >= -1e-18)
            dissipated += p
    delivered = tr.drive * tr.branch_currents["V"]
    assert np.all(dissipated >= 0)
    assert np.all(delivered >= -1e-18)


def test_floating_node_is_named():
    with pytest.raises(TopologyError, match="node 2"):
        Netlist("floating", [
            Element("V", "voltage_source", (1, GROUND), 1.0),
            Element("R", "resistor", (1, GROUND), 1.0),
            Element("R2", "resistor", (2, 3), 1.0),
        ]).validate()


def test_parallel_sources_are_singular():
    net = Netlist("loop", [
        Element("V1", "voltage_source", (1, GROUND), 1.0),
        Element("V2", "voltage_source", (1, GROUND), 2.0),
    ])
    with pytest.raises(TopologyError):
        transient(net, Waveform.constant(0.0), TransientConfig(1e-3, 1e-3))


def test_kcl_violation_raises_solver_error_with_step():
    # an impossible tolerance turns the rounding-level residual into a failure
    p = default_params()
    net = build_pavlov_netlist(1.0, 1e-6, p, p, "bell")
    with pytest.raises(SolverError, match="step 0") as info:
        transient(net, Waveform.constant(5.0), TransientConfig(0.01, 0.05, solver_tol=1e-30))
    assert info.value.step == 0


def test_missing_ground_rejected():
    with pytest.raises(TopologyError):
        Netlist("noground", [Element("R", "resistor", (1, 2), 1.0)]).validate()


def test_nonpositive_values_rejected():
    with pytest.raises(ValueError):
        Element("R", "resistor", (1, GROUND), 0.0)


def test_bell_topology_counts():
    net = build_pavlov_netlist(1.0, 1e-6, default_params(), default_params(), "bell")
    assert len(net.non_ground_nodes) == 4
    assert len(net.elements) == 5


def test_food_topology_counts():
    net = build_pavlov_netlist(1.0, 1e-6, default_params(), default_params(), "food")
    assert len(net.non_ground_nodes) == 1
    assert len(net.elements) == 2


def test_bell_symmetric_under_swapping_labels():
    p = default_params()
    net = build_pavlov_netlist(1.0, 1e-6, p, p, "bell")
    kinds = [e.kind for e in net.elements]
    # reversing the chain (B at the source end) gives the same element sequence
    assert kinds[1] == kinds[4] == "memristor"
    assert net.element("A").value.params == net.element("B").value.params


def test_probe_linear_device():
    p = DeviceParams(3.8e4, 1.6e6, 4.0, 1.5, 0.0, 0.0, 1.0, 1e12, 0.0)
    dev = Memristor(p, 0.0)
    net = Netlist("p", [Element("V", "voltage_source", (1, GROUND)),
                        Element("A", "memristor", (1, GROUND), dev)])
    tr = transient(Netlist("q", [Element("V", "voltage_source", (1, GROUND), 0.1),
                                 Element("A", "memristor", (1, GROUND), dev.copy())]),
                   Waveform.constant(0.1), TransientConfig(1e-3, 1e-3))
    assert tr.branch_currents["A"][-1] == pytest.approx(62.5e-9, rel=1e-12)
    assert measure_resistance(net, "A", 0.1) == pytest.approx(1.6e6, rel=1e-12)


def test_probe_full_state():
    p = default_params()
    net = build_pavlov_netlist(1.0, 1e-6, Memristor(p, 1.0), p, "probe_a")
    assert measure_resistance(net, "A", 0.1) == pytest.approx(3.8e4, rel=1e-6)


def test_probe_above_threshold_rejected():
    p = default_params()
    net = build_pavlov_netlist(1.0, 1e-6, p, p, "probe_b")
    with pytest.raises(ValueError):
        measure_resistance(net, "B", p.v_th_pot + 0.1)


def test_repeated_probes_only_show_decay():
    p = default_params()
    dev = Memristor(p, 0.5)
    net = build_pavlov_netlist(1.0, 1e-6, p, dev, "probe_b")
    reads = [measure_resistance(net, "B", 0.1) for _ in range(10)]
    assert max(reads) / min(reads) - 1 < 1e-3
    # each read advances w by exactly one implicit decay step
    assert dev.w == pytest.approx(0.5 / (1 + 1e-3 / p.tau_decay) ** 10, rel=1e-12)


def test_sine_drive_pinched_hysteresis():
    p = DeviceParams(3.8e4, 1.6e6, 1.0, 1.0, 5.0, 5.0, 1.0, 100.0, 0.1)
    dev = Memristor(p)
    net = Netlist("m", [Element("V", "voltage_source", (1, GROUND)),
                        Element("M", "memristor", (1, GROUND), dev)])
    tr = transient(net, Waveform.sine(3.0, 1.0), TransientConfig(1e-3, 2.0))
    v, i = tr.node_voltages[1], tr.branch_currents["M"]
    near_zero = np.abs(v) <= 1e-12
    assert near_zero.any()
    assert np.all(np.abs(i[near_zero]) <= 1e-12)
    # shoelace area of the I-V loop over the second period
    sel = tr.time > 1.0
    x, y = v[sel], i[sel]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert area > 1e-8


def test_staircase_sampling_holds_each_level():
    wf = Waveform.staircase([0.0, 1.0, 2.0], 0.1)
    assert wf.sample(0.05) == 0.0
    assert wf.sample(0.1) == 0.0
    assert wf.sample(0.1000001) == 1.0
    assert wf.sample(0.3) == 2.0


def test_grid_refinement_single_sweep():
    p = default_params()
    traces = {}
    for spl in (4, 8):
        plan = ExperimentPlan(steps_per_level=spl)
        traces[spl] = run_sweep(plan, DevicePair.fresh(p), plan.bell)
    coarse, fine = traces[4], traces[8]
    # each sample holds the state at the start of its step
    t_c = coarse.time - (coarse.time[1] - coarse.time[0])
    t_f = fine.time - (fine.time[1] - fine.time[0])
    fine_on_coarse = np.interp(t_c, t_f, fine.resistance["B"])
    assert np.max(np.abs(fine_on_coarse / coarse.resistance["B"] - 1)) <= 0.01
