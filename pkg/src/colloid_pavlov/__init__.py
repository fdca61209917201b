"""Colloid-memristor Pavlovian-reflex simulator and calibration harness."""

__version__ = "0.1.0"

from .circuit import (Element, Memristor, Netlist, Trace, TransientConfig, Waveform,
                      build_pavlov_netlist, measure_resistance, transient)
from .device import (DeviceParams, MemristorState, default_params, load_params,
                     optical_band_gap, resistance, state_rate, step_state)
from .errors import ConfigError, ParameterError, SolverError, TopologyError
from .network import CascadeNetwork, PavlovCell, StimulusPattern, cascade, stimulate
from .protocol import (DevicePair, ExperimentPlan, SweepSpec, detect_salivation,
                       run_conditioning, run_experiment, test_bell_only)

__all__ = [
    "CascadeNetwork", "ConfigError", "DevicePair", "DeviceParams", "Element",
    "ExperimentPlan", "Memristor", "MemristorState", "Netlist", "ParameterError",
    "PavlovCell", "SolverError", "StimulusPattern", "SweepSpec", "TopologyError", "Trace",
    "TransientConfig", "Waveform", "build_pavlov_netlist", "cascade", "default_params",
    "detect_salivation", "load_params", "measure_resistance", "optical_band_gap",
    "resistance", "run_conditioning", "run_experiment", "state_rate", "step_state",
    "stimulate", "test_bell_only", "transient",
]
