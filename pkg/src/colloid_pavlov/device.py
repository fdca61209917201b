"""Voltage-controlled memristor model of a single colloid sample.

The internal state ``w`` lives in [0, 1]; ``w = 0`` is the high-resistance
(untrained) limit ``r_off`` and ``w = 1`` the low-resistance limit ``r_on``.
Resistance is interpolated in log space so the two decades between the
limits are covered evenly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numba

from .errors import ParameterError

try:  # pragma: no cover - exercised depending on interpreter
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

DEFAULTS_FILE = Path(__file__).parent / "data" / "default-colloid.toml"

#: hc expressed in eV*nm, rounded as is customary for band-gap estimates.
HC_EV_NM = 1240.0


@dataclass(frozen=True)
class DeviceParams:
    r_on: float
    r_off: float
    v_th_pot: float
    v_th_dep: float
    k_pot: float
    k_dep: float
    alpha: float
    tau_decay: float
    w_init: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{f.name} must be a finite number, got {value!r}")
        if not 0 < self.r_on < self.r_off:
            raise ParameterError(
                f"need 0 < r_on < r_off, got r_on={self.r_on}, r_off={self.r_off}")
        if self.v_th_pot <= 0 or self.v_th_dep <= 0:
            raise ParameterError("thresholds v_th_pot and v_th_dep must be > 0")
        if self.k_pot < 0 or self.k_dep < 0:
            raise ParameterError("rates k_pot and k_dep must be >= 0")
        if self.alpha < 1:
            raise ParameterError(f"alpha must be >= 1, got {self.alpha}")
        if self.tau_decay <= 0:
            raise ParameterError(f"tau_decay must be > 0, got {self.tau_decay}")
        if not 0 <= self.w_init <= 1:
            raise ParameterError(f"w_init must lie in [0, 1], got {self.w_init}")

    def replace(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "DeviceParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown device parameter(s): {', '.join(sorted(unknown))}")
        missing = names - set(data)
        if missing:
            raise ParameterError(f"missing device parameter(s): {', '.join(sorted(missing))}")
        return cls(**{k: float(data[k]) for k in names})


@dataclass(frozen=True)
class MemristorState:
    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ParameterError(f"state w must lie in [0, 1], got {self.w}")


PARAM_NAMES = tuple(f.name for f in fields(DeviceParams))


def load_params(path: str | Path) -> DeviceParams:
    """Read a device defaults file (a ``[device]`` TOML table)."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        table = doc["device"]
    except KeyError:
        raise ParameterError(f"{path}: no [device] table") from None
    return DeviceParams.from_mapping(table)


def default_params() -> DeviceParams:
    """The shipped calibrated parameter set."""
    return load_params(DEFAULTS_FILE)


# Scalar kernels. These are shared by the public API below and by the
# compiled transient loop in ``circuit``, so there is one definition of the
# device physics.

@numba.njit(cache=True)
def _resistance(r_on, r_off, w):
    return r_off * (r_on / r_off) ** w


@numba.njit(cache=True)
def _drive(v, v_th_pot, v_th_dep, k_pot, k_dep, alpha):
    # net (potentiation - depression) drive, before the window
    if v >= v_th_pot:
        return k_pot * (v / v_th_pot - 1.0) ** alpha
    if v <= -v_th_dep:
        return -k_dep * (-v / v_th_dep - 1.0) ** alpha
    return 0.0


@numba.njit(cache=True)
def _window(w):
    x = 2.0 * w - 1.0
    return 1.0 - x * x


@numba.njit(cache=True)
def _advance(w, v, dt, v_th_pot, v_th_dep, k_pot, k_dep, alpha, tau_decay):
    # explicit drive, implicit decay, then clamp
    g = _drive(v, v_th_pot, v_th_dep, k_pot, k_dep, alpha)
    w_new = (w + dt * g * _window(w)) / (1.0 + dt / tau_decay)
    if w_new < 0.0:
        return 0.0
    if w_new > 1.0:
        return 1.0
    return w_new


def _check_w(w: float) -> float:
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise ParameterError(f"state w must lie in [0, 1], got {w}")
    return w


def resistance(params: DeviceParams, w: float) -> float:
    """Resistance in ohms at state ``w``: ``r_off * (r_on / r_off) ** w``."""
    return float(_resistance(params.r_on, params.r_off, _check_w(w)))


def state_rate(params: DeviceParams, w: float, v: float) -> float:
    """Right-hand side dw/dt of the state equation at terminal voltage ``v``."""
    w = _check_w(w)
    g = _drive(float(v), params.v_th_pot, params.v_th_dep,
               params.k_pot, params.k_dep, params.alpha)
    return float(g * _window(w) - w / params.tau_decay)


def step_state(params: DeviceParams, state: MemristorState, v: float,
               dt: float) -> MemristorState:
    """Advance the state by one step of length ``dt`` under constant ``v``.

    First-order and semi-implicit: the drive term uses the current state, the
    decay term the new one, which keeps ``w`` bounded for any ``dt``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    w = _advance(state.w, float(v), float(dt), params.v_th_pot, params.v_th_dep,
                 params.k_pot, params.k_dep, params.alpha, params.tau_decay)
    return MemristorState(float(w))


def optical_band_gap(lambda_nm: float) -> float:
    """Band gap in eV from the wavelength of maximum absorption in nm."""
    lambda_nm = float(lambda_nm)
    if not lambda_nm > 0 or not math.isfinite(lambda_nm):
        raise ValueError(f"wavelength must be a positive number of nm, got {lambda_nm}")
    return HC_EV_NM / lambda_nm
