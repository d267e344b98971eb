"""Pressure regulation and first-order actuator dynamics.

The regulator is modelled behaviourally: it quantizes requests to its
resolution, clamps them to its operating range and can vent to 0 kPa.
Actuator response to a pressure command is first order with separate
inflation and deflation time constants.  Flow limiting and regulator
bandwidth are not separate states; they are folded into the time constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, RiseTimeNotFound
from .models import ActuatorVariant, free_bend_angle

LN9 = math.log(9.0)

# 10-90 % rise times measured on the weighted step-response rig, seconds.
RISE_TIMES_S = {
    "D1": {"inflate": 4.72, "deflate": 3.40},
    "D2": {"inflate": 2.12, "deflate": 4.42},
    "D3": {"inflate": 3.62, "deflate": 1.82},
}


@dataclass(frozen=True)
class RegulatorSpec:
    min_kpa: float = 10.0
    max_kpa: float = 150.0
    resolution_kpa: float = 1.0
    bandwidth_hz: float = 10.0
    supply_kpa: float = 250.0
    flow_limit_slpm: float = 60.0
    vent_supported: bool = True

    def __post_init__(self):
        if not self.min_kpa < self.max_kpa:
            raise DomainError("regulator min must be below max")
        if self.resolution_kpa <= 0 or self.bandwidth_hz <= 0:
            raise DomainError("regulator resolution and bandwidth must be positive")


DEFAULT_REGULATOR = RegulatorSpec()


def regulator_command(spec: RegulatorSpec, requested_kpa: float) -> float:
    """Pressure the regulator actually delivers for a request.

    Zero vents to atmosphere.  Anything else is rounded half-up to the
    resolution and clamped to the operating range, so small nonzero requests
    come out at the minimum.
    """
    req = float(requested_kpa)
    if not math.isfinite(req) or req < 0:
        raise DomainError(f"requested pressure must be non-negative, got {requested_kpa!r}")
    if req == 0.0 and spec.vent_supported:
        return 0.0
    steps = math.floor(req / spec.resolution_kpa + 0.5)
    quantized = steps * spec.resolution_kpa
    return float(min(max(quantized, spec.min_kpa), spec.max_kpa))


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled signal starting at ``t0``."""

    dt: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"sample step must be positive, got {self.dt!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise DomainError("waveform values must be one-dimensional")
        object.__setattr__(self, "values", vals)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def __len__(self):
        return self.values.size

    def at(self, t: float) -> float:
        """Value of the sample at or just before time ``t``."""
        i = int(math.floor((t - self.t0) / self.dt + 1e-9))
        if not 0 <= i < self.values.size:
            raise DomainError(f"t={t} is outside the waveform")
        return float(self.values[i])


@dataclass(frozen=True)
class ActuatorDynamics:
    tau_inflate_s: float
    tau_deflate_s: float
    steady_angle_fn: Callable[[float], float] = field(default=free_bend_angle,
                                                      compare=False)

    def __post_init__(self):
        if not (self.tau_inflate_s > 0 and self.tau_deflate_s > 0):
            raise DomainError("time constants must be positive")


def tau_from_rise_time(rise_s: float) -> float:
    """First-order time constant from a 10-90 % rise time (``t_r / ln 9``)."""
    if not (math.isfinite(rise_s) and rise_s > 0):
        raise DomainError(f"rise time must be positive, got {rise_s!r}")
    return rise_s / LN9


def dynamics_for(variant, steady_angle_fn=free_bend_angle) -> ActuatorDynamics:
    """Time constants of a catalogued variant, from its measured rise times."""
    name = variant.name if isinstance(variant, ActuatorVariant) else str(variant)
    try:
        rise = RISE_TIMES_S[name.upper()]
    except KeyError:
        raise DomainError(f"no measured rise times for variant {name!r}") from None
    return ActuatorDynamics(tau_from_rise_time(rise["inflate"]),
                            tau_from_rise_time(rise["deflate"]),
                            steady_angle_fn)


def first_order_step(y, target, dt, tau_inflate, tau_deflate):
    """Exact update of ``dy/dt = (target - y)/tau`` over one held step.

    The time constant is the inflation one while the output is rising toward
    its target, the deflation one otherwise.
    """
    tau = tau_inflate if target > y else tau_deflate
    return target + (y - target) * math.exp(-dt / tau)


def simulate_first_order(dyn: ActuatorDynamics, pressure: Waveform,
                         y0: float = 0.0) -> Waveform:
    """Bend-angle response to a pressure waveform.

    The input is treated as held between samples, so the exponential update
    is exact and the output cannot overshoot its target.
    """
    if pressure.dt <= 0:
        raise DomainError("dt must be positive")
    n = len(pressure)
    out = np.empty(n)
    if n == 0:
        return Waveform(pressure.dt, out, pressure.t0)
    targets = [float(dyn.steady_angle_fn(p)) for p in pressure.values]
    y = float(y0)
    out[0] = y
    for k in range(n - 1):
        y = first_order_step(y, targets[k], pressure.dt,
                             dyn.tau_inflate_s, dyn.tau_deflate_s)
        out[k + 1] = y
    return Waveform(pressure.dt, out, pressure.t0)


def square_wave(period_s: float, low_kpa: float, high_kpa: float,
                duration_s: float, dt_s: float) -> Waveform:
    """Square wave that starts with its high (pressurizing) half-period.

    Samples run from 0 to ``duration_s`` inclusive.
    """
    for name, v in (("period", period_s), ("duration", duration_s), ("dt", dt_s)):
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive, got {v!r}")
    if low_kpa > high_kpa:
        raise DomainError("low level must not exceed the high level")
    if low_kpa < 0:
        raise DomainError("pressures must be non-negative")
    n = int(round(duration_s / dt_s)) + 1
    t = dt_s * np.arange(n)
    # tolerance keeps exact half-period boundaries on the low side
    phase = np.mod(t + 1e-9 * dt_s, period_s)
    values = np.where(phase < period_s / 2.0, float(high_kpa), float(low_kpa))
    return Waveform(dt_s, values)


def step_input(level_kpa: float, duration_s: float, dt_s: float) -> Waveform:
    """Constant ``level_kpa`` from t = 0 to ``duration_s`` inclusive."""
    n = int(round(duration_s / dt_s)) + 1
    return Waveform(dt_s, np.full(n, float(level_kpa)))


def rise_time(trace: Waveform, direction: str = "inflate") -> float:
    """10-90 % rise time of the first monotone transition in ``trace``.

    For ``inflate`` the first rising run is used, for ``deflate`` the first
    falling run.  The transition amplitude is the change over that run and
    crossing times are linearly interpolated between samples.  A transition
    completed within a single sample interval is reported as 0.
    """
    if direction not in ("inflate", "deflate"):
        raise DomainError("direction must be 'inflate' or 'deflate'")
    y = np.asarray(trace.values, dtype=float)
    if direction == "deflate":
        y = -y
    dy = np.diff(y)
    rising = np.flatnonzero(dy > 0)
    if rising.size == 0:
        raise RiseTimeNotFound(f"no {direction} transition in trace")
    s = int(rising[0])
    e = s + 1
    while e < y.size - 1 and dy[e] >= 0:
        e += 1
    while e > s + 1 and dy[e - 1] == 0:
        e -= 1
    amplitude = y[e] - y[s]
    if not amplitude > 0:
        raise RiseTimeNotFound(f"no {direction} transition in trace")
    if e == s + 1:
        return 0.0
    seg = y[s:e + 1]
    t = trace.dt * np.arange(seg.size)
    lo_level = y[s] + 0.1 * amplitude
    hi_level = y[s] + 0.9 * amplitude
    return float(_crossing(t, seg, hi_level) - _crossing(t, seg, lo_level))


def _crossing(t, seg, level):
    # seg is non-decreasing; first sample at or above level
    k = int(np.argmax(seg >= level))
    if k == 0:
        return float(t[0])
    y0, y1 = seg[k - 1], seg[k]
    frac = (level - y0) / (y1 - y0)
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))
