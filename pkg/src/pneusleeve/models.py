"""Actuator geometry and static torque models.

Torque of a modular fabric bending actuator is described by two empirical
relations, both characterized at a B-B' (twist) angle of zero:

* torque versus bend angle at the 80 kPa reference pressure,
  ``T_P(A) = a*exp(b*A) + c*exp(d*A)`` with ``A`` in degrees;
* torque versus pressure at a fixed angle, ``T_A(P) = f*P + g``.

Because torque is linear in pressure, the two combine into
``T(A, P) = (P / 80) * T_P(A)``.  The combined relation is sometimes printed
as ``80*P / T_P(A)``; that form is not dimensionally consistent with the
torque-angle relation and is not used here.

Angles follow the test-platform convention: ``A = 0`` is fully folded,
``A = 180`` is straight and ``A = 270`` is hyper-extended.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, DomainError

REFERENCE_PRESSURE_KPA = 80.0
MAX_PRESSURE_KPA = 150.0
AA_RANGE_DEG = (0.0, 270.0)
BB_RANGE_DEG = (0.0, 45.0)

# Below this pressure the unloaded actuator has not curled fully.
FREE_BEND_SATURATION_KPA = 10.0
FREE_BEND_MAX_DEG = 360.0
# B-B' torque never exceeded the platform's 0.5 N-m detection floor.
OFF_AXIS_DETECTION_FLOOR_NM = 0.5


@dataclass(frozen=True)
class ModuleSpec:
    label: str
    length_mm: float
    width_mm: float

    def __post_init__(self):
        if not (self.length_mm > 0 and self.width_mm > 0):
            raise DomainError(f"module {self.label!r} needs positive dimensions")


MODULES = {
    "A": ModuleSpec("A", 65.0, 55.0),
    "B": ModuleSpec("B", 90.0, 55.0),
    "C": ModuleSpec("C", 90.0, 65.0),
}


@dataclass(frozen=True)
class ActuatorVariant:
    """Module patterning of one actuator plus its measured torque anchors.

    The anchors are blocked torques at 80 kPa: ``peak_torque_nm`` at A = 0,
    ``torque_90_nm`` at A = 90 and ``plateau_torque_nm``, the effectively
    constant output over A = 180..270.
    """

    name: str
    pattern: tuple[str, ...]
    peak_torque_nm: float
    torque_90_nm: float
    plateau_torque_nm: float
    spacing_mm: float = 25.0
    modules: dict[str, ModuleSpec] = field(default_factory=lambda: dict(MODULES),
                                           compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(self.pattern))
        missing = set(self.pattern) - set(self.modules)
        if missing:
            raise DomainError(f"unknown module labels {sorted(missing)}")
        if self.spacing_mm <= 0:
            raise DomainError("module spacing must be positive")
        anchors = (self.peak_torque_nm, self.torque_90_nm, self.plateau_torque_nm)
        if not all(np.isfinite(anchors)) or min(anchors) <= 0:
            raise DomainError(f"variant {self.name}: torque anchors must be positive")

    @property
    def module_specs(self) -> list[ModuleSpec]:
        return [self.modules[label] for label in self.pattern]


VARIANTS = {
    "D1": ActuatorVariant("D1", tuple("AAAAAAAA"), 10.24, 1.27, 0.84),
    "D2": ActuatorVariant("D2", tuple("ABABABAB"), 11.15, 4.44, 1.54),
    "D3": ActuatorVariant("D3", tuple("ACACACAC"), 15.54, 4.66, 1.80),
}


def get_variant(name: str) -> ActuatorVariant:
    try:
        return VARIANTS[name.upper()]
    except KeyError:
        raise DomainError(f"unknown actuator variant {name!r}; "
                          f"known: {', '.join(VARIANTS)}") from None


@dataclass(frozen=True)
class TorqueModel:
    """Parameters of the torque-angle and torque-pressure relations.

    ``b`` and ``d`` are per degree.  The torque-angle relation is symmetric
    under swapping ``(a, b)`` with ``(c, d)``; instances are stored with
    ``b <= d``.  ``f`` defaults to ``T_P(90) / 80``, i.e. the pressure slope
    at the angle where the pressure sweep is taken.
    """

    a: float
    b: float
    c: float
    d: float
    f: float | None = None
    g: float = 0.0
    reference_pressure_kpa: float = REFERENCE_PRESSURE_KPA

    def __post_init__(self):
        if not np.all(np.isfinite([self.a, self.b, self.c, self.d, self.g])):
            raise DomainError("torque model parameters must be finite")
        if self.b > self.d:
            a, b, c, d = self.c, self.d, self.a, self.b
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
            object.__setattr__(self, "c", c)
            object.__setattr__(self, "d", d)
        if self.f is None:
            t90 = self.a * np.exp(self.b * 90.0) + self.c * np.exp(self.d * 90.0)
            object.__setattr__(self, "f", float(t90) / self.reference_pressure_kpa)
        if self.reference_pressure_kpa <= 0:
            raise DomainError("reference pressure must be positive")

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class AngleConvention:
    aa_angle_deg: float
    bb_angle_deg: float = 0.0

    def __post_init__(self):
        _check_range(self.aa_angle_deg, AA_RANGE_DEG, "A-A' angle")
        _check_range(self.bb_angle_deg, BB_RANGE_DEG, "B-B' angle")


def _check_range(value, bounds, what):
    arr = np.asarray(value, dtype=float)
    lo, hi = bounds
    if not np.all(np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > hi):
        raise DomainError(f"{what} must lie in [{lo:g}, {hi:g}], got {value!r}")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _exp_pair(params, angle):
    a, b, c, d = params
    return a * np.exp(b * angle) + c * np.exp(d * angle)


def torque_at_reference(model: TorqueModel, aa_angle):
    """Torque at the reference pressure for A-A' angle(s) in degrees."""
    angle = _check_range(aa_angle, AA_RANGE_DEG, "A-A' angle")
    return _scalar_or_array(_exp_pair(model.params, angle))


def torque_at_pressure(model: TorqueModel, pressure_kpa):
    """Linear torque-pressure relation at the angle ``f`` and ``g`` belong to."""
    p = np.asarray(pressure_kpa, dtype=float)
    if np.any(p < 0):
        raise DomainError(f"pressure must be non-negative, got {pressure_kpa!r}")
    p = _check_range(p, (0.0, MAX_PRESSURE_KPA), "pressure")
    return _scalar_or_array(model.f * p + model.g)


def predict_torque(model: TorqueModel, aa_angle, pressure_kpa):
    """Torque at any angle and pressure: ``(P / P_ref) * T_P(A)``."""
    p = _check_range(pressure_kpa, (0.0, MAX_PRESSURE_KPA), "pressure")
    t_ref = np.asarray(torque_at_reference(model, aa_angle))
    return _scalar_or_array(p / model.reference_pressure_kpa * t_ref)


def free_bend_angle(pressure_kpa: float) -> float:
    """Bend angle of the unloaded, free-hanging actuator.

    Full curl is reached at 10 kPa and further pressure leaves the pose
    unchanged.  The sub-10 kPa range was not measured; it is interpolated
    linearly from the flat, unpressurized state.
    """
    p = float(pressure_kpa)
    if not np.isfinite(p) or p < 0:
        raise DomainError(f"pressure must be non-negative, got {pressure_kpa!r}")
    if p >= FREE_BEND_SATURATION_KPA:
        return FREE_BEND_MAX_DEG
    return FREE_BEND_MAX_DEG * p / FREE_BEND_SATURATION_KPA


def off_axis_torque(model: TorqueModel, aa_angle, bb_angle, pressure_kpa) -> float:
    """Torque about the B-B' axis; always zero.

    Measured B-B' torques stayed below the platform's detection floor over
    the whole tested range, so they are modelled as absent.
    """
    _check_range(aa_angle, AA_RANGE_DEG, "A-A' angle")
    _check_range(bb_angle, BB_RANGE_DEG, "B-B' angle")
    _check_range(pressure_kpa, (0.0, MAX_PRESSURE_KPA), "pressure")
    return 0.0


AttenuationFn = Callable[[float], float]


def identity_attenuation(bb_angle: float) -> float:
    return 1.0


def aa_torque_with_bb(model: TorqueModel, aa_angle: float, bb_angle: float,
                      pressure_kpa: float,
                      attenuation: AttenuationFn = identity_attenuation) -> float:
    """A-A' torque when the actuator is also twisted about B-B'.

    ``attenuation`` maps the B-B' angle to a factor in [0, 1] and must return
    exactly 1 at zero twist.
    """
    _check_range(bb_angle, BB_RANGE_DEG, "B-B' angle")
    at_zero = float(attenuation(0.0))
    if at_zero != 1.0:
        raise ContractViolation(f"attenuation(0) must be 1, got {at_zero}")
    factor = float(attenuation(float(bb_angle)))
    if not 0.0 <= factor <= 1.0:
        raise ContractViolation(
            f"attenuation({bb_angle}) = {factor} is outside [0, 1]")
    return float(predict_torque(model, aa_angle, pressure_kpa)) * factor
