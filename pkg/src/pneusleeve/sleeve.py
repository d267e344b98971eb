"""Two-DOF shoulder sleeve: pose mapping, antagonistic allocation, statics.

Four actuators form two antagonistic pairs.  The elevation pair (elevation
below the arm, depression above it) drives the angle of elevation (AoE); the
steering pair drives the plane of elevation (PoE).  Each actuator's A-A'
angle is an affine function of the anatomical angle it spans:

    elevation        A = 180 - AoE
    depression       A = 180 + AoE
    steer_anterior   A = 180 + PoE
    steer_posterior  A = 180 - PoE

so the elevation actuator folds (and strengthens) as the arm rises and the
other three sit in the flat 180-270 deg band at the neutral pose.  An
actuator pushes toward the direction that folds it, hence ``torque_sign`` is
the negated map slope.

Arm motion is quasi-static: the limb is treated as heavily damped, moving at
a rate proportional to the net torque, and settles where actuator torque
balances gravity.  No inertial dynamics are modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityExceeded, DomainError, UndefinedFractionError
from .fitting import reference_model
from .models import (AA_RANGE_DEG, REFERENCE_PRESSURE_KPA, ActuatorVariant,
                     AngleConvention, TorqueModel, get_variant, predict_torque,
                     torque_at_reference)
from .pneumatics import (DEFAULT_REGULATOR, ActuatorDynamics, RegulatorSpec,
                         dynamics_for, first_order_step, regulator_command)

GRAVITY = 9.81
DEFAULT_GRAVITY_TORQUE_90_NM = 18.06
DEFAULT_ARM_MASS_KG = 3.5
DEFAULT_COM_LENGTH_M = DEFAULT_GRAVITY_TORQUE_90_NM / (DEFAULT_ARM_MASS_KG * GRAVITY)
# continuous pressure cap for anything worn on the body
SAFE_PRESSURE_KPA = 80.0

PLACEMENTS = ("elevation", "depression", "steer_anterior", "steer_posterior")


@dataclass(frozen=True)
class RangeOfMotion:
    aoe_deg: tuple[float, float] = (0.0, 180.0)
    poe_deg: tuple[float, float] = (-90.0, 135.0)

    def contains(self, pose: "ShoulderPose") -> bool:
        return (self.aoe_deg[0] <= pose.aoe_deg <= self.aoe_deg[1]
                and self.poe_deg[0] <= pose.poe_deg <= self.poe_deg[1])

    def check(self, pose: "ShoulderPose"):
        if not self.contains(pose):
            raise DomainError(
                f"pose (AoE={pose.aoe_deg:g}, PoE={pose.poe_deg:g}) is outside "
                f"the range of motion AoE {self.aoe_deg}, PoE {self.poe_deg}")

    def clamp(self, aoe, poe):
        return (min(max(aoe, self.aoe_deg[0]), self.aoe_deg[1]),
                min(max(poe, self.poe_deg[0]), self.poe_deg[1]))


DEFAULT_ROM = RangeOfMotion()


@dataclass(frozen=True)
class ShoulderPose:
    aoe_deg: float
    poe_deg: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.aoe_deg) and math.isfinite(self.poe_deg)):
            raise DomainError("pose angles must be finite")


NEUTRAL = ShoulderPose(0.0, 0.0)


@dataclass(frozen=True)
class ActuatorPlacement:
    """One actuator on the sleeve.

    ``driving`` names the anatomical angle (``"aoe"`` or ``"poe"``) that sets
    the actuator's A-A' angle through ``offset_deg + sign * angle``.
    """

    variant: ActuatorVariant
    driving: str
    offset_deg: float
    sign: float
    axis: str
    torque_sign: float
    model: TorqueModel | None = None
    dynamics: ActuatorDynamics | None = None

    def __post_init__(self):
        if self.driving not in ("aoe", "poe"):
            raise DomainError("driving angle must be 'aoe' or 'poe'")
        if self.axis not in ("elevation", "steering"):
            raise DomainError("axis must be 'elevation' or 'steering'")
        if self.torque_sign not in (1, -1, 1.0, -1.0):
            raise DomainError("torque_sign must be +1 or -1")
        if self.model is None:
            object.__setattr__(self, "model", reference_model(self.variant))
        if self.dynamics is None:
            object.__setattr__(self, "dynamics", dynamics_for(self.variant))

    def aa_angle(self, pose: ShoulderPose) -> float:
        anat = pose.aoe_deg if self.driving == "aoe" else pose.poe_deg
        lo, hi = AA_RANGE_DEG
        return min(max(self.offset_deg + self.sign * anat, lo), hi)

    def torque(self, pose: ShoulderPose, pressure_kpa: float) -> float:
        """Signed contribution to its axis."""
        return self.torque_sign * float(
            predict_torque(self.model, self.aa_angle(pose), pressure_kpa))

    def full_torque(self, pose: ShoulderPose) -> float:
        """Unsigned torque at the reference pressure."""
        return float(torque_at_reference(self.model, self.aa_angle(pose)))


@dataclass(frozen=True)
class SleeveLayout:
    elevation: ActuatorPlacement
    depression: ActuatorPlacement
    steer_anterior: ActuatorPlacement
    steer_posterior: ActuatorPlacement
    rom: RangeOfMotion = DEFAULT_ROM

    def __post_init__(self):
        for axis, pair in (("elevation", (self.elevation, self.depression)),
                           ("steering", (self.steer_anterior, self.steer_posterior))):
            if any(p.axis != axis for p in pair):
                raise DomainError(f"{axis} pair has a placement on the wrong axis")
            if pair[0].torque_sign == pair[1].torque_sign:
                raise DomainError(f"{axis} pair is not antagonistic")

    def placements(self):
        return [getattr(self, name) for name in PLACEMENTS]

    def pair(self, axis: str):
        """``(positive, negative)`` placements of an axis."""
        members = ((self.elevation, self.depression) if axis == "elevation"
                   else (self.steer_anterior, self.steer_posterior))
        return tuple(sorted(members, key=lambda p: -p.torque_sign))


def default_layout(variant="D2", *, elevation=None, depression=None,
                   steer_anterior=None, steer_posterior=None,
                   rom: RangeOfMotion = DEFAULT_ROM) -> SleeveLayout:
    """Standard sleeve with the same variant everywhere unless overridden."""

    def pick(v):
        v = variant if v is None else v
        return get_variant(v) if isinstance(v, str) else v

    return SleeveLayout(
        elevation=ActuatorPlacement(pick(elevation), "aoe", 180.0, -1.0,
                                    "elevation", +1.0),
        depression=ActuatorPlacement(pick(depression), "aoe", 180.0, +1.0,
                                     "elevation", -1.0),
        steer_anterior=ActuatorPlacement(pick(steer_anterior), "poe", 180.0, +1.0,
                                         "steering", -1.0),
        steer_posterior=ActuatorPlacement(pick(steer_posterior), "poe", 180.0, -1.0,
                                          "steering", +1.0),
        rom=rom,
    )


@dataclass(frozen=True)
class ArmParams:
    """Point-mass arm.

    With neither ``gravity_torque_90_nm`` nor ``com_length_m`` given the
    centre-of-mass distance defaults to the one that makes a 3.5 kg arm need
    18.06 N-m at 90 deg elevation, so changing only the mass scales the
    gravity torque.
    """

    mass_kg: float = DEFAULT_ARM_MASS_KG
    gravity_torque_90_nm: float | None = None
    com_length_m: float | None = None

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise DomainError("arm mass must be positive")
        g90, com = self.gravity_torque_90_nm, self.com_length_m
        if g90 is None:
            com = DEFAULT_COM_LENGTH_M if com is None else com
            g90 = self.mass_kg * GRAVITY * com
        elif com is None:
            com = g90 / (self.mass_kg * GRAVITY)
        if not (g90 > 0 and com > 0):
            raise DomainError("arm gravity torque and COM length must be positive")
        object.__setattr__(self, "gravity_torque_90_nm", float(g90))
        object.__setattr__(self, "com_length_m", float(com))


DEFAULT_ARM = ArmParams(gravity_torque_90_nm=DEFAULT_GRAVITY_TORQUE_90_NM)


@dataclass(frozen=True)
class PressureSet:
    elevation: float = 0.0
    depression: float = 0.0
    steer_anterior: float = 0.0
    steer_posterior: float = 0.0

    def __post_init__(self):
        for name in PLACEMENTS:
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= SAFE_PRESSURE_KPA):
                raise DomainError(
                    f"{name} pressure {v!r} outside [0, {SAFE_PRESSURE_KPA:g}] kPa")

    def as_tuple(self):
        return tuple(getattr(self, name) for name in PLACEMENTS)

    @classmethod
    def from_sequence(cls, values):
        return cls(*(float(v) for v in values))


def pose_to_actuator_angles(layout: SleeveLayout, pose: ShoulderPose) -> dict:
    """A-A' angle of every placement, keyed by placement name."""
    layout.rom.check(pose)
    return {name: AngleConvention(getattr(layout, name).aa_angle(pose))
            for name in PLACEMENTS}


def gravity_torque(arm: ArmParams, pose: ShoulderPose) -> float:
    """Gravity torque resisting elevation, N-m."""
    return arm.gravity_torque_90_nm * math.sin(math.radians(pose.aoe_deg))


def support_fraction(layout: SleeveLayout, pose: ShoulderPose,
                     pressures: PressureSet, arm: ArmParams = DEFAULT_ARM) -> float:
    """Elevation actuator torque as a fraction of the gravity torque."""
    layout.rom.check(pose)
    g = gravity_torque(arm, pose)
    if g == 0.0:
        raise UndefinedFractionError("gravity torque is zero at this elevation")
    return layout.elevation.torque(pose, pressures.elevation) * \
        layout.elevation.torque_sign / g


def net_torque(layout: SleeveLayout, pose: ShoulderPose,
               pressures: PressureSet) -> tuple[float, float]:
    """Net actuator torque ``(elevation_nm, steering_nm)``."""
    totals = {"elevation": 0.0, "steering": 0.0}
    for name, p in zip(PLACEMENTS, pressures.as_tuple()):
        placement = getattr(layout, name)
        totals[placement.axis] += placement.torque(pose, p)
    return totals["elevation"], totals["steering"]


def capability(layout: SleeveLayout, pose: ShoulderPose,
               cocontraction_kpa: float = 0.0) -> dict:
    """Achievable ``(min_nm, max_nm)`` per axis with the antagonist at the floor."""
    out = {}
    for axis in ("elevation", "steering"):
        pos, neg = layout.pair(axis)
        t_pos, t_neg = pos.full_torque(pose), neg.full_torque(pose)
        k = cocontraction_kpa / REFERENCE_PRESSURE_KPA
        out[axis] = (k * t_pos - t_neg * SAFE_PRESSURE_KPA / REFERENCE_PRESSURE_KPA,
                     t_pos * SAFE_PRESSURE_KPA / REFERENCE_PRESSURE_KPA - k * t_neg)
    return out


def _allocate_pair(layout, pose, axis, desired, floor, saturate):
    pos, neg = layout.pair(axis)
    ref = REFERENCE_PRESSURE_KPA
    t_pos, t_neg = pos.full_torque(pose), neg.full_torque(pose)
    lo, hi = capability(layout, pose, floor)[axis]
    if desired > hi or desired < lo:
        bound = hi if desired > hi else lo
        if not saturate:
            raise CapabilityExceeded(
                f"{axis} torque {desired:.4g} N-m exceeds the achievable "
                f"{bound:.4g} N-m at this pose", axis, desired, bound)
        return (SAFE_PRESSURE_KPA, floor) if desired > hi else (floor, SAFE_PRESSURE_KPA)
    floor_pos, floor_neg = t_pos * floor / ref, t_neg * floor / ref
    if desired >= floor_pos - floor_neg:
        p_pos, p_neg = ref * (desired + floor_neg) / t_pos, floor
    else:
        p_pos, p_neg = floor, ref * (floor_pos - desired) / t_neg
    clamp = lambda p: min(max(p, floor), SAFE_PRESSURE_KPA)
    return clamp(p_pos), clamp(p_neg)


def allocate_pressures(layout: SleeveLayout, pose: ShoulderPose,
                       desired: tuple[float, float],
                       cocontraction_kpa: float = 0.0,
                       saturate: bool = False) -> PressureSet:
    """Pressures producing the desired ``(elevation_nm, steering_nm)``.

    One actuator of each pair is held at the co-contraction floor and the
    other is solved from the linear torque-pressure relation.  Usually the
    floored one is the antagonist; when the floor alone already overshoots
    the demand the roles swap.  Demands beyond capability raise
    :class:`CapabilityExceeded`, or with ``saturate`` get the pair's extreme.
    """
    if not 0.0 <= cocontraction_kpa <= SAFE_PRESSURE_KPA:
        raise DomainError("co-contraction floor must lie in [0, 80] kPa")
    layout.rom.check(pose)
    result = {}
    for axis, want in zip(("elevation", "steering"), desired):
        pos, neg = layout.pair(axis)
        p_pos, p_neg = _allocate_pair(layout, pose, axis, float(want),
                                      cocontraction_kpa, saturate)
        result[_name_of(layout, pos)] = p_pos
        result[_name_of(layout, neg)] = p_neg
    return PressureSet(**result)


def _name_of(layout, placement):
    for name in PLACEMENTS:
        if getattr(layout, name) is placement:
            return name
    raise KeyError(placement)


def _elevation_balance(layout, pressures, arm, poe, aoe):
    pose = ShoulderPose(aoe, poe)
    return net_torque(layout, pose, pressures)[0] - (
        gravity_torque(arm, pose) if arm is not None else 0.0)


def equilibrium_aoe(layout: SleeveLayout, pressures: PressureSet,
                    arm: ArmParams = DEFAULT_ARM, poe: float = 0.0,
                    start_aoe: float = 0.0, *, scan_step: float = 0.05,
                    xtol: float = 1e-9) -> float:
    """Elevation at which actuator torque balances gravity.

    Starting from ``start_aoe`` the arm is followed in the direction the net
    torque pushes it, up to the first zero of the balance; that zero is
    bracketed on a ``scan_step`` grid and refined by bisection to ``xtol``
    degrees.  If the balance never changes sign the range-of-motion limit in
    the pushing direction is returned.
    """
    lo, hi = layout.rom.aoe_deg
    f = lambda a: _elevation_balance(layout, pressures, arm, poe, a)
    x0 = min(max(float(start_aoe), lo), hi)
    f0 = f(x0)
    if f0 == 0.0:
        return x0
    direction = 1.0 if f0 > 0 else -1.0
    end = hi if direction > 0 else lo
    prev_x, prev_f = x0, f0
    n = int(math.ceil(abs(end - x0) / scan_step))
    for k in range(1, n + 1):
        x = x0 + direction * k * scan_step
        x = min(x, end) if direction > 0 else max(x, end)
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) != (prev_f > 0):
            return _bisect(f, prev_x, x, prev_f, xtol)
        prev_x, prev_f = x, fx
    return end


def _bisect(f, a, b, fa, xtol):
    while abs(b - a) > xtol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


# -- closed-loop reaching ------------------------------------------------------


@dataclass(frozen=True)
class ReachConfig:
    """Controller and integration settings for :func:`simulate_reach`.

    The proportional controller with gravity feed-forward is simulation
    scaffolding; the physical sleeve was driven open loop.
    """

    dt_s: float = 0.01
    duration_s: float = 120.0
    kp_nm_per_deg: float = 0.1
    damping_nm_s_per_deg: float = 1.0
    tolerance_deg: float = 1.0
    cocontraction_kpa: float = 0.0
    regulator: RegulatorSpec = field(default_factory=lambda: DEFAULT_REGULATOR)

    def __post_init__(self):
        if not (self.dt_s > 0 and self.duration_s > 0):
            raise DomainError("dt and duration must be positive")
        if not (self.kp_nm_per_deg > 0 and self.damping_nm_s_per_deg > 0):
            raise DomainError("controller gain and damping must be positive")
        if self.tolerance_deg <= 0:
            raise DomainError("tolerance must be positive")


@dataclass
class ReachResult:
    times: np.ndarray
    aoe: np.ndarray
    poe: np.ndarray
    pressures: np.ndarray
    success: bool

    @property
    def final_pose(self) -> ShoulderPose:
        return ShoulderPose(float(self.aoe[-1]), float(self.poe[-1]))

    @property
    def pose_error(self) -> np.ndarray:
        return self._error

    def with_target(self, target: ShoulderPose):
        self._error = np.hypot(self.aoe - target.aoe_deg, self.poe - target.poe_deg)
        return self


def simulate_reach(layout: SleeveLayout, start: ShoulderPose, target: ShoulderPose,
                   arm: ArmParams | None = DEFAULT_ARM,
                   config: ReachConfig = ReachConfig()) -> ReachResult:
    """Drive the arm from ``start`` toward ``target``.

    Each step: a torque demand (gravity feed-forward plus proportional pose
    error) is allocated to pressures, saturating at capability; commands pass
    the regulator and the 80 kPa cap; actual pressures follow with the
    actuators' first-order lags; the arm moves at net torque over damping.
    Stops once the pose error is below tolerance or at the time cap, in which
    case ``success`` is False and the last pose is kept.
    """
    layout.rom.check(start)
    layout.rom.check(target)
    cfg = config
    placements = layout.placements()
    aoe, poe = float(start.aoe_deg), float(start.poe_deg)
    p = np.zeros(4)
    times, aoes, poes, ps = [0.0], [aoe], [poe], [p.copy()]
    n_steps = int(round(cfg.duration_s / cfg.dt_s))
    success = False
    for k in range(n_steps + 1):
        err_e, err_s = target.aoe_deg - aoe, target.poe_deg - poe
        if math.hypot(err_e, err_s) < cfg.tolerance_deg:
            success = True
            break
        if k == n_steps:
            break
        pose = ShoulderPose(aoe, poe)
        g = gravity_torque(arm, pose) if arm is not None else 0.0
        demand = (g + cfg.kp_nm_per_deg * err_e, cfg.kp_nm_per_deg * err_s)
        cmd = allocate_pressures(layout, pose, demand, cfg.cocontraction_kpa,
                                 saturate=True).as_tuple()
        for i, (placement, c) in enumerate(zip(placements, cmd)):
            c = min(regulator_command(cfg.regulator, c), SAFE_PRESSURE_KPA)
            dyn = placement.dynamics
            p[i] = first_order_step(p[i], c, cfg.dt_s,
                                    dyn.tau_inflate_s, dyn.tau_deflate_s)
        tau_e, tau_s = net_torque(layout, pose, PressureSet.from_sequence(p))
        rate = cfg.dt_s / cfg.damping_nm_s_per_deg
        aoe, poe = layout.rom.clamp(aoe + rate * (tau_e - g), poe + rate * tau_s)
        times.append((k + 1) * cfg.dt_s)
        aoes.append(aoe)
        poes.append(poe)
        ps.append(p.copy())
    result = ReachResult(np.array(times), np.array(aoes), np.array(poes),
                         np.array(ps), success)
    return result.with_target(target)


# -- workspace -------------------------------------------------------------------


@dataclass
class WorkspaceMap:
    """Hold feasibility over a (AoE, PoE) grid.

    ``fraction`` is the best achievable elevation torque over the gravity
    torque (``inf`` where gravity is zero or disabled); a pose is feasible
    when that ratio reaches 1.
    """

    aoe_deg: np.ndarray
    poe_deg: np.ndarray
    feasible: np.ndarray
    fraction: np.ndarray

    def rows(self):
        for i, a in enumerate(self.aoe_deg):
            for j, p in enumerate(self.poe_deg):
                yield float(a), float(p), bool(self.feasible[i, j]), float(self.fraction[i, j])

    @property
    def reachable_share(self) -> float:
        return float(np.mean(self.feasible))


def _grid(lo, hi, step):
    if not step > 0:
        raise DomainError("grid step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def workspace_grid(layout: SleeveLayout, arm: ArmParams | None = DEFAULT_ARM,
                   aoe_step: float = 5.0, poe_step: float = 5.0,
                   cocontraction_kpa: float = 0.0) -> WorkspaceMap:
    """Which range-of-motion poses the sleeve can hold against gravity.

    Pass ``arm=None`` to disable gravity; every pose is then holdable, since
    steering needs no holding torque and elevation needs none either.
    """
    aoes = _grid(*layout.rom.aoe_deg, aoe_step)
    poes = _grid(*layout.rom.poe_deg, poe_step)
    feasible = np.zeros((aoes.size, poes.size), dtype=bool)
    fraction = np.zeros((aoes.size, poes.size))
    for i, a in enumerate(aoes):
        for j, p in enumerate(poes):
            pose = ShoulderPose(float(a), float(p))
            g = gravity_torque(arm, pose) if arm is not None else 0.0
            best = capability(layout, pose, cocontraction_kpa)["elevation"][1]
            fraction[i, j] = best / g if g > 0 else math.inf
            feasible[i, j] = best >= g
    return WorkspaceMap(aoes, poes, feasible, fraction)
