import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pneusleeve.errors import CapabilityExceeded, DomainError, UndefinedFractionError
from pneusleeve.fitting import reference_model
from pneusleeve.models import torque_at_reference
from pneusleeve.sleeve import (NEUTRAL, ArmParams, PressureSet, ReachConfig, ShoulderPose,
                               allocate_pressures, capability, default_layout, equilibrium_aoe,
                               gravity_torque, net_torque, pose_to_actuator_angles,
                               simulate_reach, support_fraction, workspace_grid)

D2 = default_layout("D2")
ARM = ArmParams(gravity_torque_90_nm=18.06)
ELEV = PressureSet(elevation=80.0)

poses = st.builds(ShoulderPose, st.floats(0.0, 180.0), st.floats(-90.0, 135.0))


def test_pose_mapping():
    a = pose_to_actuator_angles(D2, ShoulderPose(30.0, -20.0))
    assert a["elevation"].aa_angle_deg == 150.0
    assert a["depression"].aa_angle_deg == 210.0
    assert a["steer_anterior"].aa_angle_deg == 160.0
    assert a["steer_posterior"].aa_angle_deg == 200.0
    high = pose_to_actuator_angles(D2, ShoulderPose(150.0, 120.0))
    assert high["depression"].aa_angle_deg == 270.0
    assert high["steer_anterior"].aa_angle_deg == 270.0


@given(poses)
def test_mapped_angles_stay_in_range(pose):
    for conv in pose_to_actuator_angles(D2, pose).values():
        assert 0.0 <= conv.aa_angle_deg <= 270.0


def test_pose_outside_rom():
    with pytest.raises(DomainError):
        pose_to_actuator_angles(D2, ShoulderPose(190.0, 0.0))
    with pytest.raises(DomainError):
        pose_to_actuator_angles(D2, ShoulderPose(10.0, -100.0))


def test_gravity_model():
    assert gravity_torque(ARM, ShoulderPose(90.0)) == 18.06
    assert gravity_torque(ARM, ShoulderPose(30.0)) == pytest.approx(9.03)
    assert ArmParams().gravity_torque_90_nm == pytest.approx(18.06, rel=1e-12)
    light = ArmParams(mass_kg=0.5)
    assert light.gravity_torque_90_nm == pytest.approx(18.06 / 7.0)
    with pytest.raises(DomainError):
        ArmParams(mass_kg=0.0)


@pytest.mark.parametrize("name, pct", [("D1", 7.0), ("D2", 24.6), ("D3", 25.8)])
def test_support_fraction_at_90(name, pct):
    f = support_fraction(default_layout(name), ShoulderPose(90.0), ELEV, ARM)
    assert 100 * f == pytest.approx(pct, abs=0.5)


def test_support_fraction_edges():
    assert support_fraction(D2, ShoulderPose(90.0), PressureSet(), ARM) == 0.0
    with pytest.raises(UndefinedFractionError):
        support_fraction(D2, ShoulderPose(0.0), ELEV, ARM)


@given(st.floats(1.0, 179.0), st.floats(0.0, 80.0))
def test_support_fraction_linear_in_pressure(aoe, p):
    pose = ShoulderPose(aoe)
    full = support_fraction(D2, pose, ELEV, ARM)
    assert support_fraction(D2, pose, PressureSet(elevation=p), ARM) == \
        pytest.approx(full * p / 80.0, rel=1e-12, abs=1e-15)


def test_net_torque_examples():
    assert net_torque(D2, ShoulderPose(40.0, 10.0), PressureSet()) == (0.0, 0.0)
    e, s = net_torque(D2, ShoulderPose(90.0), ELEV)
    assert (e, s) == (pytest.approx(4.44, abs=1e-9), 0.0)


@given(st.floats(0.0, 80.0), st.floats(0.0, 80.0))
def test_antagonists_cancel_at_symmetric_pose(pe, ps):
    e, s = net_torque(D2, NEUTRAL, PressureSet(pe, pe, ps, ps))
    assert e == 0.0 and s == 0.0


def test_allocation_examples():
    assert allocate_pressures(D2, ShoulderPose(90.0), (0.0, 0.0)).as_tuple() == (0.0,) * 4
    p = allocate_pressures(D2, ShoulderPose(90.0), (2.22, 0.0))
    assert p.as_tuple() == pytest.approx((40.0, 0.0, 0.0, 0.0), abs=1e-9)
    with pytest.raises(CapabilityExceeded) as err:
        allocate_pressures(D2, ShoulderPose(90.0), (18.06, 0.0))
    assert err.value.axis == "elevation"
    assert err.value.achievable_nm == pytest.approx(4.44, abs=1e-9)


def test_allocation_saturates_on_request():
    p = allocate_pressures(D2, ShoulderPose(90.0), (18.06, -50.0), saturate=True)
    assert p.as_tuple() == (80.0, 0.0, 80.0, 0.0)


@given(poses, st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 40.0))
def test_allocation_round_trip(pose, ue, us, floor):
    cap = capability(D2, pose, floor)
    want = tuple(lo + u * (hi - lo) for (lo, hi), u in
                 zip((cap["elevation"], cap["steering"]), (ue, us)))
    p = allocate_pressures(D2, pose, want, cocontraction_kpa=floor)
    got = net_torque(D2, pose, p)
    assert got == pytest.approx(want, abs=1e-9)
    assert min(p.as_tuple()) >= floor
    # one actuator of each pair sits on the floor
    assert min(p.elevation, p.depression) == floor
    assert min(p.steer_anterior, p.steer_posterior) == floor


def _balance(layout, pressures, arm, aoe):
    pose = ShoulderPose(aoe)
    return net_torque(layout, pose, pressures)[0] - gravity_torque(arm, pose)


def _scan_root(layout, pressures, arm, step=0.01):
    grid = np.arange(0.0, 180.0 + step / 2, step)
    f = np.array([_balance(layout, pressures, arm, a) for a in grid])
    if f[0] <= 0:
        return 0.0
    idx = np.flatnonzero(f <= 0)
    return 180.0 if idx.size == 0 else float(grid[idx[0]])


def test_equilibrium_examples():
    assert equilibrium_aoe(D2, PressureSet(), ARM) == 0.0
    assert equilibrium_aoe(D2, PressureSet(60, 60, 0, 0), ARM) == 0.0
    root = equilibrium_aoe(D2, ELEV, ARM)
    assert abs(root - _scan_root(D2, ELEV, ARM)) <= 0.01
    assert abs(_balance(D2, ELEV, ARM, root)) < 1e-3


@pytest.mark.parametrize("pe", [20.0, 50.0, 80.0])
def test_equilibrium_without_gravity_goes_to_limit(pe):
    assert equilibrium_aoe(D2, PressureSet(elevation=pe), None) == 180.0


def test_reach_null_motion():
    r = simulate_reach(D2, ShoulderPose(20.0, 10.0), ShoulderPose(20.0, 10.0), ARM)
    assert r.success and len(r.times) == 1


def test_reach_light_arm_converges_monotonically():
    r = simulate_reach(D2, NEUTRAL, ShoulderPose(30.0, 30.0), ArmParams(mass_kg=0.5))
    assert r.success
    assert np.all(np.diff(r.pose_error) <= 1e-12)
    assert r.pressures.min() >= 0.0 and r.pressures.max() <= 80.0


def test_reach_heavy_arm_stalls_at_equilibrium():
    r = simulate_reach(D2, NEUTRAL, ShoulderPose(90.0), ARM)
    assert not r.success
    assert r.times[-1] == pytest.approx(120.0)
    assert r.final_pose.aoe_deg == pytest.approx(equilibrium_aoe(D2, ELEV, ARM), abs=1e-3)
    assert r.pressures.max() <= 80.0


def test_reach_config_validation():
    with pytest.raises(DomainError):
        ReachConfig(dt_s=0.0)
    with pytest.raises(DomainError):
        simulate_reach(D2, NEUTRAL, ShoulderPose(200.0), ARM)


def test_workspace_without_gravity_is_complete():
    ws = workspace_grid(D2, None, 10.0, 15.0)
    assert ws.feasible.all()
    assert np.isinf(ws.fraction).all()


def test_workspace_coarse_grid():
    ws = workspace_grid(D2, ARM, 180.0, 45.0)
    assert ws.feasible.shape == (2, 6)
    assert list(ws.aoe_deg) == [0.0, 180.0]


def test_workspace_boundary_matches_scan():
    ws = workspace_grid(D2, ARM, 2.5, 45.0)
    m = reference_model("D2")
    for j in range(ws.poe_deg.size):
        expect = [torque_at_reference(m, 180.0 - a) >= 18.06 * math.sin(math.radians(a))
                  for a in ws.aoe_deg]
        assert list(ws.feasible[:, j]) == expect
