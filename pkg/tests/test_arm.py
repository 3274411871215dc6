"""Kinematics, IK, and planner tests.

The zero-pose flange position has a closed form straight off the
parameter table: x = a2 + a3, y = -(d4 + d6), z = d1 - d5. That makes
the strongest possible oracle for the DH chain.
"""

import math

import numpy as np
import pytest

from pollisim.arm import (
    ArmModel,
    arm_clearance,
    export_trajectory_csv,
    fk_frames,
    flange_pose,
    ik,
    jacobian,
    link_segments_world,
    load_trajectory_csv,
    max_reach,
    plan_motion,
    segment_capsule_distance,
    segment_segment_distance,
    standoff_pose,
)
from pollisim.errors import PlanFailedError, UnreachableError
from pollisim.geometry import Pose6D, frame_from_axis, look_at_pose
from pollisim.orchard import Capsule


def test_fk_zero_pose_closed_form():
    T = fk_frames(np.zeros(6))[-1]
    np.testing.assert_allclose(T[:3, 3],
                               [-(0.425 + 0.3922), -(0.1333 + 0.0996), 0.1625 - 0.0997],
                               atol=1e-15)


def test_fk_base_rotation_symmetry():
    # rotating joint 1 by phi spins the whole flange position about z
    q = np.array([0.0, -0.7, 0.4, 0.3, -0.2, 0.1])
    p0 = fk_frames(q)[-1][:3, 3]
    phi = 0.9
    q2 = q.copy()
    q2[0] = phi
    p1 = fk_frames(q2)[-1][:3, 3]
    c, s = math.cos(phi), math.sin(phi)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(p1, Rz @ p0, atol=1e-12)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(5):
        q = rng.uniform(-math.pi, math.pi, 6)
        J = jacobian(q)
        eps = 1e-7
        for i in range(6):
            qp, qm = q.copy(), q.copy()
            qp[i] += eps
            qm[i] -= eps
            dnum = (fk_frames(qp)[-1][:3, 3] - fk_frames(qm)[-1][:3, 3]) / (2 * eps)
            np.testing.assert_allclose(J[:3, i], dnum, atol=1e-5)


def test_max_reach_in_published_band():
    r = max_reach()
    assert 0.84 <= r <= 0.86
    # the zero pose is itself 0.84974 m out, a lower bound on the max
    assert r >= math.hypot(0.8172, 0.2329) - 1e-12


def test_flange_pose_respects_base_placement():
    base = Pose6D(np.array([0.0, -0.6, 0.9]),
                  np.array([1.0, 0.0, 0.0, 0.0]))
    model = ArmModel(base_pose=base)
    p_local = fk_frames(np.zeros(6))[-1][:3, 3]
    p_world = flange_pose(model, np.zeros(6)).position
    np.testing.assert_allclose(p_world, p_local + base.position, atol=1e-12)


def test_ik_is_exact_fixed_point_of_fk():
    model = ArmModel()
    rng = np.random.default_rng(19)
    for _ in range(20):
        q = rng.uniform(-math.pi, math.pi, 6)
        res = ik(model, flange_pose(model, q), seed_q=q)
        assert res.iterations == 0
        np.testing.assert_array_equal(res.q, q)  # bitwise identical


def test_ik_converges_from_far_seed():
    model = ArmModel()
    q_true = np.array([0.4, -1.1, 0.8, -0.5, 0.6, 0.2])
    target = flange_pose(model, q_true)
    res = ik(model, target, seed_q=np.zeros(6))
    assert res.converged
    sol = flange_pose(model, res.q)
    assert np.linalg.norm(sol.position - target.position) < 1e-6


def test_ik_deterministic():
    model = ArmModel()
    target = flange_pose(model, np.array([0.3, -0.9, 0.7, 0.1, 0.5, -0.2]))
    a = ik(model, target, seed_q=np.zeros(6))
    b = ik(model, target, seed_q=np.zeros(6))
    np.testing.assert_array_equal(a.q, b.q)


def test_ik_rejects_unreachable_target():
    model = ArmModel()
    far = Pose6D(np.array([2.0, 0.0, 0.5]), np.array([1.0, 0.0, 0.0, 0.0]))
    with pytest.raises(UnreachableError):
        ik(model, far)


def test_standoff_pose_geometry():
    cluster = Pose6D(np.array([0.0, 0.0, 1.0]), frame_from_axis([0.0, -1.0, 0.0]))
    tool = standoff_pose(cluster, standoff=0.2)
    # 0.2 m out along the approach axis (-y), nozzle +Z pointing back (+y)
    np.testing.assert_allclose(tool.position, [0.0, -0.2, 1.0], atol=1e-12)
    np.testing.assert_allclose(tool.rotation_matrix()[:, 2], [0.0, 1.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        standoff_pose(cluster, standoff=0.0)


def test_segment_segment_distance_cases():
    # parallel, unit apart
    assert segment_segment_distance([0, 0, 0], [1, 0, 0],
                                    [0, 1, 0], [1, 1, 0]) == pytest.approx(1.0)
    # skew crossing, separated along z
    assert segment_segment_distance([0, 0, 0], [1, 0, 0],
                                    [0.5, -0.5, 0.3], [0.5, 0.5, 0.3]) == pytest.approx(0.3)
    # closest at endpoints
    assert segment_segment_distance([0, 0, 0], [1, 0, 0],
                                    [2, 1, 0], [3, 1, 0]) == pytest.approx(math.sqrt(2))
    # degenerate: both segments are points
    assert segment_segment_distance([0, 0, 0], [0, 0, 0],
                                    [0, 0, 2], [0, 0, 2]) == pytest.approx(2.0)
    # intersecting segments
    assert segment_segment_distance([0, 0, 0], [1, 1, 0],
                                    [0, 1, 0], [1, 0, 0]) == pytest.approx(0.0, abs=1e-12)


def test_segment_capsule_distance_clamps():
    cap = Capsule("wire", [0, 0, 1], [1, 0, 1], 0.1)
    assert segment_capsule_distance([0, 0, 0], [1, 0, 0], cap) == pytest.approx(0.9)
    inside = segment_capsule_distance([0, 0, 0.95], [1, 0, 0.95], cap)
    assert inside == 0.0


def test_arm_clearance_signs():
    model = ArmModel()
    far = [Capsule("post", [5, 5, 0], [5, 5, 2], 0.05)]
    assert arm_clearance(model, np.zeros(6), far) > 4.0
    # capsule through the shoulder column: penetration reads negative
    through = [Capsule("post", [0, 0, 0], [0, 0, 0.2], 0.05)]
    assert arm_clearance(model, np.zeros(6), through) < 0.0
    assert arm_clearance(model, np.zeros(6), []) == math.inf


def test_plan_motion_straight_line():
    model = ArmModel()
    q0 = np.zeros(6)
    q1 = np.array([0.5, -0.3, 0.4, 0.0, 0.2, -0.1])
    plan = plan_motion(model, q0, q1, [])
    assert plan.n_via == 0
    np.testing.assert_allclose(plan.waypoints[0], q0)
    np.testing.assert_allclose(plan.waypoints[-1], q1)
    steps = np.abs(np.diff(plan.waypoints, axis=0)).max()
    assert steps <= math.radians(1.0) + 1e-12
    assert (np.diff(plan.times) >= 0).all()
    # 0.5 rad peak joint move, triangular profile: T = 2 sqrt(M / amax)
    assert plan.duration == pytest.approx(2 * math.sqrt(0.5 / 5.0), abs=1e-9)


def test_plan_motion_trapezoid_regimes():
    model = ArmModel()
    q1 = np.array([0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
    # full limits: 0.5 rad < vmax^2/amax, so the profile stays triangular
    fast = plan_motion(model, np.zeros(6), q1, [])
    assert fast.duration == pytest.approx(2 * math.sqrt(0.5 / 5.0), abs=1e-9)
    # at quarter speed the velocity cap binds: cruise phase appears
    vmax, amax = math.pi / 4, 5.0 / 4
    slow = plan_motion(model, np.zeros(6), q1, [], speed_scale=0.25)
    assert 0.5 * amax >= vmax * vmax  # trapezoid precondition
    assert slow.duration == pytest.approx(0.5 / vmax + vmax / amax, abs=1e-9)
    with pytest.raises(ValueError):
        plan_motion(model, np.zeros(6), q1, [], speed_scale=0.0)


def _mid_sweep_obstacle():
    # small capsule parked exactly where the flange passes halfway
    # through a 1.2 rad base sweep: blocks the straight line only
    pmid = fk_frames([0.6, 0, 0, 0, 0, 0])[-1][:3, 3]
    return Capsule("wire", pmid - [0, 0, 0.02], pmid + [0, 0, 0.02], 0.03)


def test_plan_motion_detours_around_obstacle():
    model = ArmModel()
    q0 = np.zeros(6)
    q1 = np.array([1.2, 0.0, 0.0, 0.0, 0.0, 0.0])
    obs = _mid_sweep_obstacle()
    plan = plan_motion(model, q0, q1, [obs], seed=1)
    assert plan.n_via == 1
    np.testing.assert_allclose(plan.waypoints[0], q0)
    np.testing.assert_allclose(plan.waypoints[-1], q1)
    for q in plan.waypoints:
        assert arm_clearance(model, q, [obs]) >= 0.02 - 1e-12


def test_plan_motion_fails_when_goal_blocked():
    model = ArmModel()
    q1 = np.array([0.4, 0.0, 0.0, 0.0, 0.0, 0.0])
    goal_flange = fk_frames(q1)[-1][:3, 3]
    cage = Capsule("post", goal_flange - [0, 0, 0.02], goal_flange + [0, 0, 0.02], 0.08)
    with pytest.raises(PlanFailedError):
        plan_motion(model, np.zeros(6), q1, [cage])


def test_plan_motion_deterministic():
    model = ArmModel()
    q1 = np.array([1.2, 0.0, 0.0, 0.0, 0.0, 0.0])
    obs = _mid_sweep_obstacle()
    a = plan_motion(model, np.zeros(6), q1, [obs], seed=4)
    b = plan_motion(model, np.zeros(6), q1, [obs], seed=4)
    np.testing.assert_array_equal(a.waypoints, b.waypoints)
    np.testing.assert_array_equal(a.times, b.times)


def test_trajectory_csv_round_trip(tmp_path):
    model = ArmModel()
    plan = plan_motion(model, np.zeros(6),
                       np.array([0.3, -0.2, 0.1, 0.0, 0.1, 0.0]), [])
    path = tmp_path / "traj.csv"
    export_trajectory_csv(plan, path)
    back = load_trajectory_csv(path)
    assert back.waypoints.shape == plan.waypoints.shape
    np.testing.assert_allclose(back.waypoints, plan.waypoints, atol=1e-9)
    np.testing.assert_allclose(back.times, plan.times, atol=1e-6)
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        load_trajectory_csv(junk)
