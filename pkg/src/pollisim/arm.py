"""UR5e kinematics, inverse kinematics, and capsule-world motion planning.

Kinematics follow the classic parameter table published by the arm
manufacturer; joint angles are radians and zero pose is the arm folded
along -x. Collision geometry approximates each link as a capsule
between consecutive joint-frame origins, and obstacles are capsules in
the world frame, so all clearance queries reduce to exact
segment-segment distances.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import PlanFailedError, UnreachableError
from .geometry import Pose6D, frame_from_axis, quat_from_matrix
from .orchard import Capsule

# a (m), d (m), alpha (rad) per joint, classic convention
UR5E_A = (0.0, -0.425, -0.3922, 0.0, 0.0, 0.0)
UR5E_D = (0.1625, 0.0, 0.0, 0.1333, 0.0997, 0.0996)
UR5E_ALPHA = (math.pi / 2, 0.0, 0.0, math.pi / 2, -math.pi / 2, 0.0)

N_JOINTS = 6

# fixed stream for IK seed perturbations and planner via-points: the
# solver must give the same answer on every call with equal inputs
_IK_SEED_ROOT = 8451297054


@dataclass(frozen=True)
class ArmModel:
    """Arm placement plus the simulation limits used by the planner."""

    base_pose: Pose6D = field(default_factory=Pose6D.identity)
    link_radius: float = 0.06
    velocity_limit: float = math.pi       # rad/s, per joint
    acceleration_limit: float = 5.0       # rad/s^2, per joint

    def __post_init__(self):
        if self.link_radius <= 0:
            raise ValueError("link_radius must be positive")
        if self.velocity_limit <= 0 or self.acceleration_limit <= 0:
            raise ValueError("motion limits must be positive")


def dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_frames(q) -> List[np.ndarray]:
    """Cumulative joint-frame transforms in the arm base frame.

    Returns 7 homogeneous matrices: identity (base) plus one per joint;
    the last is the flange frame.
    """
    q = np.asarray(q, dtype=float).reshape(N_JOINTS)
    frames = [np.eye(4)]
    T = np.eye(4)
    for i in range(N_JOINTS):
        T = T @ dh_transform(q[i], UR5E_D[i], UR5E_A[i], UR5E_ALPHA[i])
        frames.append(T.copy())
    return frames


def flange_pose(model: ArmModel, q) -> Pose6D:
    """Flange pose in the world frame."""
    T = fk_frames(q)[-1]
    base = Pose6D(model.base_pose.position, model.base_pose.orientation)
    local = Pose6D(T[:3, 3], quat_from_matrix(T[:3, :3]))
    return base.compose(local)


def link_segments_world(model: ArmModel, q) -> List[tuple]:
    """The 6 link capsule axes (world-frame endpoint pairs) at config q."""
    frames = fk_frames(q)
    R = model.base_pose.rotation_matrix()
    p = model.base_pose.position
    origins = [R @ f[:3, 3] + p for f in frames]
    return [(origins[i], origins[i + 1]) for i in range(N_JOINTS)]


def jacobian(q) -> np.ndarray:
    """Geometric Jacobian (base frame): rows are v_xyz then w_xyz."""
    frames = fk_frames(q)
    p_e = frames[-1][:3, 3]
    J = np.zeros((6, N_JOINTS))
    for i in range(N_JOINTS):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        J[:3, i] = np.cross(z, p_e - p)
        J[3:, i] = z
    return J


def max_reach(n_grid: int = 2001) -> float:
    """Largest radial flange distance from the base axis, wrist neutral.

    Scans the shoulder-lift joint with every other joint at zero; the
    radial coordinate is sqrt(x^2 + y^2) of the flange in the base frame.
    """
    best = 0.0
    for q2 in np.linspace(-math.pi, math.pi, n_grid):
        T = fk_frames([0.0, q2, 0.0, 0.0, 0.0, 0.0])[-1]
        r = math.hypot(T[0, 3], T[1, 3])
        best = max(best, r)
    return best


# the flange can never be farther from the base origin than the sum of
# the translation magnitudes in the chain
_ABS_REACH_BOUND = UR5E_D[0] + abs(UR5E_A[1]) + abs(UR5E_A[2]) + UR5E_D[3] + UR5E_D[4] + UR5E_D[5]


@dataclass(frozen=True)
class IKResult:
    q: np.ndarray
    converged: bool
    iterations: int
    pos_err: float
    rot_err: float


def _pose_error(target_p, target_R, p, R):
    """Position delta and rotation vector taking R onto target_R."""
    q_err = quat_from_matrix(target_R @ R.T)
    w = min(max(q_err[0], -1.0), 1.0)
    v = q_err[1:]
    nv = np.linalg.norm(v)
    angle = 2.0 * math.atan2(nv, w)
    rot_vec = (v / nv) * angle if nv > 1e-12 else np.zeros(3)
    return target_p - p, rot_vec


def _dls_solve(target_p, target_R, seed, pos_tol, rot_tol, max_iters, damping=0.05):
    q = np.array(seed, dtype=float)
    lam2 = damping * damping * np.eye(6)
    for it in range(max_iters + 1):
        frames = fk_frames(q)
        T = frames[-1]
        dp, dr = _pose_error(target_p, target_R, T[:3, 3], T[:3, :3])
        pos_err = float(np.linalg.norm(dp))
        rot_err = float(np.linalg.norm(dr))
        if pos_err < pos_tol and rot_err < rot_tol:
            return IKResult(q, True, it, pos_err, rot_err)
        if it == max_iters:
            break
        J = jacobian(q)
        e = np.concatenate([dp, dr])
        dq = J.T @ np.linalg.solve(J @ J.T + lam2, e)
        step = np.linalg.norm(dq)
        if step > 0.3:
            dq *= 0.3 / step
        q = q + dq
    return IKResult(q, False, max_iters, pos_err, rot_err)


def ik(model: ArmModel, target: Pose6D, seed_q=None, *,
       pos_tol: float = 1e-6, rot_tol: float = 1e-4,
       max_iters: int = 500, n_seeds: int = 8) -> IKResult:
    """Damped-least-squares IK in the world frame.

    A seed already satisfying the tolerances is returned unchanged (zero
    iterations), which makes ik(flange_pose(q), seed=q) an exact fixed
    point. Otherwise up to `n_seeds` starts run: the given seed first,
    then perturbed copies from a fixed random stream. Among converged
    runs the solution closest to the seed wins. Raises UnreachableError
    when the target is provably outside the workspace or no start
    converges.
    """
    seed = np.zeros(N_JOINTS) if seed_q is None else np.asarray(seed_q, float).reshape(N_JOINTS)
    # express the target in the base frame once
    local = model.base_pose.inverse().compose(target)
    target_p = local.position
    target_R = local.rotation_matrix()
    if np.linalg.norm(target_p) > _ABS_REACH_BOUND:
        raise UnreachableError(
            f"target {np.linalg.norm(target_p):.3f} m from base exceeds "
            f"{_ABS_REACH_BOUND:.3f} m bound")

    first = _dls_solve(target_p, target_R, seed, pos_tol, rot_tol, max_iters)
    if first.converged and first.iterations == 0:
        return first
    candidates = [first] if first.converged else []
    rng = np.random.default_rng(np.random.SeedSequence(_IK_SEED_ROOT))
    for _ in range(n_seeds - 1):
        start = seed + rng.normal(0.0, 0.6, size=N_JOINTS)
        res = _dls_solve(target_p, target_R, start, pos_tol, rot_tol, max_iters)
        if res.converged:
            candidates.append(res)
    if not candidates:
        raise UnreachableError("no IK start converged on the target pose")
    return min(candidates, key=lambda r: float(np.linalg.norm(r.q - seed)))


def standoff_pose(cluster_pose: Pose6D, standoff: float = 0.2,
                  up=(0.0, 0.0, 1.0)) -> Pose6D:
    """Tool pose facing a cluster from `standoff` meters out along its
    approach axis; tool +Z (the nozzle) points back at the cluster."""
    if standoff <= 0:
        raise ValueError("standoff must be positive")
    R = cluster_pose.rotation_matrix()
    axis = R[:, 2]
    position = cluster_pose.position + standoff * axis
    return Pose6D(position, frame_from_axis(-axis, up))


# ---------------------------------------------------------------------------
# Distances and collision checking
# ---------------------------------------------------------------------------

def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Exact minimum distance between segments [p1,q1] and [p2,q2]."""
    p1 = np.asarray(p1, float)
    q1 = np.asarray(q1, float)
    p2 = np.asarray(p2, float)
    q2 = np.asarray(q2, float)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-15
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def segment_capsule_distance(p0, p1, capsule: Capsule) -> float:
    """Distance from a segment to a capsule surface, clamped at zero."""
    d = segment_segment_distance(p0, p1, capsule.p0, capsule.p1)
    return max(0.0, d - capsule.radius)


def arm_clearance(model: ArmModel, q, obstacles: List[Capsule]) -> float:
    """Worst-case surface clearance between any link and any obstacle.

    Negative values mean penetration depth. With no obstacles the arm is
    trivially clear (+inf).
    """
    if not obstacles:
        return math.inf
    worst = math.inf
    for a0, a1 in link_segments_world(model, q):
        for obs in obstacles:
            d = segment_segment_distance(a0, a1, obs.p0, obs.p1)
            worst = min(worst, d - model.link_radius - obs.radius)
    return worst


# ---------------------------------------------------------------------------
# Motion planning
# ---------------------------------------------------------------------------

@dataclass
class MotionPlan:
    waypoints: np.ndarray  # (m, 6) joint configurations
    times: np.ndarray      # (m,) seconds, monotone from 0
    n_via: int = 0

    @property
    def duration(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    @property
    def q_start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def q_goal(self) -> np.ndarray:
        return self.waypoints[-1]


def _interp_segment(q0, q1, step_rad):
    span = float(np.max(np.abs(q1 - q0)))
    n = max(int(math.ceil(span / step_rad)), 1)
    return np.linspace(q0, q1, n + 1)


def _trapezoid_times(fracs, magnitude, vmax, amax):
    """Times at cumulative displacement fractions under a trapezoidal
    (or triangular) velocity profile."""
    M = magnitude
    if M < 1e-12:
        return np.zeros_like(fracs)
    out = np.empty_like(fracs)
    if M * amax >= vmax * vmax:
        t_acc = vmax / amax
        d_acc = 0.5 * vmax * vmax / amax
        total = M / vmax + vmax / amax
        for i, fr in enumerate(fracs):
            s = fr * M
            if s <= d_acc:
                out[i] = math.sqrt(2.0 * s / amax)
            elif s <= M - d_acc:
                out[i] = t_acc + (s - d_acc) / vmax
            else:
                out[i] = total - math.sqrt(max(2.0 * (M - s) / amax, 0.0))
    else:
        total = 2.0 * math.sqrt(M / amax)
        for i, fr in enumerate(fracs):
            s = fr * M
            if s <= 0.5 * M:
                out[i] = math.sqrt(2.0 * s / amax)
            else:
                out[i] = total - math.sqrt(max(2.0 * (M - s) / amax, 0.0))
    return out


def _time_polyline(segments, vmax, amax):
    """Concatenate per-segment trapezoid profiles (the arm settles at
    each via config, so every segment starts and ends at rest)."""
    waypoints = [segments[0][0:1]]
    times = [np.zeros(1)]
    t0 = 0.0
    for seg in segments:
        M = float(np.max(np.abs(seg[-1] - seg[0])))
        if len(seg) > 1:
            fr = np.max(np.abs(seg - seg[0]), axis=1) / M if M > 1e-12 else np.zeros(len(seg))
            t = _trapezoid_times(fr, M, vmax, amax)
            waypoints.append(seg[1:])
            times.append(t0 + t[1:])
            t0 += t[-1]
    return np.concatenate(waypoints), np.concatenate(times)


def plan_motion(model: ArmModel, q_start, q_goal, obstacles: List[Capsule], *,
                margin: float = 0.02, step_deg: float = 1.0,
                max_via_attempts: int = 20, speed_scale: float = 1.0,
                seed: int = 0) -> MotionPlan:
    """Joint-space plan from q_start to q_goal with capsule clearance.

    The straight joint-space line is tried first, discretized so no
    joint moves more than `step_deg` between waypoints, and every
    waypoint must clear every obstacle by `margin`. If the line is
    blocked, up to `max_via_attempts` random via configurations (seeded,
    reproducible) are tried, each splitting the motion into two straight
    segments. Timing is a trapezoidal profile under the model's velocity
    and acceleration limits scaled by `speed_scale`.
    """
    if not (0 < speed_scale <= 1.0):
        raise ValueError("speed_scale must lie in (0, 1]")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    q_start = np.asarray(q_start, float).reshape(N_JOINTS)
    q_goal = np.asarray(q_goal, float).reshape(N_JOINTS)
    step_rad = math.radians(step_deg)

    def clear(qs):
        return all(arm_clearance(model, q, obstacles) >= margin for q in qs)

    if not clear([q_start]):
        raise PlanFailedError("start configuration violates clearance margin")
    if not clear([q_goal]):
        raise PlanFailedError("goal configuration violates clearance margin")

    vmax = model.velocity_limit * speed_scale
    amax = model.acceleration_limit * speed_scale

    direct = _interp_segment(q_start, q_goal, step_rad)
    if clear(direct[1:-1]):
        wp, t = _time_polyline([direct], vmax, amax)
        return MotionPlan(wp, t, n_via=0)

    rng = np.random.default_rng(np.random.SeedSequence((_IK_SEED_ROOT, seed)))
    mid = 0.5 * (q_start + q_goal)
    for _ in range(max_via_attempts):
        via = mid + rng.normal(0.0, 0.5, size=N_JOINTS)
        if not clear([via]):
            continue
        seg_a = _interp_segment(q_start, via, step_rad)
        seg_b = _interp_segment(via, q_goal, step_rad)
        if clear(seg_a[1:-1]) and clear(seg_b[1:-1]):
            wp, t = _time_polyline([seg_a, seg_b], vmax, amax)
            return MotionPlan(wp, t, n_via=1)
    raise PlanFailedError(
        f"no collision-free path within {max_via_attempts} via attempts")


def export_trajectory_csv(plan: MotionPlan, path):
    """Write t, q1..q6 rows for offline playback."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"q{i + 1}" for i in range(N_JOINTS)])
        for t, q in zip(plan.times, plan.waypoints):
            writer.writerow([f"{t:.6f}"] + [f"{v:.9f}" for v in q])


def load_trajectory_csv(path) -> MotionPlan:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t"] + [f"q{i + 1}" for i in range(N_JOINTS)]:
        raise ValueError("not a trajectory csv")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return MotionPlan(data[:, 1:], data[:, 0])
