"""Mission orchestration: perceive, review, sequence, move, spray, report.

A mission walks a fixed phase graph:

    idle -> acquire_frame -> segment -> estimate_poses -> auto_filter
         -> operator_review -> sequence_targets
         -> (plan_motion -> execute -> spray -> update_targets)* -> complete

Planning failures route plan_motion -> update_targets directly, so a
cluster that cannot be reached is never sprayed. The operator may hold
the mission in operator_review indefinitely; everything after review is
deterministic given the seed.

Timing uses per-cluster stage budgets. Cycle statistics cover sprayed
clusters only, and each sprayed cluster is billed the full frame-level
acquisition and estimation budgets, which makes the mean total equal
the sum of the stage means by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .arm import ArmModel, flange_pose, ik, plan_motion, standoff_pose
from .errors import (
    InvalidStateError,
    PlanFailedError,
    TankEmptyError,
    UndefinedMetricError,
    UnreachableError,
)
from .geometry import NormalParams, Pose6D, camera_from_fov, look_at_pose
from .orchard import Scene, render_frame
from .perception import (
    OracleSegmenter,
    SegmenterConfig,
    apply_operator_review,
    approved_targets,
    auto_filter,
    build_targets,
    close_review,
)
from .sequencing import solve_tour, tour_length
from .sprayer import SprayerConfig, TankState, simulate_spray, tick_tank

REPORT_SCHEMA = "mission-report/1"

IDLE = "idle"
ACQUIRE_FRAME = "acquire_frame"
SEGMENT = "segment"
ESTIMATE_POSES = "estimate_poses"
AUTO_FILTER = "auto_filter"
OPERATOR_REVIEW = "operator_review"
SEQUENCE_TARGETS = "sequence_targets"
PLAN_MOTION = "plan_motion"
EXECUTE = "execute"
SPRAY = "spray"
UPDATE_TARGETS = "update_targets"
COMPLETE = "complete"

# terminal target states added on top of the perception lifecycle
SPRAYED = "sprayed"
FAILED = "failed"

# arm parked pose: elbow up, flange out toward the trellis side
DEFAULT_HOME_Q = (0.0, -math.pi / 2, math.pi / 2, -math.pi / 2, -math.pi / 2, 0.0)

# calibrated so the benchmark mission's mean move duration lands near
# the 3.2 s stage budget when timing from trajectories
DEFAULT_SPEED_SCALE = 0.076


@dataclass(frozen=True)
class StageBudget:
    """Per-cluster cycle time allowance, seconds per stage."""

    acquire_s: float = 0.4
    estimate_s: float = 0.8
    plan_s: float = 0.1
    move_s: float = 3.2
    spray_s: float = 2.0

    def __post_init__(self):
        for name in ("acquire_s", "estimate_s", "plan_s", "move_s", "spray_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def total_s(self) -> float:
        return self.acquire_s + self.estimate_s + self.plan_s + self.move_s + self.spray_s


@dataclass(frozen=True)
class MissionParams:
    """Everything a mission needs beyond the scene and the seed."""

    camera_width: int = 640
    camera_height: int = 360
    fov_h_deg: float = 87.0
    fov_v_deg: float = 58.0
    camera_eye: tuple = (0.0, -0.7, 1.0)
    camera_target: tuple = (0.0, 0.0, 1.0)
    dropout: float = 0.0
    noise_coeff: float = 0.0
    arm_base: tuple = (0.0, -0.6, 0.9)
    home_q: tuple = DEFAULT_HOME_Q
    standoff_m: float = 0.2
    margin_m: float = 0.02
    step_deg: float = 1.0
    speed_scale: float = DEFAULT_SPEED_SCALE
    max_via_attempts: int = 20
    segmenter: SegmenterConfig = SegmenterConfig()
    normals: NormalParams = NormalParams()
    min_valid_pixels: int = 50
    max_range_m: float = 1.0
    max_facing_angle_deg: float = 90.0
    sprayer: SprayerConfig = SprayerConfig()
    budget: StageBudget = StageBudget()
    execute_time_source: str = "budget"
    concentration_g_per_l: float = 2.0
    fruit_p_max: float = 0.65
    fruit_beta: float = 1.0

    def __post_init__(self):
        if self.execute_time_source not in ("budget", "trajectory"):
            raise ValueError("execute_time_source must be 'budget' or 'trajectory'")
        if self.standoff_m <= 0:
            raise ValueError("standoff must be positive")
        if self.concentration_g_per_l < 0:
            raise ValueError("concentration must be nonnegative")

    def camera(self):
        return camera_from_fov(self.camera_width, self.camera_height,
                               self.fov_h_deg, self.fov_v_deg)

    def camera_pose(self) -> Pose6D:
        return look_at_pose(self.camera_eye, self.camera_target)

    def arm(self) -> ArmModel:
        return ArmModel(base_pose=Pose6D(np.asarray(self.arm_base, float),
                                         np.array([1.0, 0.0, 0.0, 0.0])))


def round_half_up_1(x: float) -> float:
    """Round a nonnegative value to 1 decimal, halves away from zero.

    Banker's rounding would turn 87/202 into 43.0; field reports round
    43.05 up to 43.1, so that convention is pinned here.
    """
    if x < 0:
        raise ValueError("defined for nonnegative values only")
    return math.floor(x * 10.0 + 0.5) / 10.0


def percentage(numerator: float, denominator: float) -> float:
    """100 * a / b rounded to 1 decimal, or UndefinedMetricError on b = 0."""
    if denominator == 0:
        raise UndefinedMetricError("percentage of an empty denominator")
    return round_half_up_1(100.0 * numerator / denominator)


def simulate_fruit_set(doses_ml, concentration_g_per_l, *, p_max: float = 0.65,
                       beta: float = 1.0, seed: int = 0) -> np.ndarray:
    """Bernoulli fruit set per flower from deposited pollen mass.

    p_i = p_max * (1 - exp(-beta * mass_mg_i)), mass from concentration
    (g/l) times dose (ml), which is numerically milligrams. Draws use
    common random numbers: one uniform per flower from the seed, so
    raising the concentration can only turn misses into sets, never the
    reverse.
    """
    doses = np.asarray(doses_ml, dtype=float)
    if (doses < 0).any():
        raise ValueError("doses must be nonnegative")
    if concentration_g_per_l < 0:
        raise ValueError("concentration must be nonnegative")
    if not (0.0 <= p_max <= 1.0) or beta <= 0:
        raise ValueError("require 0 <= p_max <= 1 and beta > 0")
    mass_mg = concentration_g_per_l * doses
    p = p_max * (1.0 - np.exp(-beta * mass_mg))
    u = np.random.default_rng(np.random.SeedSequence((seed, 1011))).uniform(size=doses.shape)
    return u < p


def fruit_set_metrics(flowers_total: int, clusters_total: int,
                      doses_ml, set_mask,
                      clusters_attempted: int, clusters_sprayed: int) -> dict:
    """Coverage and set-rate percentages in field-report form."""
    doses = np.asarray(doses_ml, dtype=float)
    set_mask = np.asarray(set_mask, dtype=bool)
    flowers_sprayed = int((doses > 0).sum())
    flowers_set = int(set_mask.sum())
    out = {
        "flowers_total": flowers_total,
        "flowers_sprayed": flowers_sprayed,
        "flowers_set": flowers_set,
        "clusters_total": clusters_total,
        "clusters_attempted": clusters_attempted,
        "clusters_sprayed": clusters_sprayed,
        "spray_coverage_pct": percentage(flowers_sprayed, flowers_total),
        "cluster_coverage_pct": percentage(clusters_sprayed, clusters_total),
        "set_rate_pct": percentage(flowers_set, flowers_total),
    }
    try:
        set_sprayed = int((set_mask & (doses > 0)).sum())
        out["set_given_sprayed_pct"] = percentage(set_sprayed, flowers_sprayed)
    except UndefinedMetricError:
        out["set_given_sprayed_pct"] = None
    return out


def dump_report(report: dict) -> str:
    """The one serializer for mission reports; CLI and API both use it,
    so equal dicts give byte-equal documents."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


class Mission:
    """One pollination mission over a scene.

    The service drives perceive / review / close_review_and_run from
    separate requests; run() does the whole thing for the CLI.
    """

    def __init__(self, scene: Scene, params: MissionParams = MissionParams(),
                 seed: int = 0):
        self.scene = scene
        self.params = params
        self.seed = seed
        self.phase = IDLE
        self.t_s = 0.0
        self.trace: List[dict] = []
        self.frame = None
        self.detections = None
        self.targets = None
        self.tour_order: List[int] = []
        self.tour_length_m: Optional[float] = None
        self.spray_events: List[dict] = []
        self.cycle_rows: List[dict] = []
        self.tank = TankState.from_config(params.sprayer)
        self.tank_events: List[dict] = []
        self._arm = params.arm()
        self._camera = params.camera()
        self._camera_pose = params.camera_pose()
        self._q = np.asarray(params.home_q, dtype=float)
        # global flower index: (cluster_id, index within cluster)
        self._flowers = [(c.cluster_id, i, f)
                         for c in scene.clusters for i, f in enumerate(c.flowers)]
        self._doses = np.zeros(len(self._flowers))
        self._set_mask = np.zeros(len(self._flowers), dtype=bool)

    @property
    def flower_count(self) -> int:
        return len(self._flowers)

    # -- phase bookkeeping -------------------------------------------------

    def _transition(self, to_phase: str, cluster_id: Optional[int] = None):
        entry = {"t": round(self.t_s, 9), "from": self.phase, "to": to_phase}
        if cluster_id is not None:
            entry["cluster_id"] = cluster_id
        self.trace.append(entry)
        self.phase = to_phase

    def _advance(self, seconds: float):
        self.t_s += seconds
        if tick_tank(self.tank, seconds / 60.0):
            self.tank_events.append({"t": round(self.t_s, 9), "event": "suspension_replaced"})

    # -- phases ------------------------------------------------------------

    def perceive(self):
        """idle -> ... -> operator_review; returns the built targets."""
        if self.phase != IDLE:
            raise InvalidStateError(f"perceive() only from idle, not {self.phase}")
        p = self.params
        self._transition(ACQUIRE_FRAME)
        self.frame = render_frame(self.scene, self._camera, self._camera_pose,
                                  dropout=p.dropout, noise_coeff=p.noise_coeff,
                                  seed=self.seed)
        self._transition(SEGMENT)
        self.detections = OracleSegmenter(p.segmenter).segment(self.frame, seed=self.seed)
        self._advance(p.budget.acquire_s)
        self._transition(ESTIMATE_POSES)
        self.targets = build_targets(self.frame, self.detections, p.normals,
                                     min_valid_pixels=p.min_valid_pixels)
        self._transition(AUTO_FILTER)
        auto_filter(self.targets, self._camera_pose.position,
                    max_range=p.max_range_m,
                    max_facing_angle_deg=p.max_facing_angle_deg)
        self._advance(p.budget.estimate_s)
        self._transition(OPERATOR_REVIEW)
        return self.targets

    def review(self, cluster_id: int, approve: bool, note: Optional[str] = None):
        if self.phase != OPERATOR_REVIEW:
            raise InvalidStateError(f"review only during operator_review, not {self.phase}")
        return apply_operator_review(self.targets, cluster_id, approve, note)

    def close_review_and_run(self) -> dict:
        """Approve whatever is still pending, then run to completion."""
        if self.phase != OPERATOR_REVIEW:
            raise InvalidStateError(
                f"close_review_and_run only from operator_review, not {self.phase}")
        close_review(self.targets)
        self._sequence_and_execute()
        return self.report()

    def run(self) -> dict:
        """Full mission for the CLI: perceive, approve all, execute."""
        if self.phase == IDLE:
            self.perceive()
        return self.close_review_and_run()

    # -- execution ---------------------------------------------------------

    def _sequence_and_execute(self):
        p = self.params
        self._transition(SEQUENCE_TARGETS)
        approved = approved_targets(self.targets)
        order = []
        if approved:
            home_flange = flange_pose(self._arm, self._q).position
            sites = [home_flange] + [
                standoff_pose(t.pose_world, p.standoff_m).position for t in approved]
            tour = solve_tour(np.array(sites))
            self.tour_length_m = float(tour_length(np.array(sites), tour))
            # site 0 is the parked flange; the rest map to approved targets
            order = [approved[i - 1] for i in tour[1:]]
        self.tour_order = [t.cluster_id for t in order]

        for target in order:
            self._run_cluster_cycle(target)
        self._transition(COMPLETE)
        self._finish()

    def _run_cluster_cycle(self, target):
        """plan -> execute -> spray -> update for one approved target."""
        p = self.params
        cid = target.cluster_id
        self._transition(PLAN_MOTION, cid)
        try:
            tool = standoff_pose(target.pose_world, p.standoff_m)
            sol = ik(self._arm, tool, seed_q=self._q)
            plan = plan_motion(self._arm, self._q, sol.q, self.scene.obstacles,
                               margin=p.margin_m, step_deg=p.step_deg,
                               max_via_attempts=p.max_via_attempts,
                               speed_scale=p.speed_scale, seed=cid)
        except (UnreachableError, PlanFailedError) as exc:
            target.state = FAILED
            target.reason = exc.code
            self._advance(p.budget.plan_s)
            self._transition(UPDATE_TARGETS, cid)
            return
        self._advance(p.budget.plan_s)
        self._transition(EXECUTE, cid)
        move_s = plan.duration if p.execute_time_source == "trajectory" else p.budget.move_s
        self._advance(move_s)
        self._q = plan.q_goal.copy()
        self._transition(SPRAY, cid)
        self._spray_at(target, move_s)
        self._advance(p.sprayer.duration_s)
        target.state = SPRAYED
        self._transition(UPDATE_TARGETS, cid)

    def _spray_at(self, target, move_s: float):
        p = self.params
        nozzle = flange_pose(self._arm, self._q)
        flowers = [f for (_, _, f) in self._flowers]
        result = simulate_spray(nozzle, flowers, p.sprayer,
                                obstacles=self.scene.obstacles)
        try:
            self.tank.draw(result.emitted_ml)
        except TankEmptyError:
            # swap in a fresh batch and retry, same as the timed replacement
            self.tank.volume_ml = self.tank.capacity_ml
            self.tank.age_min = 0.0
            self.tank.n_replacements += 1
            self.tank_events.append({"t": round(self.t_s, 9),
                                     "event": "tank_refilled"})
            self.tank.draw(result.emitted_ml)
        self._doses += result.doses_ml
        hit = np.nonzero(result.doses_ml > 0)[0]
        self.spray_events.append({
            "cluster_id": target.cluster_id,
            "t_s": round(self.t_s, 9),
            "emitted_ml": result.emitted_ml,
            "captured_ml": result.total_captured_ml,
            "doses": [{"cluster_id": self._flowers[i][0],
                       "flower_index": self._flowers[i][1],
                       "dose_ml": float(result.doses_ml[i])} for i in hit],
        })
        self.cycle_rows.append({
            "cluster_id": target.cluster_id,
            "acquire_s": p.budget.acquire_s,
            "estimate_s": p.budget.estimate_s,
            "plan_s": p.budget.plan_s,
            "move_s": move_s if p.execute_time_source == "trajectory" else p.budget.move_s,
            "spray_s": p.budget.spray_s,
        })

    def _finish(self):
        p = self.params
        self._set_mask = simulate_fruit_set(
            self._doses, p.concentration_g_per_l,
            p_max=p.fruit_p_max, beta=p.fruit_beta, seed=self.seed)

    # -- reporting -----------------------------------------------------

    def _cycle_block(self) -> dict:
        stages = ("acquire_s", "estimate_s", "plan_s", "move_s", "spray_s")
        rows = []
        for r in self.cycle_rows:
            total = 0.0
            for s in stages:
                total += r[s]
            rows.append({**r, "total_s": total})
        means = {}
        if rows:
            for s in stages:
                means[s] = float(np.mean([r[s] for r in rows]))
            # the accounting identity: mean total is the sum of stage means
            means["total_s"] = (means["acquire_s"] + means["estimate_s"]
                                + means["plan_s"] + means["move_s"] + means["spray_s"])
        return {"source": self.params.execute_time_source,
                "per_cluster": rows, "mean": means}

    def report(self) -> dict:
        if self.phase != COMPLETE:
            raise InvalidStateError("report available only when complete")
        attempted = [t for t in self.targets if t.state in (SPRAYED, FAILED)]
        sprayed = [t for t in self.targets if t.state == SPRAYED]
        fruit = fruit_set_metrics(
            flowers_total=len(self._flowers),
            clusters_total=len(self.scene.clusters),
            doses_ml=self._doses,
            set_mask=self._set_mask,
            clusters_attempted=len(attempted),
            clusters_sprayed=len(sprayed))
        return {
            "schema": REPORT_SCHEMA,
            "seed": self.seed,
            "scene": {"n_clusters": len(self.scene.clusters),
                      "n_flowers": len(self._flowers)},
            "concentration_g_per_l": self.params.concentration_g_per_l,
            "targets": [t.to_dict() for t in self.targets],
            "tour": {"order_cluster_ids": self.tour_order,
                     "length_m": self.tour_length_m,
                     "includes_return_leg": True},
            "spray_events": self.spray_events,
            "tank": {"volume_ml": self.tank.volume_ml,
                     "n_replacements": self.tank.n_replacements,
                     "events": self.tank_events},
            "cycle_time": self._cycle_block(),
            "fruit_set": fruit,
            "duration_s": round(self.t_s, 9),
            "trace": self.trace,
        }

    def trace_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.trace) + "\n"

    def save_trace(self, path):
        Path(path).write_text(self.trace_jsonl())


def run_mission(scene: Scene, params: MissionParams = MissionParams(),
                seed: int = 0) -> dict:
    mission = Mission(scene, params, seed)
    return mission.run()
