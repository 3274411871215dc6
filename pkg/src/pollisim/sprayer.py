"""Electrostatic pollen-spray model: pump flow, cone dispersion, tank.

The pump is linear in drive voltage and delivers 1.573 ml/s at the full
24 V. A spray burst disperses the emitted suspension over a solid-angle
cone from the nozzle; each flower disk captures its subtended fraction,
scaled by incidence angle and doubled by electrostatic attraction when
the disk faces the nozzle. Conservation holds: captured doses are
renormalized so they never exceed the emitted volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .arm import segment_segment_distance
from .errors import TankEmptyError
from .geometry import Pose6D
from .orchard import Capsule, Flower

FULL_VOLTAGE = 24.0
FULL_FLOW_ML_S = 1.573


def flow_rate_ml_s(voltage: float) -> float:
    """Pump flow at a drive voltage, linear through (0, 0) and (24, 1.573)."""
    if not (0.0 <= voltage <= FULL_VOLTAGE):
        raise ValueError(f"voltage {voltage} outside [0, {FULL_VOLTAGE}] V")
    # ratio first: full voltage divides to exactly 1.0, so the rated
    # flow value is returned bit-exactly
    return FULL_FLOW_ML_S * (voltage / FULL_VOLTAGE)


def emitted_volume_ml(voltage: float, duration_s: float) -> float:
    if duration_s < 0:
        raise ValueError("duration must be nonnegative")
    return flow_rate_ml_s(voltage) * duration_s


@dataclass(frozen=True)
class SprayerConfig:
    voltage: float = 24.0
    duration_s: float = 2.0
    cone_half_angle_deg: float = 15.0
    electrostatic_gain: float = 2.0
    tank_capacity_ml: float = 500.0
    replace_interval_min: float = 90.0

    def __post_init__(self):
        if not (0.0 < self.cone_half_angle_deg < 90.0):
            raise ValueError("cone half-angle must lie in (0, 90) degrees")
        if self.electrostatic_gain < 1.0:
            raise ValueError("electrostatic gain below 1 is not physical here")
        if self.tank_capacity_ml <= 0 or self.replace_interval_min <= 0:
            raise ValueError("tank parameters must be positive")

    @property
    def emitted_ml(self) -> float:
        return emitted_volume_ml(self.voltage, self.duration_s)

    @property
    def cone_solid_angle_sr(self) -> float:
        return 2.0 * math.pi * (1.0 - math.cos(math.radians(self.cone_half_angle_deg)))


@dataclass
class SprayResult:
    """Per-flower outcome of one burst, aligned with the input order."""

    emitted_ml: float
    doses_ml: np.ndarray
    in_cone: np.ndarray
    occluded: np.ndarray
    normalized: bool

    @property
    def total_captured_ml(self) -> float:
        return float(self.doses_ml.sum())


def _ray_hits_disk(apex, direction, dist, flower: Flower) -> bool:
    """Does apex + t*direction (unit) cross the disk strictly before dist?"""
    denom = float(direction @ flower.normal)
    if abs(denom) < 1e-12:
        return False
    t = float((flower.position - apex) @ flower.normal) / denom
    if not (1e-9 < t < dist - 1e-9):
        return False
    hit = apex + t * direction
    return float(np.linalg.norm(hit - flower.position)) <= flower.radius


def _ray_hits_capsule(apex, direction, dist, capsule: Capsule) -> bool:
    """Does the finite ray segment pass within the capsule radius?"""
    end = apex + dist * direction
    return segment_segment_distance(apex, end, capsule.p0, capsule.p1) < capsule.radius


def simulate_spray(nozzle_pose: Pose6D, flowers: Sequence[Flower],
                   config: SprayerConfig = SprayerConfig(), *,
                   obstacles: Sequence[Capsule] = ()) -> SprayResult:
    """Distribute one burst over the given flowers.

    A flower inside the cone captures
        emitted * (pi r^2 / d^2) / Omega_cone * max(0, cos_incidence)
    where cos_incidence is stigma normal against the reverse spray
    direction, times the electrostatic gain when that cosine is
    positive. The line of sight must be free: any obstacle capsule or
    other flower disk crossing the nozzle-to-flower ray zeroes the dose.
    If captured doses sum past the emitted volume they are scaled down
    to exactly conserve it.
    """
    apex = nozzle_pose.position
    axis = nozzle_pose.rotation_matrix()[:, 2]
    emitted = config.emitted_ml
    cos_cone = math.cos(math.radians(config.cone_half_angle_deg))
    omega = config.cone_solid_angle_sr

    n = len(flowers)
    doses = np.zeros(n)
    in_cone = np.zeros(n, dtype=bool)
    occluded = np.zeros(n, dtype=bool)
    for i, f in enumerate(flowers):
        to_flower = f.position - apex
        d = float(np.linalg.norm(to_flower))
        if d < 1e-9:
            continue
        direction = to_flower / d
        if float(direction @ axis) < cos_cone:
            continue
        in_cone[i] = True
        blocked = any(_ray_hits_capsule(apex, direction, d, c) for c in obstacles)
        if not blocked:
            for j, other in enumerate(flowers):
                if j != i and _ray_hits_disk(apex, direction, d, other):
                    blocked = True
                    break
        if blocked:
            occluded[i] = True
            continue
        cos_inc = float(f.normal @ (-direction))
        if cos_inc <= 0.0:
            continue
        capture = emitted * (math.pi * f.radius ** 2 / d ** 2) / omega * cos_inc
        doses[i] = capture * config.electrostatic_gain
    total = float(doses.sum())
    normalized = False
    if total > emitted:
        doses *= emitted / total
        normalized = True
        # the rescale can leave the re-sum a few ulp over; shave the
        # largest dose until conservation holds under summation exactly
        while float(doses.sum()) > emitted:
            i = int(np.argmax(doses))
            doses[i] = np.nextafter(doses[i], 0.0)
    return SprayResult(emitted, doses, in_cone, occluded, normalized)


# ---------------------------------------------------------------------------
# Tank lifecycle
# ---------------------------------------------------------------------------

@dataclass
class TankState:
    """Suspension tank with viability-driven replacement.

    The suspension is replaced once its age reaches the configured
    interval; replacement refills the tank and resets the age clock.
    """

    capacity_ml: float = 500.0
    replace_interval_min: float = 90.0
    volume_ml: float = field(default=-1.0)
    age_min: float = 0.0
    n_replacements: int = 0

    def __post_init__(self):
        if self.capacity_ml <= 0 or self.replace_interval_min <= 0:
            raise ValueError("tank parameters must be positive")
        if self.volume_ml < 0:
            self.volume_ml = self.capacity_ml

    @staticmethod
    def from_config(config: SprayerConfig) -> "TankState":
        return TankState(capacity_ml=config.tank_capacity_ml,
                         replace_interval_min=config.replace_interval_min)

    def draw(self, ml: float):
        if ml < 0:
            raise ValueError("draw volume must be nonnegative")
        if ml > self.volume_ml + 1e-12:
            raise TankEmptyError(
                f"requested {ml:.3f} ml with {self.volume_ml:.3f} ml left")
        self.volume_ml -= ml


def tick_tank(tank: TankState, dt_min: float) -> bool:
    """Advance the suspension age; replace the batch when it expires.

    Returns True when a replacement happened during this tick.
    """
    if dt_min < 0:
        raise ValueError("time step must be nonnegative")
    tank.age_min += dt_min
    if tank.age_min >= tank.replace_interval_min:
        tank.age_min = 0.0
        tank.volume_ml = tank.capacity_ml
        tank.n_replacements += 1
        return True
    return False
