"""Instance segmentation oracle, detection metrics, and target building.

The segmenter here is a stand-in for the learned detector on the real
rig: it reads instances off the rendered ground-truth mask and can
degrade them (misses, erosion, false positives) to exercise the rest of
the pipeline. Detection quality is scored with average precision over a
confidence-ranked greedy matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy import ndimage

from .errors import DegenerateOrientationError, InvalidStateError, NotFoundError
from .geometry import (
    NormalParams,
    PointCloud,
    Pose6D,
    approach_axis,
    deproject_pixels,
    estimate_cluster_pose,
)
from .orchard import RenderedFrame

# Target lifecycle. Auto states carry a reason; review states carry a note.
CANDIDATE = "candidate"
AUTO_REJECTED = "auto_rejected"
PENDING_REVIEW = "pending_review"
APPROVED = "approved"
REJECTED = "rejected"

REASON_INVALID_DEPTH = "invalid_depth"
REASON_DEGENERATE = "degenerate_orientation"
REASON_INWARD = "inward_facing"
REASON_OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class Detection:
    """One predicted instance: boolean mask plus a confidence score."""

    instance_id: int
    mask: np.ndarray
    confidence: float

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.dtype != np.bool_:
            raise ValueError("detection mask must be boolean")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")
        object.__setattr__(self, "mask", m)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks (0 when both empty)."""
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def average_precision(detections: List[Detection], gt_masks: List[np.ndarray],
                      iou_threshold: float = 0.5) -> float:
    """AP = sum_t (R_t - R_{t-1}) P_t over the confidence-ranked detections.

    Ties in confidence rank by instance id ascending. Each detection is
    greedily matched to the still-unmatched ground-truth instance of
    maximum IoU, and counts as a true positive only if that IoU reaches
    the threshold. With no ground truth, an empty detection list scores
    1.0 and any detection is a false positive scoring 0.0.
    """
    n_gt = len(gt_masks)
    if n_gt == 0:
        return 1.0 if not detections else 0.0
    order = sorted(detections, key=lambda d: (-d.confidence, d.instance_id))
    matched = [False] * n_gt
    tp = 0
    fp = 0
    ap = 0.0
    prev_recall = 0.0
    for det in order:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gt_masks):
            if matched[j]:
                continue
            v = iou(det.mask, gt)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[best_j] = True
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt
        ap += (recall - prev_recall) * (tp / (tp + fp))
        prev_recall = recall
    return ap


def gt_masks_from_frame(frame: RenderedFrame) -> Dict[int, np.ndarray]:
    """Per-cluster boolean masks from the rendered id image (0 dropped)."""
    out = {}
    for cid in np.unique(frame.mask):
        if cid == 0:
            continue
        out[int(cid)] = frame.mask == cid
    return out


def save_detections(path, detections: List[Detection]):
    """Persist detections as a single .npz (stacked masks, ids, scores)."""
    if detections:
        masks = np.stack([d.mask for d in detections])
        ids = np.array([d.instance_id for d in detections], dtype=np.int64)
        confs = np.array([d.confidence for d in detections])
    else:
        masks = np.zeros((0, 1, 1), dtype=bool)
        ids = np.zeros(0, dtype=np.int64)
        confs = np.zeros(0)
    np.savez_compressed(path, masks=masks, ids=ids, confidences=confs)


def load_detections(path) -> List[Detection]:
    data = np.load(path)
    return [Detection(int(i), m, float(c))
            for i, m, c in zip(data["ids"], data["masks"], data["confidences"])]


@dataclass(frozen=True)
class SegmenterConfig:
    """Degradation knobs for the ground-truth-backed segmenter."""

    confidence_mean: float = 0.92
    confidence_sd: float = 0.04
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    erode_px: int = 0

    def __post_init__(self):
        if not (0.0 <= self.miss_rate < 1.0):
            raise ValueError("miss_rate must lie in [0, 1)")
        if not (0.0 <= self.false_positive_rate < 1.0):
            raise ValueError("false_positive_rate must lie in [0, 1)")
        if self.erode_px < 0:
            raise ValueError("erode_px must be nonnegative")


class OracleSegmenter:
    """Reads instances from the frame's ground-truth mask.

    With default config the output is exact: one detection per cluster,
    mask identical to ground truth, randomized confidence. Degradations
    are applied per instance with the per-call seed, so repeated calls
    with the same seed return identical detections.
    """

    def __init__(self, config: SegmenterConfig = SegmenterConfig()):
        self.config = config

    def segment(self, frame: RenderedFrame, seed: int = 0) -> List[Detection]:
        rng = np.random.default_rng(seed)
        cfg = self.config
        detections = []
        for cid, mask in sorted(gt_masks_from_frame(frame).items()):
            conf = float(np.clip(rng.normal(cfg.confidence_mean, cfg.confidence_sd),
                                 0.05, 0.999))
            dropped = rng.uniform() < cfg.miss_rate
            if dropped:
                continue
            m = mask
            if cfg.erode_px > 0:
                m = ndimage.binary_erosion(mask, iterations=cfg.erode_px)
                if not m.any():
                    m = mask  # erosion ate the instance, keep the original
            detections.append(Detection(cid, m, conf))
        if cfg.false_positive_rate > 0:
            H, W = frame.mask.shape
            next_id = 1 + max((d.instance_id for d in detections), default=0)
            n_fp = int(rng.binomial(max(len(detections), 1),
                                    cfg.false_positive_rate))
            for k in range(n_fp):
                cy = int(rng.integers(5, H - 5))
                cx = int(rng.integers(5, W - 5))
                r = int(rng.integers(3, 9))
                ys, xs = np.ogrid[:H, :W]
                blob = (ys - cy) ** 2 + (xs - cx) ** 2 <= r * r
                conf = float(np.clip(rng.normal(0.55, 0.08), 0.05, 0.999))
                detections.append(Detection(next_id + k, blob, conf))
        return detections


# ---------------------------------------------------------------------------
# Point clouds and targets
# ---------------------------------------------------------------------------

def frame_point_cloud(frame: RenderedFrame, *, max_points_per_cluster: Optional[int] = None,
                      include_background: bool = False) -> PointCloud:
    """Deproject valid-depth pixels into a camera-frame cloud with ids.

    Subsampling keeps every cluster at or under `max_points_per_cluster`
    by taking evenly spaced pixels in raster order, so it is deterministic.
    """
    valid = frame.depth_m > 0
    if not include_background:
        valid &= frame.mask > 0
    vs, us = np.nonzero(valid)
    ids = frame.mask[vs, us].astype(np.uint32)
    if max_points_per_cluster is not None:
        keep = np.zeros(len(vs), dtype=bool)
        for cid in np.unique(ids):
            idx = np.nonzero(ids == cid)[0]
            if len(idx) > max_points_per_cluster:
                sel = np.linspace(0, len(idx) - 1, max_points_per_cluster).astype(int)
                idx = idx[sel]
            keep[idx] = True
        vs, us, ids = vs[keep], us[keep], ids[keep]
    pts = deproject_pixels(frame.camera, us.astype(float), vs.astype(float),
                           frame.depth_m[vs, us])
    return PointCloud(pts, cluster_ids=ids)


@dataclass
class ClusterTarget:
    """One cluster as the mission sees it: pose estimate plus lifecycle state."""

    cluster_id: int
    state: str = CANDIDATE
    reason: Optional[str] = None
    note: Optional[str] = None
    confidence: Optional[float] = None
    n_valid_pixels: int = 0
    depth_median: Optional[float] = None
    pose_world: Optional[Pose6D] = None

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "state": self.state,
            "reason": self.reason,
            "note": self.note,
            "confidence": self.confidence,
            "n_valid_pixels": self.n_valid_pixels,
            "depth_median_m": self.depth_median,
            "pose_world": None if self.pose_world is None else self.pose_world.to_dict(),
        }


def build_targets(frame: RenderedFrame, detections: Optional[List[Detection]] = None,
                  params: NormalParams = NormalParams(), *,
                  min_valid_pixels: int = 50,
                  max_points_per_cluster: int = 1200) -> List[ClusterTarget]:
    """Estimate a world pose per detected cluster.

    Detections default to the exact ground-truth instances. A cluster
    whose detection covers fewer than `min_valid_pixels` valid-depth
    pixels is auto-rejected as invalid_depth; a cluster whose averaged
    normal cancels out is auto-rejected as degenerate_orientation.
    """
    if detections is None:
        detections = [Detection(cid, m, 1.0)
                      for cid, m in sorted(gt_masks_from_frame(frame).items())]
    targets = []
    for det in sorted(detections, key=lambda d: d.instance_id):
        sel = det.mask & (frame.depth_m > 0)
        n_valid = int(sel.sum())
        target = ClusterTarget(cluster_id=det.instance_id,
                               confidence=det.confidence,
                               n_valid_pixels=n_valid)
        if n_valid < min_valid_pixels:
            target.state = AUTO_REJECTED
            target.reason = REASON_INVALID_DEPTH
            targets.append(target)
            continue
        vs, us = np.nonzero(sel)
        depths = frame.depth_m[vs, us]
        target.depth_median = float(np.median(depths))
        if len(vs) > max_points_per_cluster:
            pick = np.linspace(0, len(vs) - 1, max_points_per_cluster).astype(int)
            vs, us, depths = vs[pick], us[pick], depths[pick]
        pts = deproject_pixels(frame.camera, us.astype(float), vs.astype(float), depths)
        cloud = PointCloud(pts, cluster_ids=np.full(len(pts), det.instance_id,
                                                    dtype=np.uint32))
        try:
            pose_cam = estimate_cluster_pose(cloud, det.instance_id, params)
        except DegenerateOrientationError:
            target.state = AUTO_REJECTED
            target.reason = REASON_DEGENERATE
            targets.append(target)
            continue
        target.pose_world = frame.camera_pose.compose(pose_cam)
        targets.append(target)
    return targets


def auto_filter(targets: List[ClusterTarget], camera_position, *,
                max_range: float = 1.0,
                max_facing_angle_deg: float = 90.0) -> List[ClusterTarget]:
    """Reject unreachable candidates, promote the rest to pending_review.

    A cluster is inward_facing when its approach axis points away from
    the camera: the angle between the axis and the cluster-to-camera ray
    exceeds `max_facing_angle_deg`. A cluster is out_of_range when its
    median depth exceeds `max_range` meters. Already-rejected targets
    pass through untouched; mutation is in place.
    """
    cam = np.asarray(camera_position, float)
    for t in targets:
        if t.state != CANDIDATE:
            continue
        axis = approach_axis(t.pose_world)
        to_camera = cam - t.pose_world.position
        norm = np.linalg.norm(to_camera)
        cos = float(np.dot(axis, to_camera) / norm) if norm > 0 else 1.0
        angle = math.degrees(math.acos(np.clip(cos, -1.0, 1.0)))
        if angle > max_facing_angle_deg:
            t.state = AUTO_REJECTED
            t.reason = REASON_INWARD
        elif t.depth_median is not None and t.depth_median > max_range:
            t.state = AUTO_REJECTED
            t.reason = REASON_OUT_OF_RANGE
        else:
            t.state = PENDING_REVIEW
    return targets


def apply_operator_review(targets: List[ClusterTarget], cluster_id: int,
                          approve: bool, note: Optional[str] = None) -> ClusterTarget:
    """Record one operator decision. Re-reviewing a reviewed target is
    allowed (the operator may change their mind); reviewing an
    auto-rejected or unbuilt target is a state error."""
    for t in targets:
        if t.cluster_id == cluster_id:
            if t.state not in (PENDING_REVIEW, APPROVED, REJECTED):
                raise InvalidStateError(
                    f"cluster {cluster_id} is {t.state}, not reviewable")
            t.state = APPROVED if approve else REJECTED
            t.note = note
            return t
    raise NotFoundError(f"no target with cluster id {cluster_id}")


def close_review(targets: List[ClusterTarget]) -> List[ClusterTarget]:
    """Unreviewed targets default to approved when review closes."""
    for t in targets:
        if t.state == PENDING_REVIEW:
            t.state = APPROVED
    return targets


def approved_targets(targets: List[ClusterTarget]) -> List[ClusterTarget]:
    return [t for t in targets if t.state == APPROVED]
