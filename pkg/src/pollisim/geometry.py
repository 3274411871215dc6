"""Camera model, depth deprojection, and cluster pose estimation.

Camera frame is right-handed with +Z forward, +X right, +Y down.
Cluster orientation follows the concave-surface reading: per-point
normals come from the smallest eigenvector of the local covariance,
are flipped toward the viewpoint, and their mean defines the outward
approach axis of the cluster.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateOrientationError, InvalidDepthError

UP_TOLERANCE_DEG = 1.0  # below this angle to `up`, roll falls back to world +X


# ---------------------------------------------------------------------------
# Quaternion helpers (w, x, y, z convention)
# ---------------------------------------------------------------------------

def quat_multiply(a, b):
    """Hamilton product a*b, both (w,x,y,z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def quat_from_matrix(R):
    """Unit quaternion (w,x,y,z) from a proper rotation matrix, w >= 0."""
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quat(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose6D:
    """Rigid pose: position (m) plus unit quaternion orientation (w,x,y,z)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(p).all() or not np.isfinite(q).all():
            raise ValueError("pose components must be finite")
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} deviates from 1")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q / n)

    @staticmethod
    def identity() -> "Pose6D":
        return Pose6D(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    def rotation_matrix(self):
        return matrix_from_quat(self.orientation)

    def transform_point(self, p):
        return quat_rotate(self.orientation, np.asarray(p, float)) + self.position

    def transform_direction(self, d):
        return quat_rotate(self.orientation, np.asarray(d, float))

    def compose(self, other: "Pose6D") -> "Pose6D":
        """self ∘ other: apply `other` first, then `self`."""
        return Pose6D(self.transform_point(other.position),
                      quat_multiply(self.orientation, other.orientation))

    def inverse(self) -> "Pose6D":
        qi = quat_conjugate(self.orientation)
        return Pose6D(-quat_rotate(qi, self.position), qi)

    def to_dict(self):
        return {"position_m": [float(v) for v in self.position],
                "quaternion_wxyz": [float(v) for v in self.orientation]}

    @staticmethod
    def from_dict(d) -> "Pose6D":
        return Pose6D(np.asarray(d["position_m"], float),
                      np.asarray(d["quaternion_wxyz"], float))


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose6D:
    """Camera pose with +Z toward `target`, +X right, +Y down."""
    eye = np.asarray(eye, float)
    z = np.asarray(target, float) - eye
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("eye and target coincide")
    z = z / nz
    x = np.cross(z, np.asarray(up, float))
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("view direction parallel to up")
    x = x / nx
    y = np.cross(z, x)
    return Pose6D(eye, quat_from_matrix(np.column_stack([x, y, z])))


def frame_from_axis(axis, up=(0.0, 0.0, 1.0)):
    """Quaternion whose +Z is `axis`, with roll fixed by `up`.

    The frame +X is the normalized projection of `up` onto the plane
    orthogonal to `axis`; when `axis` is within 1 degree of ±`up`, +X
    falls back to world +X (projected) so the frame stays defined.
    """
    z = np.asarray(axis, float)
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("axis must be nonzero")
    z = z / nz
    up = np.asarray(up, float)
    up = up / np.linalg.norm(up)
    if abs(float(np.dot(z, up))) > math.cos(math.radians(UP_TOLERANCE_DEG)):
        up = np.array([1.0, 0.0, 0.0])
    x = up - np.dot(up, z) * z
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.column_stack([x, y, z])
    return quat_from_matrix(R)


# ---------------------------------------------------------------------------
# Camera model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera intrinsics with a valid depth range (m)."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    depth_min: float = 0.1
    depth_max: float = 3.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")
        if not (0 < self.depth_min < self.depth_max):
            raise ValueError("require 0 < depth_min < depth_max")

    def to_dict(self):
        return {"width": self.width, "height": self.height,
                "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "depth_min": self.depth_min, "depth_max": self.depth_max}

    @staticmethod
    def from_dict(d) -> "CameraModel":
        return CameraModel(**d)


def camera_from_fov(width, height, fov_h_deg, fov_v_deg,
                    depth_min=0.1, depth_max=3.0) -> CameraModel:
    """Intrinsics from resolution + field of view, principal point centered."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    if not (0 < fov_h_deg < 180 and 0 < fov_v_deg < 180):
        raise ValueError("FOV must lie in (0, 180) degrees")
    fx = (width / 2.0) / math.tan(math.radians(fov_h_deg) / 2.0)
    fy = (height / 2.0) / math.tan(math.radians(fov_v_deg) / 2.0)
    return CameraModel(width, height, fx, fy,
                       (width - 1) / 2.0, (height - 1) / 2.0,
                       depth_min, depth_max)


def deproject(camera: CameraModel, pixel, depth: float):
    """Pixel (u, v) at `depth` meters -> (X, Y, Z) in the camera frame."""
    u, v = pixel
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"pixel ({u}, {v}) outside image")
    if not math.isfinite(depth) or not (camera.depth_min <= depth <= camera.depth_max):
        raise InvalidDepthError(f"depth {depth} outside [{camera.depth_min}, {camera.depth_max}]")
    return np.array([(u - camera.cx) * depth / camera.fx,
                     (v - camera.cy) * depth / camera.fy,
                     depth])


def project(camera: CameraModel, point):
    """Camera-frame point -> (u, v) pixel coordinates (no bounds check)."""
    x, y, z = point
    if z <= 0:
        raise ValueError("point behind the camera")
    return np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])


def deproject_pixels(camera: CameraModel, us, vs, depths):
    """Vectorized deprojection; caller guarantees valid finite depths."""
    us = np.asarray(us, float)
    vs = np.asarray(vs, float)
    depths = np.asarray(depths, float)
    return np.column_stack([(us - camera.cx) * depths / camera.fx,
                            (vs - camera.cy) * depths / camera.fy,
                            depths])


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

PPC_MAGIC = b"PPC1"


@dataclass
class PointCloud:
    """Camera-frame points with optional unit normals and cluster ids.

    Invalid normals are stored as NaN rows; `normal_valid` exposes them.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    cluster_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise ValueError("point coordinates must be finite")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if self.normals.shape[0] != self.points.shape[0]:
                raise ValueError("normals/points length mismatch")
            valid = ~np.isnan(self.normals).any(axis=1)
            norms = np.linalg.norm(self.normals[valid], axis=1)
            if valid.any() and not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("stored normals must be unit length")
        if self.cluster_ids is not None:
            self.cluster_ids = np.asarray(self.cluster_ids, dtype=np.uint32).reshape(-1)
            if self.cluster_ids.shape[0] != self.points.shape[0]:
                raise ValueError("cluster_ids/points length mismatch")

    def __len__(self):
        return self.points.shape[0]

    @property
    def normal_valid(self):
        if self.normals is None:
            return np.zeros(len(self), dtype=bool)
        return ~np.isnan(self.normals).any(axis=1)

    def to_bytes(self) -> bytes:
        """Binary form: magic "PPC1", u32 count, f32 xyz triples, then
        optional f32 normal triples and optional u32 cluster ids; all
        little-endian. Section presence is recoverable from the length."""
        n = len(self)
        out = [PPC_MAGIC, struct.pack("<I", n),
               self.points.astype("<f4").tobytes()]
        if self.normals is not None:
            out.append(self.normals.astype("<f4").tobytes())
        if self.cluster_ids is not None:
            out.append(self.cluster_ids.astype("<u4").tobytes())
        return b"".join(out)

    @staticmethod
    def from_bytes(buf: bytes) -> "PointCloud":
        if buf[:4] != PPC_MAGIC:
            raise ValueError("bad magic; not a PPC1 point cloud")
        (n,) = struct.unpack_from("<I", buf, 4)
        off = 8
        pts = np.frombuffer(buf, dtype="<f4", count=3 * n, offset=off).reshape(n, 3)
        off += 12 * n
        rest = len(buf) - off
        normals = None
        ids = None
        if n > 0 and rest >= 12 * n:
            normals = np.frombuffer(buf, dtype="<f4", count=3 * n, offset=off).reshape(n, 3)
            off += 12 * n
            rest -= 12 * n
        if n > 0 and rest >= 4 * n:
            ids = np.frombuffer(buf, dtype="<u4", count=n, offset=off)
        return PointCloud(pts.astype(np.float64),
                          None if normals is None else normals.astype(np.float64),
                          ids)

    def to_xyz_text(self) -> str:
        """Plain-text debug format: one "x y z" line per point."""
        return "\n".join(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}" for p in self.points) + ("\n" if len(self) else "")


@dataclass(frozen=True)
class NormalParams:
    """Neighborhood definition for surface-normal estimation.

    The radius and neighbor count have no published values; the defaults
    here are simulator calibration knobs exposed in config.
    """

    radius_R: float = 0.02
    k_neighbors: int = 30
    viewpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.radius_R <= 0:
            raise ValueError("radius_R must be positive")
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be >= 3")
        object.__setattr__(self, "viewpoint",
                           np.asarray(self.viewpoint, float).reshape(3))


def estimate_point_normals(cloud: PointCloud, params: NormalParams) -> PointCloud:
    """Per-point surface normals from neighborhood covariance.

    Neighbors are the points within `radius_R`, capped at the `k_neighbors`
    nearest; when fewer than 3 fall inside the radius the k nearest points
    are used instead. The normal is the unit eigenvector of the 3x3
    covariance with the smallest eigenvalue, flipped so it faces the
    viewpoint. Degenerate (coincident) neighborhoods yield NaN normals.
    """
    pts = cloud.points
    n = len(cloud)
    if n < params.k_neighbors:
        raise ValueError(f"cloud has {n} points, need >= {params.k_neighbors}")
    tree = cKDTree(pts)
    dists, idx = tree.query(pts, k=params.k_neighbors)
    normals = np.full((n, 3), np.nan)
    vp = params.viewpoint
    for i in range(n):
        inside = dists[i] <= params.radius_R
        if inside.sum() >= 3:
            nb = pts[idx[i][inside]]
        else:
            nb = pts[idx[i]]
        centered = nb - nb.mean(axis=0)
        cov = centered.T @ centered / len(nb)
        if np.trace(cov) < 1e-18:
            continue  # coincident neighborhood, normal undefined
        w, vecs = np.linalg.eigh(cov)
        normal = vecs[:, 0]
        if np.dot(normal, vp - pts[i]) < 0:
            normal = -normal
        normals[i] = normal / np.linalg.norm(normal)
    return PointCloud(pts, normals, cloud.cluster_ids)


def estimate_cluster_pose(cloud: PointCloud, cluster_id: int,
                          params: NormalParams, up=(0.0, 0.0, 1.0)) -> Pose6D:
    """Cluster pose: centroid position, averaged-normal approach axis.

    Normals are estimated within the cluster's own points when the cloud
    does not carry them already. The orientation quaternion maps tool +Z
    onto the approach axis with roll fixed by `up` (see frame_from_axis).
    """
    if cloud.cluster_ids is None:
        raise ValueError("cloud carries no cluster ids")
    mask = cloud.cluster_ids == np.uint32(cluster_id)
    pts = cloud.points[mask]
    if pts.shape[0] < params.k_neighbors:
        raise ValueError(
            f"cluster {cluster_id} has {pts.shape[0]} points, need >= {params.k_neighbors}")
    if cloud.normals is not None:
        sub = PointCloud(pts, cloud.normals[mask])
    else:
        sub = estimate_point_normals(PointCloud(pts), params)
    valid = sub.normal_valid
    if valid.sum() < params.k_neighbors:
        raise ValueError(f"cluster {cluster_id} has too few valid normals")
    position = pts.mean(axis=0)
    mean_normal = sub.normals[valid].mean(axis=0)
    norm = np.linalg.norm(mean_normal)
    if norm < 1e-6:
        raise DegenerateOrientationError(
            f"cluster {cluster_id}: averaged normal vanished")
    axis = mean_normal / norm
    return Pose6D(position, frame_from_axis(axis, up))


def approach_axis(pose: Pose6D):
    """Outward approach axis of a cluster pose (its +Z column)."""
    return pose.rotation_matrix()[:, 2]
