"""Synthetic trellis-orchard scenes and an analytic RGB-D renderer.

World frame is z-up. The trellis occupies the plane y = 0 and flower
clusters face outward along -y, toward the camera side. Each cluster is
modeled as a concave spherical cap: flowers are small oriented disks on
a sphere of radius `cap_radius` whose center sits `cap_radius` outward
of the cluster center, so every stigma normal points back through the
cap center and the cap reads as a bowl from the camera.

Rendering is exact ray casting against disks and capsules with a
z-buffer; no rasterization, no hidden tolerance. Depth images store
millimeters in 16 bits with 0 marking invalid pixels; mask images store
cluster ids with 0 as background.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import GenerationError
from .geometry import CameraModel, Pose6D

SCENE_SCHEMA = "orchard/1"
FRAME_SCHEMA = "frame/1"

FLOWER_PETAL_RGB = np.array([242.0, 238.0, 226.0])
FLOWER_STIGMA_RGB = np.array([231.0, 200.0, 92.0])
BACKDROP_RGB = np.array([46.0, 62.0, 44.0])
SKY_RGB = np.array([24.0, 30.0, 26.0])
OBSTACLE_RGB = {
    "wire": np.array([126.0, 126.0, 132.0]),
    "post": np.array([112.0, 86.0, 60.0]),
    "trunk": np.array([94.0, 72.0, 52.0]),
}


@dataclass(frozen=True)
class Flower:
    """Oriented disk: center position, unit stigma normal, radius (m)."""

    position: np.ndarray
    normal: np.ndarray
    radius: float = 0.0125

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(3))
        n = np.asarray(self.normal, float).reshape(3)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        if self.radius <= 0:
            raise ValueError("flower radius must be positive")


@dataclass(frozen=True)
class FlowerCluster:
    cluster_id: int
    center: np.ndarray
    outward: np.ndarray
    cap_radius: float
    cap_angle_deg: float
    flowers: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(3))
        u = np.asarray(self.outward, float).reshape(3)
        object.__setattr__(self, "outward", u / np.linalg.norm(u))
        if self.cluster_id < 1:
            raise ValueError("cluster ids start at 1; 0 is background")


@dataclass(frozen=True)
class Capsule:
    """Segment p0-p1 swept by a sphere of the given radius."""

    kind: str
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, float).reshape(3))
        object.__setattr__(self, "p1", np.asarray(self.p1, float).reshape(3))
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for the scene generator. Geometry values are meters."""

    seed: int = 0
    n_clusters: int = 16
    flowers_min: int = 3
    flowers_max: int = 6
    x_range: tuple = (-0.35, 0.35)
    z_range: tuple = (0.75, 1.25)
    min_separation: float = 0.12
    cap_radius_range: tuple = (0.04, 0.07)
    cap_angle_deg: float = 30.0
    outward_jitter_deg: float = 10.0
    flower_radius: float = 0.0125
    backdrop_y: Optional[float] = 0.4
    include_obstacles: bool = True

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("need at least one cluster")
        if not (1 <= self.flowers_min <= self.flowers_max):
            raise ValueError("flower count range invalid")
        if self.min_separation <= 0:
            raise ValueError("min_separation must be positive")


@dataclass
class Scene:
    config: SceneConfig
    clusters: list
    obstacles: list

    @property
    def flower_count(self) -> int:
        return sum(len(c.flowers) for c in self.clusters)

    def cluster_by_id(self, cluster_id: int) -> FlowerCluster:
        for c in self.clusters:
            if c.cluster_id == cluster_id:
                return c
        raise KeyError(cluster_id)

    def to_dict(self) -> dict:
        return {
            "schema": SCENE_SCHEMA,
            "config": {**asdict(self.config),
                       "x_range": list(self.config.x_range),
                       "z_range": list(self.config.z_range),
                       "cap_radius_range": list(self.config.cap_radius_range)},
            "world": {"up": [0.0, 0.0, 1.0], "trellis_plane_y": 0.0,
                      "outward": [0.0, -1.0, 0.0]},
            "clusters": [
                {"id": c.cluster_id,
                 "center_m": [float(v) for v in c.center],
                 "outward": [float(v) for v in c.outward],
                 "cap_radius_m": float(c.cap_radius),
                 "cap_angle_deg": float(c.cap_angle_deg),
                 "flowers": [
                     {"position_m": [float(v) for v in f.position],
                      "normal": [float(v) for v in f.normal],
                      "radius_m": float(f.radius)} for f in c.flowers]}
                for c in self.clusters],
            "obstacles": [
                {"kind": o.kind,
                 "p0_m": [float(v) for v in o.p0],
                 "p1_m": [float(v) for v in o.p1],
                 "radius_m": float(o.radius)} for o in self.obstacles],
        }

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        if d.get("schema") != SCENE_SCHEMA:
            raise ValueError(f"unsupported scene schema {d.get('schema')!r}")
        cfg = dict(d["config"])
        cfg["x_range"] = tuple(cfg["x_range"])
        cfg["z_range"] = tuple(cfg["z_range"])
        cfg["cap_radius_range"] = tuple(cfg["cap_radius_range"])
        clusters = [
            FlowerCluster(
                cluster_id=c["id"], center=c["center_m"], outward=c["outward"],
                cap_radius=c["cap_radius_m"], cap_angle_deg=c["cap_angle_deg"],
                flowers=tuple(Flower(f["position_m"], f["normal"], f["radius_m"])
                              for f in c["flowers"]))
            for c in d["clusters"]]
        obstacles = [Capsule(o["kind"], o["p0_m"], o["p1_m"], o["radius_m"])
                     for o in d["obstacles"]]
        return Scene(SceneConfig(**cfg), clusters, obstacles)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @staticmethod
    def load(path) -> "Scene":
        return Scene.from_dict(json.loads(Path(path).read_text()))


def _cone_basis(u):
    """Orthonormal e1, e2 completing u to a right-handed frame."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(u[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def generate_scene(config: SceneConfig) -> Scene:
    """Deterministic scene from the config seed.

    Cluster centers are rejection-sampled on the trellis plane with a
    minimum pairwise separation; each cluster's outward axis is -y with
    a small random tilt, and its flowers are area-uniform draws on the
    spherical cap.
    """
    rng = np.random.default_rng(config.seed)
    centers = []
    attempts = 0
    while len(centers) < config.n_clusters:
        attempts += 1
        if attempts > 200 * config.n_clusters:
            raise GenerationError(
                f"could not place {config.n_clusters} clusters at "
                f"separation {config.min_separation} m")
        c = np.array([rng.uniform(*config.x_range), 0.0, rng.uniform(*config.z_range)])
        if all(np.linalg.norm(c - p) >= config.min_separation for p in centers):
            centers.append(c)

    clusters = []
    theta_max = math.radians(config.cap_angle_deg)
    for i, center in enumerate(centers):
        tilt = math.radians(rng.uniform(0, config.outward_jitter_deg))
        roll = rng.uniform(0, 2 * math.pi)
        base = np.array([0.0, -1.0, 0.0])
        e1, e2 = _cone_basis(base)
        outward = (math.cos(tilt) * base
                   + math.sin(tilt) * (math.cos(roll) * e1 + math.sin(roll) * e2))
        cap_radius = rng.uniform(*config.cap_radius_range)
        sphere_center = center + cap_radius * outward
        f1, f2 = _cone_basis(outward)
        n_flowers = int(rng.integers(config.flowers_min, config.flowers_max + 1))
        flowers = []
        for _ in range(n_flowers):
            theta = theta_max * math.sqrt(rng.uniform())  # area-uniform on the cap
            phi = rng.uniform(0, 2 * math.pi)
            w = (math.cos(theta) * outward
                 + math.sin(theta) * (math.cos(phi) * f1 + math.sin(phi) * f2))
            flowers.append(Flower(sphere_center - cap_radius * w, w,
                                  config.flower_radius))
        clusters.append(FlowerCluster(i + 1, center, outward, cap_radius,
                                      config.cap_angle_deg, tuple(flowers)))

    obstacles = []
    if config.include_obstacles:
        x0, x1 = config.x_range
        z0, z1 = config.z_range
        span = 0.18
        for z in np.linspace(z0 - 0.07, z1 + 0.07, 4):
            obstacles.append(Capsule("wire", [x0 - span, 0.01, z],
                                     [x1 + span, 0.01, z], 0.002))
        for x in (x0 - span, x1 + span):
            obstacles.append(Capsule("post", [x, 0.02, z0 - 0.35],
                                     [x, 0.02, z1 + 0.25], 0.035))
        obstacles.append(Capsule("trunk", [0.5 * (x0 + x1), 0.08, z0 - 0.4],
                                 [0.5 * (x0 + x1), 0.08, z1 + 0.2], 0.03))
    return Scene(config, clusters, obstacles)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

@dataclass
class RenderedFrame:
    """One RGB-D capture: depth in meters (0 = invalid), cluster-id mask
    (0 = background), flat-shaded RGB, and the camera that produced it."""

    depth_m: np.ndarray
    mask: np.ndarray
    rgb: np.ndarray
    camera: CameraModel
    camera_pose: Pose6D

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_depth_png(d / "depth.png", self.depth_m)
        save_mask_png(d / "mask.png", self.mask)
        Image.fromarray(self.rgb, mode="RGB").save(d / "rgb.png")
        meta = {"schema": FRAME_SCHEMA, "camera": self.camera.to_dict(),
                "camera_pose": self.camera_pose.to_dict(),
                "depth_unit": "mm", "invalid_depth": 0}
        (d / "frame.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")

    @staticmethod
    def load(directory) -> "RenderedFrame":
        d = Path(directory)
        meta = json.loads((d / "frame.json").read_text())
        if meta.get("schema") != FRAME_SCHEMA:
            raise ValueError(f"unsupported frame schema {meta.get('schema')!r}")
        return RenderedFrame(
            depth_m=load_depth_png(d / "depth.png"),
            mask=load_mask_png(d / "mask.png"),
            rgb=np.asarray(Image.open(d / "rgb.png").convert("RGB")),
            camera=CameraModel.from_dict(meta["camera"]),
            camera_pose=Pose6D.from_dict(meta["camera_pose"]))


def save_depth_png(path, depth_m):
    mm = np.rint(np.nan_to_num(depth_m, nan=0.0) * 1000.0)
    np.clip(mm, 0, 65535, out=mm)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")  # 16-bit grayscale


def load_depth_png(path):
    return np.asarray(Image.open(path), dtype=np.float64) / 1000.0


def save_mask_png(path, mask):
    Image.fromarray(np.asarray(mask, dtype=np.uint16)).save(path, format="PNG")


def load_mask_png(path):
    return np.asarray(Image.open(path), dtype=np.uint16)


def _pixel_window(camera, pose_inv, center_w, radius_w, pad=2):
    """Pixel-rect covering the projected bounding sphere, or None."""
    c = pose_inv.transform_point(center_w)
    if c[2] <= 1e-6:
        return None
    u = camera.fx * c[0] / c[2] + camera.cx
    v = camera.fy * c[1] / c[2] + camera.cy
    ru = camera.fx * radius_w / c[2] + pad
    rv = camera.fy * radius_w / c[2] + pad
    u0 = max(int(math.floor(u - ru)), 0)
    u1 = min(int(math.ceil(u + ru)) + 1, camera.width)
    v0 = max(int(math.floor(v - rv)), 0)
    v1 = min(int(math.ceil(v + rv)) + 1, camera.height)
    if u0 >= u1 or v0 >= v1:
        return None
    return u0, u1, v0, v1


def _window_rays(camera, R, window):
    u0, u1, v0, v1 = window
    us, vs = np.meshgrid(np.arange(u0, u1, dtype=float),
                         np.arange(v0, v1, dtype=float))
    d_cam = np.stack([(us - camera.cx) / camera.fx,
                      (vs - camera.cy) / camera.fy,
                      np.ones_like(us)], axis=-1)
    return d_cam.reshape(-1, 3) @ R.T


def _ray_disk_t(origin, dirs, center, normal, radius):
    denom = dirs @ normal
    num = float(np.dot(center - origin, normal))
    t = np.full(dirs.shape[0], np.inf)
    ok = np.abs(denom) > 1e-12
    t_cand = np.where(ok, num / np.where(ok, denom, 1.0), -1.0)
    hit = origin + t_cand[:, None] * dirs
    r2 = np.einsum("ij,ij->i", hit - center, hit - center)
    good = ok & (t_cand > 1e-9) & (r2 <= radius * radius)
    t[good] = t_cand[good]
    return t


def _ray_sphere_t(origin, dirs, center, radius):
    m = origin - center
    A = np.einsum("ij,ij->i", dirs, dirs)
    B = 2.0 * (dirs @ m)
    C = float(m @ m) - radius * radius
    disc = B * B - 4.0 * A * C
    t = np.full(dirs.shape[0], np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-B - sq) / (2.0 * A)
    good = ok & (t1 > 1e-9)
    t[good] = t1[good]
    return t


def _ray_capsule(origin, dirs, capsule: Capsule):
    """Smallest positive hit t per ray, plus surface normals at the hits."""
    a = capsule.p1 - capsule.p0
    alen = np.linalg.norm(a)
    ahat = a / alen
    m = origin - capsule.p0
    d_par = dirs @ ahat
    m_par = float(m @ ahat)
    d_perp = dirs - d_par[:, None] * ahat
    m_perp = m - m_par * ahat
    A = np.einsum("ij,ij->i", d_perp, d_perp)
    B = 2.0 * (d_perp @ m_perp)
    C = float(m_perp @ m_perp) - capsule.radius ** 2
    disc = B * B - 4.0 * A * C
    t_body = np.full(dirs.shape[0], np.inf)
    ok = (disc >= 0) & (A > 1e-18)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = np.where(ok, (-B - sq) / np.where(ok, 2.0 * A, 1.0), -1.0)
    s = m_par + t1 * d_par
    good = ok & (t1 > 1e-9) & (s >= 0.0) & (s <= alen)
    t_body[good] = t1[good]

    t = np.minimum(t_body,
                   np.minimum(_ray_sphere_t(origin, dirs, capsule.p0, capsule.radius),
                              _ray_sphere_t(origin, dirs, capsule.p1, capsule.radius)))
    t_safe = np.where(np.isfinite(t), t, 0.0)
    hit = origin + t_safe[:, None] * dirs
    s_hit = np.clip((hit - capsule.p0) @ ahat, 0.0, alen)
    axis_pt = capsule.p0 + s_hit[:, None] * ahat
    normals = hit - axis_pt
    lens = np.linalg.norm(normals, axis=1)
    lens[lens < 1e-12] = 1.0
    return t, normals / lens[:, None]


def _shade(base_rgb, normals, dirs):
    """Lambert with an ambient floor; light rides the camera ray."""
    dhat = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    cos = np.clip(-np.einsum("ij,ij->i", normals, dhat), 0.0, 1.0)
    return np.clip(base_rgb[None, :] * (0.3 + 0.7 * cos)[:, None], 0, 255)


def _paint(window, t, colors, mask_value, zbuf, mask, rgb):
    u0, u1, v0, v1 = window
    h, w = v1 - v0, u1 - u0
    t2 = t.reshape(h, w)
    zwin = zbuf[v0:v1, u0:u1]
    closer = t2 < zwin
    if not closer.any():
        return
    zwin[closer] = t2[closer]
    mask[v0:v1, u0:u1][closer] = mask_value
    rgb[v0:v1, u0:u1][closer] = colors.reshape(h, w, 3)[closer]


def render_frame(scene: Scene, camera: CameraModel, camera_pose: Pose6D,
                 *, dropout: float = 0.0, noise_coeff: float = 0.0,
                 seed: int = 0) -> RenderedFrame:
    """Ray-cast the scene into an RGB-D frame.

    Ray direction for pixel (u, v) is ((u-cx)/fx, (v-cy)/fy, 1) in the
    camera frame, deliberately unnormalized so the hit parameter t is the
    camera-frame depth Z. Gaussian depth noise (sigma = noise_coeff * Z^2,
    applied first) and uniform pixel dropout are seeded and reproducible.
    """
    if not (0.0 <= dropout < 1.0):
        raise ValueError("dropout must lie in [0, 1)")
    if noise_coeff < 0:
        raise ValueError("noise_coeff must be nonnegative")
    H, W = camera.height, camera.width
    R = camera_pose.rotation_matrix()
    origin = camera_pose.position
    pose_inv = camera_pose.inverse()

    zbuf = np.full((H, W), np.inf)
    mask = np.zeros((H, W), dtype=np.uint16)
    rgb = np.empty((H, W, 3))
    rgb[:] = SKY_RGB

    if scene.config.backdrop_y is not None:
        full = (0, W, 0, H)
        dirs = _window_rays(camera, R, full)
        dy = dirs[:, 1]
        ok = np.abs(dy) > 1e-12
        t = np.where(ok, (scene.config.backdrop_y - origin[1]) / np.where(ok, dy, 1.0), np.inf)
        t[t <= 1e-9] = np.inf
        colors = np.tile(BACKDROP_RGB, (t.size, 1))
        _paint(full, t, colors, 0, zbuf, mask, rgb)

    for capsule in scene.obstacles:
        mid = 0.5 * (capsule.p0 + capsule.p1)
        half = 0.5 * np.linalg.norm(capsule.p1 - capsule.p0) + capsule.radius
        window = _pixel_window(camera, pose_inv, mid, half)
        if window is None:
            continue
        dirs = _window_rays(camera, R, window)
        t, normals = _ray_capsule(origin, dirs, capsule)
        base = OBSTACLE_RGB.get(capsule.kind, np.array([128.0, 128.0, 128.0]))
        _paint(window, t, _shade(base, normals, dirs), 0, zbuf, mask, rgb)

    for cluster in scene.clusters:
        for flower in cluster.flowers:
            window = _pixel_window(camera, pose_inv, flower.position, flower.radius)
            if window is None:
                continue
            dirs = _window_rays(camera, R, window)
            t = _ray_disk_t(origin, dirs, flower.position, flower.normal, flower.radius)
            t_safe = np.where(np.isfinite(t), t, 0.0)
            hit = origin + t_safe[:, None] * dirs
            dist = np.linalg.norm(hit - flower.position, axis=1)
            normals = np.tile(flower.normal, (t.size, 1))
            colors = _shade(FLOWER_PETAL_RGB, normals, dirs)
            stigma = dist <= 0.25 * flower.radius
            colors[stigma] = _shade(FLOWER_STIGMA_RGB, normals[stigma], dirs[stigma])
            _paint(window, t, colors, cluster.cluster_id, zbuf, mask, rgb)

    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    valid = depth > 0
    rng = np.random.default_rng(seed)
    if noise_coeff > 0:
        noise = rng.normal(0.0, 1.0, size=depth.shape) * noise_coeff * depth ** 2
        depth = np.where(valid, depth + noise, 0.0)
    if dropout > 0:
        drop = rng.uniform(size=depth.shape) < dropout
        depth = np.where(drop, 0.0, depth)
    out_of_range = (depth < camera.depth_min) | (depth > camera.depth_max)
    depth[out_of_range] = 0.0
    return RenderedFrame(depth_m=depth, mask=mask, rgb=rgb.astype(np.uint8),
                         camera=camera, camera_pose=camera_pose)
