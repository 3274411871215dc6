"""Scene-generator invariants and exact ray-cast oracles.

The single-flower render tests are built so the expected depths are
exact closed-form values (perpendicular disk, axis-aligned rays).
"""

import math

import numpy as np
import pytest

from pollisim.errors import GenerationError
from pollisim.geometry import camera_from_fov, look_at_pose
from pollisim.orchard import (
    Capsule,
    Flower,
    FlowerCluster,
    RenderedFrame,
    Scene,
    SceneConfig,
    generate_scene,
    load_depth_png,
    load_mask_png,
    render_frame,
    save_depth_png,
    save_mask_png,
)


def test_generate_scene_deterministic():
    cfg = SceneConfig(seed=42)
    assert generate_scene(cfg).to_dict() == generate_scene(cfg).to_dict()
    assert generate_scene(cfg).to_dict() != generate_scene(SceneConfig(seed=43)).to_dict()


def test_generate_scene_cluster_invariants():
    cfg = SceneConfig(seed=3, n_clusters=12)
    scene = generate_scene(cfg)
    assert len(scene.clusters) == 12
    centers = [c.center for c in scene.clusters]
    for i, c in enumerate(scene.clusters):
        assert c.cluster_id == i + 1
        assert c.center[1] == 0.0  # trellis plane
        assert cfg.x_range[0] <= c.center[0] <= cfg.x_range[1]
        assert cfg.z_range[0] <= c.center[2] <= cfg.z_range[1]
        assert cfg.flowers_min <= len(c.flowers) <= cfg.flowers_max
        # outward axis tilts at most the configured jitter off -y
        cos_tilt = float(np.dot(c.outward, [0.0, -1.0, 0.0]))
        assert cos_tilt >= math.cos(math.radians(cfg.outward_jitter_deg)) - 1e-12
        sphere_center = c.center + c.cap_radius * c.outward
        for f in c.flowers:
            np.testing.assert_allclose(np.linalg.norm(f.normal), 1.0, atol=1e-12)
            # flower sits on the cap sphere and its normal aims at the center
            np.testing.assert_allclose(np.linalg.norm(f.position - sphere_center),
                                       c.cap_radius, atol=1e-12)
            np.testing.assert_allclose((sphere_center - f.position) / c.cap_radius,
                                       f.normal, atol=1e-9)
            cos_cap = float(np.dot(f.normal, c.outward))
            assert cos_cap >= math.cos(math.radians(cfg.cap_angle_deg)) - 1e-12
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            assert np.linalg.norm(centers[i] - centers[j]) >= cfg.min_separation


def test_generate_scene_impossible_packing():
    with pytest.raises(GenerationError):
        generate_scene(SceneConfig(seed=0, n_clusters=400, min_separation=0.12))


def test_scene_json_round_trip(tmp_path):
    scene = generate_scene(SceneConfig(seed=9, n_clusters=5))
    path = tmp_path / "scene.json"
    scene.save(path)
    back = Scene.load(path)
    assert back.to_dict() == scene.to_dict()
    assert back.flower_count == scene.flower_count


def test_scene_rejects_unknown_schema():
    d = generate_scene(SceneConfig(seed=1, n_clusters=2)).to_dict()
    d["schema"] = "orchard/999"
    with pytest.raises(ValueError):
        Scene.from_dict(d)


def _single_flower_scene():
    cfg = SceneConfig(seed=0, n_clusters=1, backdrop_y=0.4, include_obstacles=False)
    flower = Flower([0.0, 0.0, 1.0], [0.0, -1.0, 0.0])
    cluster = FlowerCluster(1, [0.0, 0.0, 1.0], [0.0, -1.0, 0.0],
                            0.05, 30.0, (flower,))
    return Scene(cfg, [cluster], [])


def test_render_single_flower_exact_depths():
    scene = _single_flower_scene()
    cam = camera_from_fov(101, 101, 60.0, 60.0)
    pose = look_at_pose([0.0, -0.5, 1.0], [0.0, 0.0, 1.0])
    frame = render_frame(scene, cam, pose)
    # center ray hits the perpendicular disk at exactly 0.5 m
    assert frame.mask[50, 50] == 1
    assert frame.depth_m[50, 50] == pytest.approx(0.5, abs=1e-12)
    # rays all share d_y = 1, so every backdrop pixel is exactly 0.9 m deep
    assert frame.mask[0, 0] == 0
    assert frame.depth_m[0, 0] == pytest.approx(0.9, abs=1e-12)
    # disk pixel radius is fx * r / z ~ 2.2 px: a small blob, not a smear
    n_pix = int((frame.mask == 1).sum())
    assert 4 <= n_pix <= 40


def test_render_wire_occludes_flower():
    scene = _single_flower_scene()
    scene.obstacles.append(Capsule("wire", [-1.0, -0.25, 1.0], [1.0, -0.25, 1.0], 0.01))
    cam = camera_from_fov(101, 101, 60.0, 60.0)
    pose = look_at_pose([0.0, -0.5, 1.0], [0.0, 0.0, 1.0])
    frame = render_frame(scene, cam, pose)
    # center ray meets the wire sphere surface 0.01 m before its axis
    assert frame.mask[50, 50] == 0
    assert frame.depth_m[50, 50] == pytest.approx(0.24, abs=1e-9)


def test_render_depth_outside_camera_range_is_invalid():
    scene = _single_flower_scene()
    cam = camera_from_fov(61, 61, 60.0, 60.0, depth_min=0.1, depth_max=0.7)
    pose = look_at_pose([0.0, -0.5, 1.0], [0.0, 0.0, 1.0])
    frame = render_frame(scene, cam, pose)
    assert frame.depth_m[30, 30] == pytest.approx(0.5)  # flower in range
    assert frame.depth_m[0, 0] == 0.0                   # backdrop at 0.9 clipped


def test_render_noise_and_dropout_reproducible():
    scene = generate_scene(SceneConfig(seed=5, n_clusters=4))
    cam = camera_from_fov(160, 120, 87.0, 58.0)
    pose = look_at_pose([0.0, -0.7, 1.0], [0.0, 0.0, 1.0])
    a = render_frame(scene, cam, pose, dropout=0.2, noise_coeff=0.002, seed=77)
    b = render_frame(scene, cam, pose, dropout=0.2, noise_coeff=0.002, seed=77)
    np.testing.assert_array_equal(a.depth_m, b.depth_m)
    clean = render_frame(scene, cam, pose)
    was_valid = clean.depth_m > 0
    dropped = was_valid & (a.depth_m == 0.0)
    frac = dropped.sum() / was_valid.sum()
    assert 0.15 < frac < 0.25
    # noise is zero-mean and small at these depths
    both = was_valid & (a.depth_m > 0)
    err = a.depth_m[both] - clean.depth_m[both]
    assert np.abs(err).max() < 0.02
    assert abs(err.mean()) < 1e-3


def test_render_rejects_bad_params():
    scene = _single_flower_scene()
    cam = camera_from_fov(32, 32, 60.0, 60.0)
    pose = look_at_pose([0.0, -0.5, 1.0], [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        render_frame(scene, cam, pose, dropout=1.0)
    with pytest.raises(ValueError):
        render_frame(scene, cam, pose, noise_coeff=-0.1)


def test_depth_png_round_trip(tmp_path):
    depth = np.array([[0.0, 0.1234], [2.9996, 1.0005]])
    path = tmp_path / "d.png"
    save_depth_png(path, depth)
    back = load_depth_png(path)
    assert back[0, 0] == 0.0
    np.testing.assert_allclose(back, depth, atol=5e-4)  # mm quantization


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    mask = rng.integers(0, 40, size=(24, 32)).astype(np.uint16)
    path = tmp_path / "m.png"
    save_mask_png(path, mask)
    np.testing.assert_array_equal(load_mask_png(path), mask)


def test_rendered_frame_save_load(tmp_path):
    scene = generate_scene(SceneConfig(seed=8, n_clusters=3))
    cam = camera_from_fov(80, 60, 87.0, 58.0)
    pose = look_at_pose([0.0, -0.7, 1.0], [0.0, 0.0, 1.0])
    frame = render_frame(scene, cam, pose)
    frame.save(tmp_path / "f0")
    back = RenderedFrame.load(tmp_path / "f0")
    np.testing.assert_allclose(back.depth_m, frame.depth_m, atol=5e-4)
    np.testing.assert_array_equal(back.mask, frame.mask)
    np.testing.assert_array_equal(back.rgb, frame.rgb)
    assert back.camera == frame.camera
    np.testing.assert_allclose(back.camera_pose.position, frame.camera_pose.position)


def test_render_full_scene_sees_most_clusters():
    scene = generate_scene(SceneConfig(seed=12))
    cam = camera_from_fov(320, 180, 87.0, 58.0)
    pose = look_at_pose([0.0, -0.7, 1.0], [0.0, 0.0, 1.0])
    frame = render_frame(scene, cam, pose)
    seen = set(np.unique(frame.mask)) - {0}
    assert len(seen) >= 13  # a couple may be edge-on or occluded
    valid = frame.depth_m[frame.mask > 0]
    assert valid.min() > 0.4 and valid.max() < 1.2
