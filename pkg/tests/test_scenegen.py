import math

import numpy as np
import pytest

from tbstereo.disparity import RigConfig, disparity_from_depth, disparity_unit_convert
from tbstereo.raytrace import (
    Box,
    CameraPose,
    Checker,
    Plane,
    SceneDescription,
    Sphere,
    ValueNoise,
    cast_rays,
    render_erp,
    trace_erp,
)
from tbstereo.scenegen import (
    DatasetConfig,
    PlacementError,
    RigSample,
    build_sample,
    capsule_clear,
    make_rng,
    make_scene,
    make_stereo_sample,
    rig_rotation,
    sample_rig,
)
from tbstereo.sphere import ErpLattice


# --- ray casting -------------------------------------------------------------

def test_analytic_hits():
    o = np.zeros((3, 3))
    d = np.array([[1.0, 0, 0], [0, 0, -1.0], [0, 1.0, 0]])
    scene = SceneDescription([Sphere((5.0, 0, 0), 1.0), Plane((0, 0, -2.0), (0, 0, 1.0)),
                              Box((-1.0, 3.0, -1.0), (1.0, 4.0, 1.0))])
    t, idx, n = cast_rays(scene, o, d)
    assert t.tolist() == [4.0, 2.0, 3.0]
    assert idx.tolist() == [0, 1, 2]
    assert np.allclose(n, [[-1, 0, 0], [0, 0, 1], [0, -1, 0]])


def test_inside_sphere_hits_far_side():
    t, _ = Sphere((0.5, 0, 0), 2.0).intersect(np.zeros((1, 3)), np.array([[1.0, 0, 0]]))
    assert t[0] == pytest.approx(2.5)


def test_miss_is_inf():
    t, idx, n = cast_rays(SceneDescription([Sphere((5.0, 0, 0), 1.0)]), np.zeros((1, 3)), np.array([[0, 1.0, 0]]))
    assert np.isinf(t[0]) and idx[0] == -1 and np.all(np.isnan(n[0]))


def test_signed_distances():
    assert Sphere((0, 0, 0), 1.0).signed_distance(np.array([3.0, 0, 0])) == pytest.approx(2.0)
    assert Plane((0, 0, 1.0), (0, 0, 2.0)).signed_distance(np.array([0, 0, 0.0])) == pytest.approx(-1.0)
    b = Box((0, 0, 0), (1.0, 1.0, 1.0))
    assert b.signed_distance(np.array([2.0, 0.5, 0.5])) == pytest.approx(1.0)
    assert b.signed_distance(np.array([0.5, 0.5, 0.5])) == pytest.approx(-0.5)


def test_sphere_render_depth_and_normals():
    lat = ErpLattice(64, 32)
    rgb, depth, n = render_erp(SceneDescription([Sphere((0, 0, 0), 2.5)]), CameraPose(np.zeros(3)), lat)
    assert np.allclose(depth.values, 2.5, rtol=1e-14)
    assert np.allclose(n.values, -lat.directions(), atol=1e-12)
    assert rgb.min() >= 0 and rgb.max() <= 1


def test_textures_deterministic_and_in_range(rng):
    p = rng.uniform(-5, 5, (1000, 3))
    for tex in (Checker(0.3, ((0.1, 0.2, 0.3), (0.9, 0.8, 0.7))), ValueNoise(0.2, 7)):
        a, b = tex(p), tex(p)
        assert np.array_equal(a, b)
        assert a.shape == (1000, 3) and a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(ValueNoise(0.2, 7)(p), ValueNoise(0.2, 8)(p))


def test_rotated_camera_sees_rotated_world():
    lat = ErpLattice(64, 32)
    scene = SceneDescription([Sphere((3.0, 0, 0), 1.0), Plane((0, 0, -1.0), (0, 0, 1.0))])
    R = rig_rotation(10.0, -20.0, 135.0)
    tr = trace_erp(scene, CameraPose(np.zeros(3), R), lat)
    assert np.allclose(tr.dirs, lat.directions() @ R)


# --- rig sampling --------------------------------------------------------------

def test_rig_rotation_composition():
    R = rig_rotation(0.0, 0.0, 90.0)
    # rig +x is world +y after a 90 degree yaw
    assert np.allclose(R.T @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    R = rig_rotation(30.0, 0.0, 0.0)
    up = RigConfig.from_matrix(0.2, R).up
    assert math.degrees(math.acos(up[2])) == pytest.approx(30.0)


def test_rig_sample_validates_ranges():
    lat = ErpLattice(8, 4)
    with pytest.raises(ValueError):
        RigSample.from_angles(0.2, (0, 0, 1), 46.0, 0.0, 0.0, lat)
    with pytest.raises(ValueError):
        RigSample.from_angles(0.2, (0, 0, 1), 0.0, 0.0, 360.0, lat)
    with pytest.raises(ValueError):
        RigSample.from_angles(0.7, (0, 0, 1), 0.0, 0.0, 0.0, lat)


def test_sample_rig_empty_scene_and_determinism():
    scene = SceneDescription([])
    a = sample_rig(scene, make_rng(5))
    b = sample_rig(scene, make_rng(5))
    assert a == b
    assert 0.1 <= a.rig.baseline <= 0.5
    assert abs(a.roll_deg) <= 45 and abs(a.pitch_deg) <= 45 and 0 <= a.yaw_deg < 360


def test_sample_rig_tilt_bounds_over_many_draws():
    rng = make_rng(11)
    ups = []
    for _ in range(200):
        s = sample_rig(SceneDescription([]), rng, ErpLattice(8, 4))
        assert abs(s.roll_deg) <= 45 and abs(s.pitch_deg) <= 45
        ups.append(s.rig.up)
    # tilt of the up axis from vertical is bounded by the composed roll and pitch
    tilt = np.degrees(np.arccos(np.clip(np.array(ups)[:, 2], -1, 1)))
    assert tilt.max() <= 60.0 + 1e-9


def test_sample_rig_impossible_scene():
    scene = SceneDescription([Sphere((0, 0, 0), 100.0)])
    with pytest.raises(PlacementError):
        sample_rig(scene, make_rng(0), max_attempts=50)


def test_capsule_clear():
    scene = SceneDescription([Sphere((0, 0, 1.0), 0.3), Box((2.0, -0.5, 0.0), (3.0, 0.5, 2.0)),
                              Plane((0, 0, 0), (0, 0, 1.0))])
    assert capsule_clear(scene, (1.0, 1.0, 0.5), (1.0, 1.0, 0.9), 0.1)
    assert not capsule_clear(scene, (0.0, 0.0, 0.3), (0.0, 0.0, 0.65), 0.1)  # top end grazes the sphere
    assert not capsule_clear(scene, (1.95, 0.0, 1.0), (1.95, 0.0, 1.3), 0.1)  # near the box face
    assert not capsule_clear(scene, (1.0, 1.0, 0.05), (1.0, 1.0, 0.3), 0.1)  # near the floor


def test_realistic_objects_rest_on_floor():
    for seed in range(5):
        scene = make_scene("realistic", make_rng(seed))
        for p in scene.primitives[6:]:
            if isinstance(p, Sphere):
                assert p.center[2] == pytest.approx(p.radius)
            else:
                assert p.lo[2] == pytest.approx(0.0, abs=1e-12)


def test_unknown_recipe():
    with pytest.raises(ValueError):
        make_scene("cubist", make_rng(0))
    with pytest.raises(ValueError):
        DatasetConfig(recipe="cubist")


# --- rendered samples --------------------------------------------------------

def test_sphere_around_rig_closed_form_gt():
    lat = ErpLattice(128, 64)
    rig = RigSample.from_angles(0.3, (0, 0, 0), 0.0, 0.0, 0.0, lat)
    sample = make_stereo_sample(SceneDescription([Sphere((0, 0, 0), 4.0)]), rig)
    theta_b = np.pi - lat.polar_angles()
    expected = disparity_from_depth(4.0, theta_b, 0.3)
    assert not sample.occlusion.any()
    assert np.abs(sample.disparity.values - expected[:, None]).max() < 1e-10


def test_gt_disparity_scales_with_baseline():
    lat = ErpLattice(64, 32)
    scene = SceneDescription([Plane((0, 0, -1.0), (0, 0, 1.0)), Sphere((2.0, 0.5, 0.0), 0.7)])
    d, depth = {}, None
    for B in (0.1, 0.2):
        rig = RigSample.from_angles(B, (0, 0, 0.5), 5.0, -3.0, 40.0, lat)
        sample = make_stereo_sample(scene, rig)
        d[B], depth = sample.disparity, sample.depth.values
    ok = d[0.1].mask & d[0.2].mask
    ratio = d[0.2].values[ok] / d[0.1].values[ok]
    # d grows with B everywhere and is linear in B in the far field
    assert np.all(ratio > 1.0)
    far = depth[ok] > 10.0
    assert far.sum() > 50 and np.all(np.abs(ratio[far] - 2.0) < 0.02)


def test_build_sample_deterministic_and_consistent():
    cfg = DatasetConfig(n=1, seed=3, width=128, height=64)
    _, rig_a, a = build_sample(cfg, 0)
    _, rig_b, b = build_sample(cfg, 0)
    assert rig_a == rig_b
    assert np.array_equal(a.bottom_rgb, b.bottom_rgb) and np.array_equal(a.top_rgb, b.top_rgb)
    # GT self-consistency: the disparity encodes the rendered depth
    rb = a.depth.values
    theta_b = np.pi - cfg_lattice(cfg).polar_angles()[:, None]
    expected = disparity_from_depth(np.where(np.isfinite(rb), rb, 1.0), theta_b, rig_a.rig.baseline)
    ok = a.disparity.mask
    assert np.abs(a.disparity.values[ok] - expected[ok]).max() < 1e-10
    assert a.normal_ha.frame == "heading_aligned"
    px = disparity_unit_convert(a.disparity, "pixels")
    assert np.nanmax(px.values) < 64


def cfg_lattice(cfg):
    return ErpLattice(cfg.width, cfg.height)


def test_different_indices_differ():
    cfg = DatasetConfig(n=2, seed=3, width=64, height=32)
    _, r0, _ = build_sample(cfg, 0)
    _, r1, _ = build_sample(cfg, 1)
    assert r0 != r1
