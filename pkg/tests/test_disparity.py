import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tbstereo.disparity import (
    DisparityMap,
    DepthMap,
    GeometryError,
    InvalidDisparityError,
    RigConfig,
    depth_from_disparity,
    depth_map_from_disparity,
    disparity_from_depth,
    disparity_map_from_depth,
    disparity_unit_convert,
    gt_disparity,
    pointcloud_from_disparity,
)
from tbstereo.raytrace import CameraPose, Plane, SceneDescription, Sphere, trace_erp
from tbstereo.sphere import DomainError, ErpLattice, rot_x


def projection_oracle(r_b, theta_b, B):
    """Place the point explicitly and measure both polar angles from the down axis."""
    down = np.array([0.0, 0.0, -1.0])
    p = np.stack([r_b * np.sin(theta_b), np.zeros_like(r_b), -r_b * np.cos(theta_b)], axis=-1)
    top = np.array([0.0, 0.0, B]) if np.ndim(B) == 0 else np.stack([0 * B, 0 * B, B], axis=-1)
    rel = p - top
    th_b = np.arctan2(np.linalg.norm(np.cross(p, down), axis=-1), p @ down)
    th_t = np.arctan2(np.linalg.norm(np.cross(rel, down), axis=-1), rel @ down)
    return th_b - th_t


def test_examples():
    assert disparity_from_depth(2.0, 2 * math.pi / 3, 1.0) == pytest.approx(math.pi / 6, abs=1e-15)
    assert disparity_from_depth(2.0, math.pi / 2, 0.2) == pytest.approx(0.0996686524911620, abs=1e-15)
    assert projection_oracle(np.array(2.0), 2 * math.pi / 3, 1.0) == pytest.approx(math.pi / 6, abs=1e-14)
    assert disparity_from_depth(1e12, 1.0, 0.5) < 1e-12


def test_depth_example():
    assert depth_from_disparity(math.pi / 6, 2 * math.pi / 3, 1.0) == pytest.approx(2.0, rel=1e-14)


def test_errors():
    with pytest.raises(DomainError):
        disparity_from_depth(0.0, 1.0, 0.1)
    with pytest.raises(DomainError):
        disparity_from_depth(1.0, 1.0, -0.1)
    with pytest.raises(InvalidDisparityError):
        depth_from_disparity(0.0, 1.0, 0.1)
    with pytest.raises(InvalidDisparityError):
        depth_from_disparity(1e-320, 1.0, 0.1)
    # d = 1.2 > theta_b = 1.0 puts the point behind the bottom camera
    with pytest.raises(GeometryError):
        depth_from_disparity(1.2, 1.0, 0.1)


def test_baseline_axis_is_degenerate():
    assert disparity_from_depth(3.0, 0.0, 0.2) == 0.0
    assert disparity_from_depth(3.0, math.pi, 0.2) == 0.0


def test_oracle_equivalence_10k(rng):
    B = rng.uniform(0.05, 0.5, 10_000)
    r = rng.uniform(0.2, 50, 10_000)
    th = rng.uniform(0.05, math.pi - 0.05, 10_000)
    assert np.abs(disparity_from_depth(r, th, B) - projection_oracle(r, th, B)).max() < 1e-10


def test_closer_than_baseline_uses_obtuse_branch():
    # r_b/B + cos(theta_b) < 0: the parallax exceeds 90 degrees
    d = disparity_from_depth(0.1, 2.8, 0.5)
    assert d > math.pi / 2
    assert d == pytest.approx(projection_oracle(np.array(0.1), 2.8, 0.5), abs=1e-12)
    assert depth_from_disparity(d, 2.8, 0.5) == pytest.approx(0.1, rel=1e-12)


@given(B=st.floats(0.05, 0.5), r=st.floats(0.2, 50), th=st.floats(0.05, math.pi - 0.05))
def test_round_trip(B, r, th):
    d = disparity_from_depth(r, th, B)
    assert abs(depth_from_disparity(d, th, B) / r - 1) < 1e-10


@given(B=st.floats(0.05, 0.5), r=st.floats(0.2, 50), f=st.floats(1.001, 10), th=st.floats(0.01, math.pi - 0.01))
def test_monotone_in_depth(B, r, f, th):
    assert disparity_from_depth(r * f, th, B) < disparity_from_depth(r, th, B)


def test_unit_convert():
    d = DisparityMap(np.full((256, 512), math.pi / 256), "radians")
    px = disparity_unit_convert(d, "pixels")
    assert np.allclose(px.values, 1.0, atol=1e-15)
    back = disparity_unit_convert(px, "radians")
    assert np.abs(back.values - d.values).max() < 1e-12
    assert disparity_unit_convert(d, "radians") is d
    z = DisparityMap(np.zeros((4, 8)), "pixels")
    assert np.all(disparity_unit_convert(z, "radians").values == 0)


def test_map_round_trip_with_invalid():
    depth = np.full((16, 32), 2.5)
    depth[3, 4] = np.nan
    disp = disparity_map_from_depth(DepthMap(depth), 0.3)
    assert not disp.mask[3, 4]
    back = depth_map_from_disparity(disp, 0.3)
    ok = back.mask
    assert np.abs(back.values[ok] / 2.5 - 1).max() < 1e-12
    assert not ok[3, 4]


def test_pointcloud_single_pixel():
    lat = ErpLattice(6, 3)  # row 1 is exactly on the horizon
    rig = RigConfig(0.2, lattice=lat)
    vals = np.full((3, 6), np.nan)
    vals[1, 2] = math.atan(0.1) * 3 / math.pi  # r_b = 2 at theta_b = pi/2
    pts, _ = pointcloud_from_disparity(DisparityMap(vals, "pixels"), rig)
    assert pts.shape == (1, 3)
    assert np.linalg.norm(pts[0]) == pytest.approx(2.0, rel=1e-12)


def test_pointcloud_empty():
    rig = RigConfig(0.2, lattice=ErpLattice(8, 4))
    pts, cols = pointcloud_from_disparity(DisparityMap(np.full((4, 8), np.nan)), rig, np.zeros((4, 8, 3)))
    assert pts.shape == (0, 3) and cols.shape == (0, 3)


def test_pointcloud_sphere_scene_and_rotation():
    lat = ErpLattice(64, 32)
    R = rot_x(0.4)
    rig = RigConfig.from_matrix(0.3, R, lat)
    scene = SceneDescription([Sphere((0.0, 0.0, 0.0), 3.0)])
    disp, occ = gt_disparity(scene, rig)
    assert not occ.any()
    pts, _ = pointcloud_from_disparity(disp, rig)
    assert np.abs(np.linalg.norm(pts, axis=-1) - 3.0).max() < 1e-6
    # world orientation: lifted points equal the traced world hit points
    hit = trace_erp(scene, CameraPose(np.zeros(3), rig.rotation), lat)
    assert np.abs(pts - hit.points[disp.mask]).max() < 1e-9


def test_gt_plane_all_visible():
    rig = RigConfig(0.4, lattice=ErpLattice(64, 32))
    scene = SceneDescription([Plane((0, 0, -1.0), (0, 0, 1.0))])
    disp, occ = gt_disparity(scene, rig)
    assert not occ.any()
    assert disp.mask[-1].all() and not disp.mask[0].any()


def _two_view_oracle(points, top, sphere_c, sphere_r):
    """Does the segment top -> point pass through the sphere before reaching the point?"""
    d = points - top
    L = np.linalg.norm(d, axis=-1)
    d = d / L[:, None]
    oc = top - sphere_c
    b = d @ oc
    c = oc @ oc - sphere_r**2
    disc = b * b - c
    t = -b - np.sqrt(np.maximum(disc, 0))
    return (disc > 0) & (t > 1e-9) & (t < 0.99 * L)


def test_gt_sphere_in_front_of_plane():
    lat = ErpLattice(256, 128)
    rig = RigConfig(0.5, lattice=lat)
    c, rad = np.array([1.5, 0.0, -0.6]), 0.35
    scene = SceneDescription([Plane((0, 0, -1.0), (0, 0, 1.0)), Sphere(tuple(c), rad)])
    disp, occ = gt_disparity(scene, rig)
    hit = trace_erp(scene, CameraPose(np.zeros(3)), lat)
    ok = np.isfinite(hit.depth)
    oracle = np.zeros(lat.shape, bool)
    oracle[ok] = _two_view_oracle(hit.points[ok], rig.top_center(), c, rad)
    assert occ.sum() > 20
    assert np.array_equal(occ, oracle)
    # the band sits just below the sphere silhouette (the top camera looks over it)
    on_sphere = hit.prim == 1
    for v, u in zip(*np.nonzero(occ)):
        assert on_sphere[max(0, v - 40):v, u].any()


def test_gt_matches_projection_oracle():
    lat = ErpLattice(128, 64)
    rig = RigConfig.from_matrix(0.25, rot_x(0.3), lat)
    scene = SceneDescription([Plane((0, 0, -1.2), (0, 0, 1.0)), Sphere((0.8, 0.9, 0.2), 0.5),
                              Plane((4.0, 0, 0), (-1.0, 0, 0))])
    pos = np.array([0.1, -0.2, 0.0])
    disp, occ = gt_disparity(scene, rig, pos)
    hit = trace_erp(scene, CameraPose(pos, rig.rotation), lat)
    down = -rig.up
    ok = disp.mask & ~occ
    P = hit.points[ok]
    rb, rt = P - pos, P - rig.top_center(pos)
    th_b = np.arctan2(np.linalg.norm(np.cross(rb, down), axis=-1), rb @ down)
    th_t = np.arctan2(np.linalg.norm(np.cross(rt, down), axis=-1), rt @ down)
    assert np.abs(disp.values[ok] - (th_b - th_t)).max() < 1e-10
