"""Spherical disparity of a top-bottom ERP rig.

Geometry: the top camera sits ``B`` metres above the bottom camera along the
rig's +z axis and both images are expressed in the rig frame, so epipolar
lines are image columns.  For a bottom-view pixel the polar angle used by the
disparity model is ``theta_b = pi - theta_row``, i.e. measured from the -z
axis (pointing away from the top camera).  Then::

    d = theta_b - theta_t = atan2(sin(theta_b), r_b / B + cos(theta_b))

and the same point appears ``d`` radians *further down* in the top image
(``v_top = v_bottom + d * H / pi``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import DomainError, ErpLattice, check_rotation, matrix_to_quat, pixel_to_dir, quat_to_matrix


class InvalidDisparityError(DomainError):
    pass


class GeometryError(DomainError):
    pass


UNITS = ("radians", "pixels")


@dataclass(frozen=True)
class RigConfig:
    """Two-camera rig.

    The orientation is stored as a unit quaternion ``(w, x, y, z)`` of the
    world-to-rig rotation so that JSON round trips are bit-exact; ``rotation``
    is the corresponding matrix.
    """

    baseline: float
    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)
    lattice: ErpLattice = ErpLattice(512, 256)
    reference: str = "bottom"

    def __post_init__(self):
        if not self.baseline > 0:
            raise DomainError(f"baseline must be positive, got {self.baseline}")
        if self.reference not in ("bottom", "top"):
            raise DomainError(f"reference must be 'bottom' or 'top', got {self.reference!r}")
        q = np.asarray(self.quaternion, dtype=np.float64)
        if q.shape != (4,) or not np.all(np.isfinite(q)) or not np.linalg.norm(q) > 0:
            raise DomainError(f"quaternion must be 4 finite numbers, not all zero: {self.quaternion}")
        # renormalizing only off-unit input keeps construction idempotent
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            q = q / np.linalg.norm(q)
        object.__setattr__(self, "quaternion", tuple(float(x) for x in q))

    @classmethod
    def from_matrix(cls, baseline, rotation, lattice=ErpLattice(512, 256), reference="bottom"):
        return cls(baseline, tuple(matrix_to_quat(check_rotation(rotation))), lattice, reference)

    @property
    def rotation(self) -> np.ndarray:
        """World-to-rig rotation matrix."""
        return quat_to_matrix(self.quaternion)

    @property
    def up(self) -> np.ndarray:
        """Rig axis (bottom -> top camera) in world coordinates."""
        return self.rotation[2].copy()

    def top_center(self, bottom_center=(0.0, 0.0, 0.0)) -> np.ndarray:
        return np.asarray(bottom_center, dtype=np.float64) + self.baseline * self.up


@dataclass
class DisparityMap:
    values: np.ndarray
    unit: str = "pixels"
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"unit must be one of {UNITS}, got {self.unit!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.isfinite(self.values)
        else:
            self.mask = np.asarray(self.mask, dtype=bool) & np.isfinite(self.values)

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class DepthMap:
    """Radial distance (metres) from the reference camera center."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        ok = np.isfinite(self.values) & (self.values > 0)
        self.mask = ok if self.mask is None else np.asarray(self.mask, dtype=bool) & ok


def disparity_from_depth(r_b, theta_b, B):
    """Spherical disparity (radians) of a point at radial distance ``r_b``.

    Points on the baseline axis (``theta_b`` exactly 0 or pi) get 0.
    """
    r_b = np.asarray(r_b, dtype=np.float64)
    theta_b = np.asarray(theta_b, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if np.any(~(r_b > 0)):
        raise DomainError("depth must be positive")
    if np.any(~(B > 0)):
        raise DomainError("baseline must be positive")
    # atan2 keeps d in (0, pi) when r_b/B + cos(theta_b) < 0 (point closer than B)
    d = np.arctan2(np.sin(theta_b), r_b / B + np.cos(theta_b))
    d = np.where((theta_b == 0.0) | (theta_b == np.pi), 0.0, d)
    return d[()] if d.ndim == 0 else d


def depth_from_disparity(d, theta_b, B):
    """Invert :func:`disparity_from_depth`: ``r_b = B (sin(theta_b)/tan(d) - cos(theta_b))``."""
    d = np.asarray(d, dtype=np.float64)
    theta_b = np.asarray(theta_b, dtype=np.float64)
    if np.any(~(np.asarray(B) > 0)):
        raise DomainError("baseline must be positive")
    if np.any(~(d > 0)):
        raise InvalidDisparityError("disparity must be positive")
    with np.errstate(over="ignore"):
        r = B * (np.sin(theta_b) * np.cos(d) / np.sin(d) - np.cos(theta_b))
    if np.any(~np.isfinite(r)):
        raise InvalidDisparityError("disparity too small, depth overflows")
    if np.any(r <= 0):
        raise GeometryError("disparity inconsistent with polar angle (non-positive depth)")
    return r[()] if r.ndim == 0 else r


def reference_polar_angles(lattice: ErpLattice, reference: str = "bottom") -> np.ndarray:
    """Per-row model angle: measured from the axis pointing away from the other camera."""
    theta_row = lattice.polar_angles()
    return np.pi - theta_row if reference == "bottom" else theta_row


def disparity_unit_convert(disp: DisparityMap, to: str) -> DisparityMap:
    if to not in UNITS:
        raise ValueError(f"unit must be one of {UNITS}, got {to!r}")
    if disp.unit == to:
        return disp
    scale = disp.height / np.pi if to == "pixels" else np.pi / disp.height
    return DisparityMap(disp.values * scale, to, disp.mask.copy())


def depth_map_from_disparity(disp: DisparityMap, baseline: float, reference: str = "bottom") -> DepthMap:
    """Per-pixel inversion; invalid or inconsistent pixels become NaN instead of raising."""
    rad = disparity_unit_convert(disp, "radians")
    H, W = rad.values.shape
    theta = np.broadcast_to(reference_polar_angles(ErpLattice(W, H), reference)[:, None], (H, W))
    d = np.where(rad.mask, rad.values, np.nan)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = baseline * (np.sin(theta) * np.cos(d) / np.sin(d) - np.cos(theta))
    r = np.where(rad.mask & (d > 0) & np.isfinite(r) & (r > 0), r, np.nan)
    return DepthMap(r)


def disparity_map_from_depth(depth: DepthMap, baseline: float, reference: str = "bottom") -> DisparityMap:
    H, W = depth.values.shape
    theta = np.broadcast_to(reference_polar_angles(ErpLattice(W, H), reference)[:, None], (H, W))
    r = np.where(depth.mask, depth.values, 1.0)
    d = np.where(depth.mask, disparity_from_depth(r, theta, baseline), np.nan)
    return DisparityMap(d, "radians")


def pointcloud_from_disparity(disp: DisparityMap, rig: RigConfig, colors=None):
    """Lift valid pixels to 3D points in world orientation (rig origin at 0).

    Returns ``(points (N, 3), colors (N, 3) or None)``.
    """
    depth = depth_map_from_disparity(disp, rig.baseline, rig.reference)
    H, W = depth.values.shape
    lattice = ErpLattice(W, H)
    vv, uu = np.nonzero(depth.mask)
    dirs = pixel_to_dir(lattice, uu.astype(np.float64), vv.astype(np.float64))
    pts_rig = dirs * depth.values[vv, uu][:, None]
    pts = pts_rig @ rig.rotation  # R.T @ p for row vectors
    cols = None if colors is None else np.asarray(colors)[vv, uu]
    return pts.reshape(-1, 3), cols


def gt_disparity(scene, rig: RigConfig, position=(0.0, 0.0, 0.0), occlusion_rtol: float = 0.01):
    """Ground-truth disparity (radians, bottom reference) and occlusion mask for a scene.

    A bottom pixel is occluded when the top camera's ray towards its surface
    point hits something closer than ``(1 - occlusion_rtol)`` of the distance.
    """
    from .raytrace import CameraPose, cast_rays, trace_erp

    bottom = CameraPose(np.asarray(position, dtype=np.float64), rig.rotation)
    hit = trace_erp(scene, bottom, rig.lattice)
    depth = DepthMap(hit.depth)
    disp = disparity_map_from_depth(depth, rig.baseline, "bottom")

    occ = np.zeros(rig.lattice.shape, dtype=bool)
    top = rig.top_center(position)
    idx = np.nonzero(depth.mask)
    pts = hit.points[idx]
    rays = pts - top
    dist = np.linalg.norm(rays, axis=-1)
    t, _, _ = cast_rays(scene, np.broadcast_to(top, rays.shape), rays / dist[:, None])
    occ[idx] = t < (1.0 - occlusion_rtol) * dist
    return disp, occ
