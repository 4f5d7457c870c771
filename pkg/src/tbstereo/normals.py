"""Surface normals on the ERP lattice and the heading-aligned frame.

The heading-aligned normal of a pixel at longitude ``alpha`` is
``Rz(alpha) @ n_camera``.  Under the lattice convention of
:mod:`tbstereo.sphere` this rotates each pixel's horizontal view direction
onto +x, so a yaw of the camera only shifts the heading-aligned map by whole
columns and leaves its values untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import ErpLattice

FRAMES = ("camera", "heading_aligned")


class FrameError(ValueError):
    """Operation applied to a normal map in the wrong frame."""


@dataclass
class NormalMap:
    values: np.ndarray  # (H, W, 3)
    frame: str = "camera"
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise FrameError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[-1] != 3:
            raise ValueError(f"normal map must be (H, W, 3), got {self.values.shape}")
        finite = np.all(np.isfinite(self.values), axis=-1)
        self.mask = finite if self.mask is None else np.asarray(self.mask, dtype=bool) & finite

    @property
    def lattice(self) -> ErpLattice:
        return ErpLattice(self.values.shape[1], self.values.shape[0])


def _rotate_columns(values: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    c, s = np.cos(alpha)[None, :], np.sin(alpha)[None, :]
    x, y, z = values[..., 0], values[..., 1], values[..., 2]
    return np.stack([c * x - s * y, s * x + c * y, z], axis=-1)


def to_heading_aligned(n: NormalMap, lattice: ErpLattice | None = None) -> NormalMap:
    if n.frame != "camera":
        raise FrameError(f"expected a camera-frame map, got {n.frame!r}")
    lattice = lattice or n.lattice
    return NormalMap(_rotate_columns(n.values, lattice.longitudes()), "heading_aligned", n.mask.copy())


def from_heading_aligned(n: NormalMap, lattice: ErpLattice | None = None) -> NormalMap:
    if n.frame != "heading_aligned":
        raise FrameError(f"expected a heading-aligned map, got {n.frame!r}")
    lattice = lattice or n.lattice
    return NormalMap(_rotate_columns(n.values, -lattice.longitudes()), "camera", n.mask.copy())


def _shift_rows(a: np.ndarray, s: int) -> np.ndarray:
    """out[v] = a[v + s], NaN outside the image (no wrap across poles)."""
    out = np.full_like(a, np.nan)
    if s > 0:
        out[:-s] = a[s:]
    elif s < 0:
        out[-s:] = a[:s]
    else:
        out[:] = a
    return out


def _tangent(fwd, center, bwd):
    ok_f = np.all(np.isfinite(fwd), axis=-1, keepdims=True)
    ok_b = np.all(np.isfinite(bwd), axis=-1, keepdims=True)
    t = np.where(ok_f & ok_b, fwd - bwd, np.where(ok_f, fwd - center, center - bwd))
    return t, (ok_f | ok_b)[..., 0]


def normals_from_depth(depth, lattice: ErpLattice | None = None, window: int = 3) -> NormalMap:
    """Camera-frame normals from a radial depth map by tangent differences.

    Each pixel is lifted to ``r * dir``; the normal is the cross product of the
    longitude and latitude tangents (central differences, one-sided where a
    neighbour is missing; longitude wraps).  Normals face the camera.  The
    first and last rows are always invalid.
    """
    r = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    H, W = r.shape
    lattice = lattice or ErpLattice(W, H)
    ok = np.isfinite(r) & (r > 0)
    P = np.where(ok[..., None], r[..., None] * lattice.directions(), np.nan)

    s = window // 2
    tu, ok_u = _tangent(np.roll(P, -s, axis=1), P, np.roll(P, s, axis=1))
    tv, ok_v = _tangent(_shift_rows(P, s), P, _shift_rows(P, -s))
    n = np.cross(tu, tv)
    norm = np.linalg.norm(n, axis=-1)
    valid = ok & ok_u & ok_v & (norm > 0)
    valid[0] = valid[-1] = False
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm[..., None]
    flip = np.einsum("...i,...i", n, P) > 0
    n = np.where(flip[..., None], -n, n)
    n = np.where(valid[..., None], n, np.nan)
    return NormalMap(n, "camera", valid)


def angular_error(n1: NormalMap, n2: NormalMap) -> np.ndarray:
    """Per-pixel angle (radians) between two maps in the same frame; NaN where either is invalid."""
    if n1.frame != n2.frame:
        raise FrameError(f"frame mismatch: {n1.frame!r} vs {n2.frame!r}")
    if n1.values.shape != n2.values.shape:
        raise ValueError(f"shape mismatch: {n1.values.shape} vs {n2.values.shape}")
    a, b = n1.values, n2.values
    # atan2 form: same angle as arccos(clamp(a.b)) but accurate near 0 and pi
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.einsum("...i,...i", a, b))
    return np.where(n1.mask & n2.mask, ang, np.nan)
