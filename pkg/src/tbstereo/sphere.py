"""Equirectangular (ERP) lattice geometry, rotations and circular resampling.

Conventions
-----------
Pixel ``(u, v)`` has its center at longitude ``alpha = 2*pi*(u + 0.5)/W - pi`` and
polar angle ``theta = pi*(v + 0.5)/H`` measured from the up axis (+z).  The unit
direction is::

    x = sin(theta) * cos(alpha)
    y = -sin(theta) * sin(alpha)
    z = cos(theta)

so ``alpha`` grows clockwise seen from +z, i.e. to the right when looking out
from the sphere center with z up.  With this handedness the view direction of
a pixel is ``Rz(-alpha) @ e_x``, which is what makes ``Rz(alpha) @ n`` a
heading-invariant normal encoding (see :mod:`tbstereo.normals`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class ErpLattice:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"lattice must be at least 2x2, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def longitudes(self) -> np.ndarray:
        """Longitude of each column center, shape (W,)."""
        u = np.arange(self.width, dtype=np.float64)
        return 2.0 * np.pi * (u + 0.5) / self.width - np.pi

    def polar_angles(self) -> np.ndarray:
        """Polar angle (from +z) of each row center, shape (H,)."""
        v = np.arange(self.height, dtype=np.float64)
        return np.pi * (v + 0.5) / self.height

    def directions(self) -> np.ndarray:
        """Unit view direction of every pixel center, shape (H, W, 3)."""
        vv, uu = np.meshgrid(
            np.arange(self.height, dtype=np.float64),
            np.arange(self.width, dtype=np.float64),
            indexing="ij",
        )
        return pixel_to_dir(self, uu, vv)


def _angles_to_dir(alpha, theta):
    st = np.sin(theta)
    return np.stack([st * np.cos(alpha), -st * np.sin(alpha), np.cos(theta)], axis=-1)


def pixel_to_dir(lattice: ErpLattice, u, v) -> np.ndarray:
    """Map (possibly fractional) pixel coordinates to unit directions.

    ``u`` wraps modulo the width; ``v`` must lie in ``[0, height)``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(~(v >= 0.0) | ~(v < lattice.height)):
        raise DomainError(f"v must lie in [0, {lattice.height})")
    u = np.mod(u, lattice.width)
    alpha = 2.0 * np.pi * (u + 0.5) / lattice.width - np.pi
    theta = np.pi * (v + 0.5) / lattice.height
    return _angles_to_dir(alpha, theta)


def dir_to_pixel(lattice: ErpLattice, d) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pixel_to_dir`.

    Returns ``u`` in ``[0, W)`` and an unclamped ``v``; the poles map to
    ``v = -0.5`` / ``v = H - 0.5`` with ``alpha = 0``.
    """
    d = np.asarray(d, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    alpha = np.arctan2(-y, x)
    theta = np.arctan2(np.hypot(x, y), z)
    u = np.mod((alpha + np.pi) * lattice.width / (2.0 * np.pi) - 0.5, lattice.width)
    # mod can round a tiny negative up to exactly W
    u = np.where(u >= lattice.width, 0.0, u)
    v = theta * lattice.height / np.pi - 0.5
    return u, v


# --- rotations -------------------------------------------------------------

def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def check_rotation(R, tol: float = 1e-10) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise DomainError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0) or abs(np.linalg.det(R) - 1.0) > tol:
        raise DomainError("matrix is not a proper rotation")
    return R


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion (normalized first)."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """(w, x, y, z) quaternion with w >= 0 for a rotation matrix."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    return -q if q[0] < 0 else q


def column_shift_rotation(lattice: ErpLattice, k: int) -> np.ndarray:
    """Yaw rotation R with ``rotate_erp(img, R) == np.roll(img, k, axis=1)``."""
    return rot_z(-2.0 * np.pi * k / lattice.width)


# --- sampling --------------------------------------------------------------

def _as_hwc(field):
    field = np.asarray(field)
    return (field[..., None], True) if field.ndim == 2 else (field, False)


def sample_bilinear_circular(field, u, v) -> np.ndarray:
    """Bilinear sample with longitude wrap and polar clamp.

    ``field`` is (H, W) or (H, W, C); ``u``/``v`` broadcast together.
    """
    f, squeeze = _as_hwc(field)
    H, W = f.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, H - 1)
    u0 = np.floor(u)
    fu = (u - u0)[..., None]
    i0 = np.mod(u0.astype(np.int64), W)
    i1 = np.mod(i0 + 1, W)
    v0 = np.floor(v)
    fv = (v - v0)[..., None]
    j0 = v0.astype(np.int64)
    j1 = np.minimum(j0 + 1, H - 1)
    top = f[j0, i0] * (1.0 - fu) + f[j0, i1] * fu
    bot = f[j1, i0] * (1.0 - fu) + f[j1, i1] * fu
    out = top * (1.0 - fv) + bot * fv
    return out[..., 0] if squeeze else out


def sample_nearest_circular(field, u, v) -> np.ndarray:
    f = np.asarray(field)
    H, W = f.shape[:2]
    i = np.mod(np.floor(np.asarray(u) + 0.5).astype(np.int64), W)
    j = np.clip(np.floor(np.asarray(v) + 0.5).astype(np.int64), 0, H - 1)
    return f[j, i]


def rotate_erp(image, R, interp: str = "bilinear") -> np.ndarray:
    """Resample an ERP field so that output pixel p shows direction ``R.T @ dir(p)``.

    If ``image`` was captured in frame A and ``R`` maps A-coordinates to
    B-coordinates, the result is the same panorama expressed in frame B.
    """
    R = check_rotation(R)
    image = np.asarray(image)
    lattice = ErpLattice(image.shape[1], image.shape[0])
    src = lattice.directions() @ R  # row-vector form of R.T @ d
    u, v = dir_to_pixel(lattice, src)
    if interp == "nearest":
        return sample_nearest_circular(image, u, v)
    if interp == "bilinear":
        out = sample_bilinear_circular(image.astype(np.float64), u, v)
        return out.astype(np.result_type(image.dtype, np.float32)) if image.dtype.kind == "f" else out
    raise ValueError(f"unknown interpolation {interp!r}")
