"""Analytic scenes (sphere / plane / box) and a vectorized ERP ray caster."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .normals import NormalMap
from .disparity import DepthMap
from .sphere import ErpLattice, check_rotation

T_MIN = 1e-9

# keeps planes through integer cell boundaries away from checker parity flips
_CHECKER_OFFSET = 0.2371


# --- textures --------------------------------------------------------------

@dataclass(frozen=True)
class Solid:
    color: tuple = (0.7, 0.7, 0.7)

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.color, dtype=np.float64), p.shape).copy()


@dataclass(frozen=True)
class Checker:
    scale: float = 0.5
    colors: tuple = ((0.9, 0.9, 0.9), (0.1, 0.1, 0.1))

    def __call__(self, p: np.ndarray) -> np.ndarray:
        cells = np.floor(p / self.scale + _CHECKER_OFFSET).astype(np.int64)
        parity = (cells.sum(axis=-1) & 1).astype(bool)
        c0, c1 = (np.asarray(c, dtype=np.float64) for c in self.colors)
        return np.where(parity[..., None], c1, c0)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _lattice_value(ix, iy, iz, seed: int) -> np.ndarray:
    """Deterministic pseudo-random value in [0, 1) per integer lattice point."""
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ ix.astype(np.uint64))
        h = _splitmix64(h ^ iy.astype(np.uint64))
        h = _splitmix64(h ^ iz.astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def value_noise(p: np.ndarray, seed: int) -> np.ndarray:
    """Smoothstep-interpolated 3D value noise in [0, 1]."""
    base = np.floor(p)
    f = p - base
    f = f * f * (3.0 - 2.0 * f)
    i = base.astype(np.int64)
    out = np.zeros(p.shape[:-1])
    for dx in (0, 1):
        wx = f[..., 0] if dx else 1.0 - f[..., 0]
        for dy in (0, 1):
            wy = f[..., 1] if dy else 1.0 - f[..., 1]
            for dz in (0, 1):
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                out += wx * wy * wz * _lattice_value(i[..., 0] + dx, i[..., 1] + dy, i[..., 2] + dz, seed)
    return out


@dataclass(frozen=True)
class ValueNoise:
    scale: float = 0.2
    seed: int = 0
    colors: tuple = ((0.05, 0.05, 0.05), (0.95, 0.95, 0.95))
    octaves: int = 3

    def __call__(self, p: np.ndarray) -> np.ndarray:
        acc = np.zeros(p.shape[:-1])
        amp, norm, freq = 1.0, 0.0, 1.0 / self.scale
        for k in range(self.octaves):
            acc += amp * value_noise(p * freq, self.seed + 7919 * k)
            norm += amp
            amp *= 0.5
            freq *= 2.0
        t = (acc / norm)[..., None]
        c0, c1 = (np.asarray(c, dtype=np.float64) for c in self.colors)
        return c0 * (1.0 - t) + c1 * t


Texture = Union[Solid, Checker, ValueNoise]


# --- primitives ------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    texture: Texture = Solid()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        b = np.einsum("...i,...i", oc, d)
        cq = np.einsum("...i,...i", oc, oc) - self.radius**2
        disc = b * b - cq
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        # numerically stable pair of roots
        q = -b - np.copysign(sq, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q
            r2 = np.where(q != 0, cq / q, 0.0)
        t_near = np.minimum(r1, r2)
        t_far = np.maximum(r1, r2)
        t = np.where(t_near > T_MIN, t_near, t_far)
        t = np.where(hit & (t > T_MIN), t, np.inf)
        with np.errstate(invalid="ignore"):
            n = (o + t[..., None] * d - c) / self.radius
        return t, n

    def signed_distance(self, p):
        return np.linalg.norm(np.asarray(p) - np.asarray(self.center), axis=-1) - self.radius


@dataclass(frozen=True)
class Plane:
    """Infinite plane; the solid half-space lies behind ``normal``."""

    point: tuple
    normal: tuple
    texture: Texture = Solid()

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if not np.linalg.norm(n) > 0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", tuple(float(x) for x in n / np.linalg.norm(n)))

    def intersect(self, o, d):
        n = np.asarray(self.normal)
        p0 = np.asarray(self.point, dtype=np.float64)
        denom = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p0 - o) @ n) / denom
        t = np.where((np.abs(denom) > 1e-15) & (t > T_MIN), t, np.inf)
        return t, np.broadcast_to(n, d.shape)

    def signed_distance(self, p):
        return (np.asarray(p) - np.asarray(self.point)) @ np.asarray(self.normal)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    texture: Texture = Solid()

    def __post_init__(self):
        if not np.all(np.asarray(self.lo) < np.asarray(self.hi)):
            raise ValueError(f"box requires lo < hi componentwise, got {self.lo} / {self.hi}")

    def intersect(self, o, d):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
        tn = np.fmax.reduce(np.fmin(t0, t1), axis=-1)
        tf = np.fmin.reduce(np.fmax(t0, t1), axis=-1)
        t = np.where(tn > T_MIN, tn, tf)
        t = np.where((tn <= tf) & (tf > T_MIN), t, np.inf)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        with np.errstate(invalid="ignore"):
            rel = (o + t[..., None] * d - center) / half
        axis = np.argmax(np.abs(np.nan_to_num(rel)), axis=-1)
        n = np.zeros(d.shape)
        np.put_along_axis(n, axis[..., None], np.sign(np.take_along_axis(rel, axis[..., None], -1)), -1)
        return t, n

    def signed_distance(self, p):
        p = np.asarray(p, dtype=np.float64)
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        q = np.abs(p - 0.5 * (lo + hi)) - 0.5 * (hi - lo)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside


Primitive = Union[Sphere, Plane, Box]


@dataclass(frozen=True)
class Light:
    direction: tuple = (0.3, 0.2, 1.0)
    ambient: float = 0.35

    def unit(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=np.float64)
        return d / np.linalg.norm(d)


@dataclass
class SceneDescription:
    primitives: list = field(default_factory=list)
    light: Light = Light()
    background: tuple = (0.0, 0.0, 0.0)
    seed: int = 0

    def to_dict(self) -> dict:
        def tex(t):
            return {"kind": type(t).__name__.lower(), **{k: _jsonable(v) for k, v in vars(t).items()}}

        def prim(p):
            out = {"kind": type(p).__name__.lower()}
            for k, v in vars(p).items():
                out[k] = tex(v) if k == "texture" else _jsonable(v)
            return out

        return {
            "primitives": [prim(p) for p in self.primitives],
            "light": {"direction": _jsonable(self.light.direction), "ambient": self.light.ambient},
            "background": _jsonable(self.background),
            "seed": self.seed,
        }


def _jsonable(v):
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


# --- casting ---------------------------------------------------------------

@dataclass(frozen=True)
class CameraPose:
    """Camera center and world-to-camera rotation."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "rotation", check_rotation(self.rotation))


def cast_rays(scene: SceneDescription, origins, dirs):
    """Nearest hit per ray: ``(t, primitive index, outward normal)``; misses get inf / -1 / NaN."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    best = np.full(dirs.shape[:-1], np.inf)
    idx = np.full(dirs.shape[:-1], -1, dtype=np.int64)
    normals = np.full(dirs.shape, np.nan)
    for k, p in enumerate(scene.primitives):
        t, n = p.intersect(origins, dirs)
        closer = t < best
        best = np.where(closer, t, best)
        idx = np.where(closer, k, idx)
        normals = np.where(closer[..., None], n, normals)
    return best, idx, normals


@dataclass
class TraceResult:
    depth: np.ndarray  # (H, W), NaN on miss
    points: np.ndarray  # (H, W, 3) world, NaN on miss
    normals: np.ndarray  # (H, W, 3) world, facing the camera
    prim: np.ndarray  # (H, W) primitive index or -1
    dirs: np.ndarray  # (H, W, 3) world ray directions


def trace_erp(scene: SceneDescription, pose: CameraPose, lattice: ErpLattice) -> TraceResult:
    dirs = lattice.directions() @ pose.rotation  # camera -> world
    origins = np.broadcast_to(pose.position, dirs.shape)
    t, idx, n = cast_rays(scene, origins, dirs)
    hit = np.isfinite(t)
    depth = np.where(hit, t, np.nan)
    pts = np.where(hit[..., None], pose.position + depth[..., None] * dirs, np.nan)
    facing = np.einsum("...i,...i", n, dirs) > 0
    n = np.where(facing[..., None], -n, n)
    return TraceResult(depth, pts, n, idx, dirs)


def shade(scene: SceneDescription, tr: TraceResult) -> np.ndarray:
    rgb = np.broadcast_to(np.asarray(scene.background, dtype=np.float64), tr.dirs.shape).copy()
    light = scene.light.unit()
    for k, p in enumerate(scene.primitives):
        sel = tr.prim == k
        if not np.any(sel):
            continue
        albedo = p.texture(tr.points[sel])
        lam = np.maximum(tr.normals[sel] @ light, 0.0)
        rgb[sel] = albedo * (scene.light.ambient + (1.0 - scene.light.ambient) * lam)[:, None]
    return np.clip(rgb, 0.0, 1.0)


def render_erp(scene: SceneDescription, pose: CameraPose, lattice: ErpLattice):
    """Render RGB in [0, 1], radial depth and camera-frame normals for one ERP camera."""
    tr = trace_erp(scene, pose, lattice)
    rgb = shade(scene, tr)
    n_cam = tr.normals @ pose.rotation.T
    return rgb, DepthMap(tr.depth), NormalMap(n_cam, "camera")
