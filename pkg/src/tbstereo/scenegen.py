"""Seeded procedural scenes, rig placement and top-bottom stereo sample rendering.

Randomness comes from numpy's counter-based Philox4x64-10 bit generator keyed
with a 64-bit seed; sample ``i`` of a dataset uses key ``seed ^ i`` so samples
can be produced in any order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .disparity import DepthMap, DisparityMap, RigConfig, disparity_unit_convert, gt_disparity
from .normals import NormalMap, to_heading_aligned
from .raytrace import Box, CameraPose, Checker, Light, Plane, SceneDescription, Sphere, ValueNoise, render_erp
from .sphere import ErpLattice, rot_x, rot_y, rot_z

RNG_ALGORITHM = "numpy.random.Philox(key=seed) / Philox4x64-10"
RECIPES = ("chaotic", "realistic")

BASELINE_RANGE = (0.05, 0.5)
TILT_LIMIT_DEG = 45.0


class PlacementError(RuntimeError):
    """Rejection sampling found no collision-free rig pose."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


def rig_rotation(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """World-to-rig rotation; the rig-to-world orientation is Rz(yaw) Ry(pitch) Rx(roll)."""
    r2w = rot_z(np.radians(yaw_deg)) @ rot_y(np.radians(pitch_deg)) @ rot_x(np.radians(roll_deg))
    return r2w.T


@dataclass(frozen=True)
class RigSample:
    rig: RigConfig
    position: tuple
    roll_deg: float
    pitch_deg: float
    yaw_deg: float

    def __post_init__(self):
        lo, hi = BASELINE_RANGE
        if not lo <= self.rig.baseline <= hi:
            raise ValueError(f"baseline {self.rig.baseline} outside [{lo}, {hi}] m")
        for name in ("roll_deg", "pitch_deg"):
            val = getattr(self, name)
            if not -TILT_LIMIT_DEG <= val <= TILT_LIMIT_DEG:
                raise ValueError(f"{name} = {val} outside [-45, 45] degrees")
        if not 0.0 <= self.yaw_deg < 360.0:
            raise ValueError(f"yaw_deg = {self.yaw_deg} outside [0, 360)")

    @classmethod
    def from_angles(cls, baseline, position, roll_deg, pitch_deg, yaw_deg, lattice):
        rig = RigConfig.from_matrix(baseline, rig_rotation(roll_deg, pitch_deg, yaw_deg), lattice)
        return cls(rig, tuple(float(x) for x in position), float(roll_deg), float(pitch_deg), float(yaw_deg))

    @property
    def top_position(self) -> np.ndarray:
        return self.rig.top_center(self.position)

    def to_dict(self) -> dict:
        return {
            "baseline_m": self.rig.baseline,
            "position": list(self.position),
            "roll_deg": self.roll_deg,
            "pitch_deg": self.pitch_deg,
            "yaw_deg": self.yaw_deg,
            "rotation_wxyz": list(self.rig.quaternion),
        }


def _segment_min(f, a, b, iters: int = 80) -> float:
    """Minimum of a convex function of the point along segment ab (ternary search)."""
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(a + m1 * (b - a)) < f(a + m2 * (b - a)):
            hi = m2
        else:
            lo = m1
    return min(f(a), f(b), f(a + 0.5 * (lo + hi) * (b - a)))


def capsule_clear(scene: SceneDescription, a, b, radius: float) -> bool:
    """True when the capsule (segment ab inflated by ``radius``) overlaps no solid primitive."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for p in scene.primitives:
        if isinstance(p, Plane):
            dist = min(p.signed_distance(a), p.signed_distance(b))
        elif isinstance(p, Sphere):
            c = np.asarray(p.center)
            ab = b - a
            t = np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            dist = np.linalg.norm(a + t * ab - c) - p.radius
        else:
            dist = _segment_min(lambda x: float(p.signed_distance(x)), a, b)
        if dist <= radius:
            return False
    return True


@dataclass
class PlacementRegion:
    lo: tuple = (-1.5, -1.5, 0.4)
    hi: tuple = (1.5, 1.5, 2.0)


def sample_rig(scene: SceneDescription, rng: np.random.Generator, lattice: ErpLattice = ErpLattice(512, 256),
               region: PlacementRegion | None = None, capsule_radius: float = 0.1,
               max_attempts: int = 1000, baseline_range=BASELINE_RANGE) -> RigSample:
    """Rejection-sample baseline, pose and position until the capsule is collision-free."""
    region = region or PlacementRegion()
    lo, hi = np.asarray(region.lo, float), np.asarray(region.hi, float)
    for _ in range(max_attempts):
        baseline = rng.uniform(*baseline_range)
        roll, pitch = rng.uniform(-TILT_LIMIT_DEG, TILT_LIMIT_DEG, size=2)
        yaw = rng.uniform(0.0, 360.0)
        pos = rng.uniform(lo, hi)
        sample = RigSample.from_angles(baseline, pos, roll, pitch, yaw, lattice)
        if capsule_clear(scene, sample.position, sample.top_position, capsule_radius):
            return sample
    raise PlacementError(f"no collision-free rig placement in {max_attempts} attempts")


# --- scenes ----------------------------------------------------------------

def _random_color(rng, lo=0.1, hi=0.95):
    return tuple(float(x) for x in rng.uniform(lo, hi, size=3))


def _random_texture(rng, min_scale=0.08, max_scale=0.3):
    seed = int(rng.integers(0, 2**63))
    c0, c1 = _random_color(rng, 0.0, 0.45), _random_color(rng, 0.55, 1.0)
    if rng.uniform() < 0.35:
        return Checker(float(rng.uniform(min_scale, max_scale)) * 1.5, (c0, c1))
    return ValueNoise(float(rng.uniform(min_scale, max_scale)), seed, (c0, c1))


def make_scene(recipe: str, rng: np.random.Generator, n_objects: tuple = (4, 9),
               room_half: tuple = (4.0, 7.0), room_height: tuple = (3.0, 4.5)) -> SceneDescription:
    """Textured room (floor, four walls, ceiling) with spheres and boxes.

    ``chaotic`` suspends objects anywhere in the room; ``realistic`` rests
    them on the floor (sphere center height = radius, box bottom on z = 0).
    """
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; expected one of {RECIPES}")
    hx, hy = rng.uniform(*room_half, size=2)
    hz = rng.uniform(*room_height)
    prims = [
        Plane((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), _random_texture(rng, 0.15, 0.4)),
        Plane((0.0, 0.0, hz), (0.0, 0.0, -1.0), _random_texture(rng, 0.2, 0.5)),
        Plane((hx, 0.0, 0.0), (-1.0, 0.0, 0.0), _random_texture(rng, 0.2, 0.5)),
        Plane((-hx, 0.0, 0.0), (1.0, 0.0, 0.0), _random_texture(rng, 0.2, 0.5)),
        Plane((0.0, hy, 0.0), (0.0, -1.0, 0.0), _random_texture(rng, 0.2, 0.5)),
        Plane((0.0, -hy, 0.0), (0.0, 1.0, 0.0), _random_texture(rng, 0.2, 0.5)),
    ]
    for _ in range(int(rng.integers(n_objects[0], n_objects[1] + 1))):
        size = float(rng.uniform(0.2, 0.8))
        x, y = rng.uniform([-hx + 1.0, -hy + 1.0], [hx - 1.0, hy - 1.0])
        z = size if recipe == "realistic" else float(rng.uniform(size, hz - size))
        tex = _random_texture(rng, 0.05, 0.2)
        if rng.uniform() < 0.5:
            prims.append(Sphere((float(x), float(y), z), size, tex))
        else:
            half = rng.uniform(0.5, 1.0, size=3) * size
            if recipe == "realistic":
                z = float(half[2])
            c = np.array([x, y, z])
            prims.append(Box(tuple(float(t) for t in c - half), tuple(float(t) for t in c + half), tex))
    light_dir = rng.normal(size=3)
    light_dir[2] = abs(light_dir[2]) + 0.5
    light = Light(tuple(float(t) for t in light_dir / np.linalg.norm(light_dir)), float(rng.uniform(0.3, 0.5)))
    return SceneDescription(prims, light, (0.0, 0.0, 0.0), int(rng.integers(0, 2**63)))


# --- samples ---------------------------------------------------------------

@dataclass
class StereoSample:
    bottom_rgb: np.ndarray  # uint8 (H, W, 3)
    top_rgb: np.ndarray
    depth: DepthMap  # bottom view, radial metres
    disparity: DisparityMap  # radians, bottom reference
    normal_cam: NormalMap
    normal_ha: NormalMap
    occlusion: np.ndarray  # bool, True = not visible from the top camera
    rig: RigSample


def to_uint8(rgb) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def make_stereo_sample(scene: SceneDescription, rig: RigSample, lattice: ErpLattice | None = None,
                       occlusion_rtol: float = 0.01) -> StereoSample:
    """Render both views in the rig frame (so the pair is already rectified) plus ground truth."""
    lattice = lattice or rig.rig.lattice
    rc = rig.rig if rig.rig.lattice == lattice else RigConfig(rig.rig.baseline, rig.rig.quaternion, lattice)
    R = rc.rotation
    bottom_rgb, depth, n_cam = render_erp(scene, CameraPose(rig.position, R), lattice)
    top_rgb, _, _ = render_erp(scene, CameraPose(rc.top_center(rig.position), R), lattice)
    disp, occ = gt_disparity(scene, rc, rig.position, occlusion_rtol)
    return StereoSample(to_uint8(bottom_rgb), to_uint8(top_rgb), depth, disp, n_cam,
                        to_heading_aligned(n_cam, lattice), occ, rig)


def write_sample(sample: StereoSample, out_dir) -> dict:
    """Write one bundle; returns ``{name: {"path", "sha256"}}`` (paths relative to ``out_dir``'s parent)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.png_write(out_dir / "top.png", sample.top_rgb)
    fileio.png_write(out_dir / "bottom.png", sample.bottom_rgb)
    fileio.pfm_write(out_dir / "depth.pfm", sample.depth.values.astype(np.float32))
    fileio.pfm_write(out_dir / "disp.pfm", disparity_unit_convert(sample.disparity, "pixels").values.astype(np.float32))
    fileio.normal_write(out_dir / "normal_cam.pfm", sample.normal_cam)
    fileio.normal_write(out_dir / "normal_ha.pfm", sample.normal_ha)
    fileio.mask_write(out_dir / "occ.png", sample.occlusion)
    fileio.rig_json_write(out_dir / "rig.json", sample.rig.rig)
    files = {}
    for p in sorted(out_dir.iterdir()):
        files[p.name] = {"path": f"{out_dir.name}/{p.name}", "sha256": fileio.sha256_file(p)}
    return files


@dataclass
class DatasetConfig:
    n: int = 2
    recipe: str = "chaotic"
    seed: int = 0
    width: int = 512
    height: int = 256
    capsule_radius: float = 0.1
    max_attempts: int = 1000

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}; expected one of {RECIPES}")
        if self.n < 0:
            raise ValueError("n must be >= 0")


def sample_seed(seed: int, index: int) -> int:
    return (int(seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


def build_sample(config: DatasetConfig, index: int):
    """Scene, rig and rendered bundle for sample ``index``; a pure function of (config, index)."""
    lattice = ErpLattice(config.width, config.height)
    rng = make_rng(sample_seed(config.seed, index))
    scene = make_scene(config.recipe, rng)
    rig = sample_rig(scene, rng, lattice, capsule_radius=config.capsule_radius, max_attempts=config.max_attempts)
    return scene, rig, make_stereo_sample(scene, rig, lattice)


def generate_dataset(config: DatasetConfig, out_dir, threads: int = 1) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(i):
        try:
            scene, rig, sample = build_sample(config, i)
            files = write_sample(sample, out_dir / f"{i:05d}")
        except Exception as exc:  # surfaced with the sample index
            raise RuntimeError(f"sample {i}: {exc}") from exc
        return {
            "index": i,
            "seed": sample_seed(config.seed, i),
            "rig": rig.to_dict(),
            "scene": scene.to_dict(),
            "files": files,
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            samples = list(ex.map(one, range(config.n)))
    else:
        samples = [one(i) for i in range(config.n)]
    manifest = {
        "rng": RNG_ALGORITHM,
        "config": asdict(config),
        "samples": samples,
    }
    fileio.write_json(out_dir / "manifest.json", manifest)
    return manifest
