"""Readers and writers: PFM, PNG, PLY, rig JSON, normal-map sidecars."""
from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .disparity import RigConfig
from .normals import NormalMap
from .sphere import DomainError, ErpLattice


class PfmError(ValueError):
    pass


class RigSchemaError(ValueError):
    pass


class PlyError(ValueError):
    pass


# --- PFM -------------------------------------------------------------------

def pfm_write(path, field) -> None:
    """Write a (H, W) or (H, W, 3) field as little-endian float32 PFM (rows stored bottom-up)."""
    a = np.asarray(field)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise PfmError(f"PFM holds 1 or 3 channels, got shape {a.shape}")
    H, W = a.shape[:2]
    data = np.ascontiguousarray(a[::-1].astype("<f4"))
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{W} {H}\n".encode() + b"-1.0\n")
        f.write(data.tobytes())


def pfm_read(path, channels: int | None = None) -> np.ndarray:
    """Read a PFM file into a top-down float32 array; either endianness."""
    raw = Path(path).read_bytes()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", raw)
    if not m:
        raise PfmError(f"{path}: malformed PFM header")
    nch = 3 if m.group(1) == b"PF" else 1
    if channels is not None and channels != nch:
        raise PfmError(f"{path}: expected {channels} channel(s), file has {nch}")
    W, H = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError as exc:
        raise PfmError(f"{path}: bad scale field") from exc
    if scale == 0:
        raise PfmError(f"{path}: zero scale")
    dtype = "<f4" if scale < 0 else ">f4"
    body = raw[m.end():]
    n = W * H * nch
    if len(body) < 4 * n:
        raise PfmError(f"{path}: truncated data ({len(body)} bytes, need {4 * n})")
    a = np.frombuffer(body, dtype=dtype, count=n).astype(np.float32)
    a = a.reshape((H, W, 3) if nch == 3 else (H, W))
    return a[::-1].copy()


# --- PNG -------------------------------------------------------------------

def png_write(path, image) -> None:
    a = np.asarray(image)
    if a.dtype != np.uint8:
        raise ValueError("PNG writer takes uint8 images")
    Image.fromarray(a).save(path, format="PNG")


def png_read(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).copy()


def mask_write(path, mask) -> None:
    png_write(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def mask_read(path) -> np.ndarray:
    a = png_read(path)
    if a.ndim == 3:
        a = a[..., 0]
    return a > 127


def normal_visual(n: NormalMap) -> np.ndarray:
    """(n + 1) / 2 encoded 8-bit RGB; invalid pixels black."""
    vis = np.round((np.nan_to_num(n.values) + 1.0) * 0.5 * 255.0)
    vis = np.where(n.mask[..., None], vis, 0)
    return np.clip(vis, 0, 255).astype(np.uint8)


# --- normal maps (PFM + JSON sidecar carrying the frame tag) ----------------

def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def normal_write(path, n: NormalMap) -> None:
    vals = np.where(n.mask[..., None], n.values, np.nan).astype(np.float32)
    pfm_write(path, vals)
    write_json(_sidecar(path), {"frame": n.frame})


def normal_read(path) -> NormalMap:
    vals = pfm_read(path, channels=3)
    side = _sidecar(path)
    frame = json.loads(side.read_text())["frame"] if side.exists() else "camera"
    return NormalMap(vals.astype(np.float64), frame)


# --- PLY -------------------------------------------------------------------

def ply_write(path, points, colors=None, encoding: str = "binary_le") -> None:
    """Vertices with float x, y, z and uchar red, green, blue."""
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise PlyError("point coordinates must be finite")
    n = len(pts)
    cols = np.full((n, 3), 255, np.uint8) if colors is None else np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if len(cols) != n:
        raise PlyError(f"{len(cols)} colors for {n} points")
    fmt = {"ascii": "ascii", "binary_le": "binary_little_endian"}.get(encoding)
    if fmt is None:
        raise PlyError(f"unknown PLY encoding {encoding!r}")
    header = (
        f"ply\nformat {fmt} 1.0\nelement vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if encoding == "ascii":
            lines = [
                "%s %s %s %d %d %d\n" % (repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), *c)
                for p, c in zip(pts, cols)
            ]
            f.write("".join(lines).encode("ascii"))
        else:
            rec = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                     ("r", "u1"), ("g", "u1"), ("b", "u1")])
            rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
            rec["r"], rec["g"], rec["b"] = cols[:, 0], cols[:, 1], cols[:, 2]
            f.write(rec.tobytes())


def ply_read(path):
    """Read a PLY written by :func:`ply_write`; returns ``(points float32, colors uint8)``."""
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise PlyError(f"{path}: not a PLY file")
    header = raw[:end].decode("ascii").splitlines()
    body = raw[end + len(b"end_header\n"):]
    fmt = next((ln.split()[1] for ln in header if ln.startswith("format ")), None)
    n = next((int(ln.split()[2]) for ln in header if ln.startswith("element vertex")), None)
    props = [ln.split()[-1] for ln in header if ln.startswith("property")]
    if n is None or props != ["x", "y", "z", "red", "green", "blue"]:
        raise PlyError(f"{path}: unsupported vertex layout")
    if fmt == "ascii":
        rows = [ln.split() for ln in body.decode("ascii").splitlines() if ln.strip()]
        if len(rows) != n:
            raise PlyError(f"{path}: header says {n} vertices, body has {len(rows)}")
        pts = np.array([[np.float32(r[0]), np.float32(r[1]), np.float32(r[2])] for r in rows], dtype=np.float32).reshape(-1, 3)
        cols = np.array([[int(r[3]), int(r[4]), int(r[5])] for r in rows], dtype=np.uint8).reshape(-1, 3)
        return pts, cols
    if fmt == "binary_little_endian":
        rec = np.frombuffer(body, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                         ("r", "u1"), ("g", "u1"), ("b", "u1")], count=n)
        pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=-1).astype(np.float32)
        cols = np.stack([rec["r"], rec["g"], rec["b"]], axis=-1).astype(np.uint8)
        return pts, cols
    raise PlyError(f"{path}: unsupported format {fmt!r}")


# --- rig JSON --------------------------------------------------------------

RIG_KEYS = {"baseline_m", "rotation_wxyz", "width", "height", "reference"}


def rig_to_dict(rig: RigConfig) -> dict:
    return {
        "baseline_m": rig.baseline,
        "rotation_wxyz": list(rig.quaternion),
        "width": rig.lattice.width,
        "height": rig.lattice.height,
        "reference": rig.reference,
    }


def rig_from_dict(d, where: str = "rig") -> RigConfig:
    if not isinstance(d, dict):
        raise RigSchemaError(f"{where}: expected an object")
    unknown = set(d) - RIG_KEYS
    if unknown:
        raise RigSchemaError(f"{where}.{sorted(unknown)[0]}: unknown key")
    for key in ("baseline_m", "rotation_wxyz", "width", "height"):
        if key not in d:
            raise RigSchemaError(f"{where}.{key}: missing")
    b = d["baseline_m"]
    if isinstance(b, bool) or not isinstance(b, (int, float)) or not b > 0:
        raise RigSchemaError(f"{where}.baseline_m: must be a positive number, got {b!r}")
    q = d["rotation_wxyz"]
    if not isinstance(q, list) or len(q) != 4 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in q):
        raise RigSchemaError(f"{where}.rotation_wxyz: must be a list of 4 numbers")
    for key in ("width", "height"):
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 2:
            raise RigSchemaError(f"{where}.{key}: must be an integer >= 2, got {v!r}")
    ref = d.get("reference", "bottom")
    if ref not in ("bottom", "top"):
        raise RigSchemaError(f"{where}.reference: must be 'bottom' or 'top', got {ref!r}")
    try:
        return RigConfig(float(b), tuple(float(x) for x in q), ErpLattice(d["width"], d["height"]), ref)
    except DomainError as exc:
        raise RigSchemaError(f"{where}.rotation_wxyz: {exc}") from exc


def rig_json_write(path, rig: RigConfig) -> None:
    write_json(path, rig_to_dict(rig))


def rig_json_read(path) -> RigConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RigSchemaError(f"rig: invalid JSON ({exc})") from exc
    return rig_from_dict(d)


# --- misc ------------------------------------------------------------------

def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
