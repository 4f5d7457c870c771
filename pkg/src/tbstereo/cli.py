"""``tbstereo`` command line: gen, rectify, match, normals, cloud, eval.

Exit codes: 0 success, 1 runtime or input error, 2 usage error.  Every
subcommand writes ``meta.json`` next to its outputs with the package version,
the fully resolved configuration and SHA-256 hashes of the inputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio
from .disparity import DisparityMap, pointcloud_from_disparity
from .evaluation import DISPARITY_COLUMNS, NORMAL_COLUMNS, disparity_metrics, normal_metrics
from .matcher import MatcherParams, match_pair
from .normals import NormalMap, from_heading_aligned, normals_from_depth, to_heading_aligned
from .scenegen import RECIPES, DatasetConfig, generate_dataset
from .sphere import ErpLattice, rotate_erp

THREADS_ENV = "TBSTEREO_THREADS"


class UsageError(Exception):
    pass


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _resolve(args, defaults: dict) -> dict:
    """defaults <- JSON config file <- explicitly given flags."""
    cfg = dict(defaults)
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    missing = [k for k, v in cfg.items() if v is _REQUIRED]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


_REQUIRED = object()


def _hashes(cfg: dict, keys) -> dict:
    return {k: fileio.sha256_file(cfg[k]) for k in keys if cfg.get(k)}


def _write_meta(out: Path, command: str, cfg: dict, inputs: dict, extra=None) -> None:
    meta = {
        "tool": "tbstereo",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "input_sha256": inputs,
    }
    if extra:
        meta.update(extra)
    fileio.write_json(out / "meta.json", meta)


def _threads(args, cfg) -> int:
    return int(cfg.get("threads") or _default_threads())


# --- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _resolve(args, {"out": _REQUIRED, "n": 2, "seed": 0, "recipe": "chaotic", "width": 512,
                          "height": 256, "capsule_radius": 0.1, "threads": None})
    if cfg["recipe"] not in RECIPES:
        raise UsageError(f"invalid recipe {cfg['recipe']!r}; choose from {RECIPES}")
    out = Path(cfg["out"])
    dc = DatasetConfig(n=int(cfg["n"]), recipe=cfg["recipe"], seed=int(cfg["seed"]), width=int(cfg["width"]),
                       height=int(cfg["height"]), capsule_radius=float(cfg["capsule_radius"]))
    manifest = generate_dataset(dc, out, threads=_threads(args, cfg))
    cfg["threads"] = None  # thread count never changes the output bytes
    _write_meta(out, "gen", cfg, {})
    print(f"wrote {len(manifest['samples'])} samples to {out}")
    return 0


def cmd_rectify(args) -> int:
    cfg = _resolve(args, {"top": _REQUIRED, "bottom": _REQUIRED, "rig": _REQUIRED, "out": _REQUIRED,
                          "interp": "bilinear", "threads": None})
    rig = fileio.rig_json_read(cfg["rig"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    R = rig.rotation
    for name in ("top", "bottom"):
        img = fileio.png_read(cfg[name])
        if img.shape[:2] != rig.lattice.shape:
            raise ValueError(f"{name} image is {img.shape[1]}x{img.shape[0]}, rig says "
                             f"{rig.lattice.width}x{rig.lattice.height}")
        res = rotate_erp(img, R, cfg["interp"])
        if cfg["interp"] == "bilinear":
            res = np.clip(np.round(res), 0, 255).astype(np.uint8)
        fileio.png_write(out / f"{name}.png", res)
    fileio.rig_json_write(out / "rig.json", rig)
    _write_meta(out, "rectify", cfg, _hashes(cfg, ["top", "bottom", "rig"]))
    return 0


def cmd_match(args) -> int:
    cfg = _resolve(args, {"top": _REQUIRED, "bottom": _REQUIRED, "params": None, "out": _REQUIRED,
                          "reference": "bottom", "threads": None})
    params = MatcherParams.from_dict(json.loads(Path(cfg["params"]).read_text())) if cfg["params"] else MatcherParams()
    top = fileio.png_read(cfg["top"])
    bottom = fileio.png_read(cfg["bottom"])
    if top.shape != bottom.shape:
        raise ValueError(f"image size mismatch: top {top.shape} vs bottom {bottom.shape}")
    res = match_pair(bottom, top, params, reference=cfg["reference"], threads=_threads(args, cfg))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    fileio.pfm_write(out / "disp.pfm", res.disparity.values.astype(np.float32))
    fileio.pfm_write(out / "sigma.pfm", res.sigma.astype(np.float32))
    fileio.mask_write(out / "valid.png", res.valid)
    fileio.write_json(out / "params.json", params.to_dict())
    cfg["threads"] = None
    _write_meta(out, "match", cfg, _hashes(cfg, ["top", "bottom", "params"]), {"matcher_params": params.to_dict()})
    return 0


def _read_rig_lattice(path, shape):
    rig = fileio.rig_json_read(path)
    if rig.lattice.shape != shape:
        raise ValueError(f"rig lattice {rig.lattice.width}x{rig.lattice.height} does not match map {shape[1]}x{shape[0]}")
    return rig


def cmd_normals(args) -> int:
    cfg = _resolve(args, {"depth": _REQUIRED, "rig": None, "frame": "ha", "out": _REQUIRED, "threads": None})
    if cfg["frame"] not in ("camera", "ha"):
        raise UsageError(f"invalid frame {cfg['frame']!r}")
    depth = fileio.pfm_read(cfg["depth"], channels=1).astype(np.float64)
    lattice = ErpLattice(depth.shape[1], depth.shape[0])
    if cfg["rig"]:
        lattice = _read_rig_lattice(cfg["rig"], depth.shape).lattice
    n = normals_from_depth(depth, lattice)
    if cfg["frame"] == "ha":
        n = to_heading_aligned(n, lattice)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    fileio.normal_write(out / "normal.pfm", n)
    fileio.png_write(out / "normal.png", fileio.normal_visual(n))
    _write_meta(out, "normals", cfg, _hashes(cfg, ["depth", "rig"]))
    return 0


def cmd_cloud(args) -> int:
    cfg = _resolve(args, {"disp": _REQUIRED, "rig": _REQUIRED, "rgb": None, "valid": None, "out": _REQUIRED,
                          "max_range": 10.0, "encoding": "binary_le", "threads": None})
    disp = fileio.pfm_read(cfg["disp"], channels=1).astype(np.float64)
    rig = _read_rig_lattice(cfg["rig"], disp.shape)
    mask = fileio.mask_read(cfg["valid"]) if cfg["valid"] else None
    colors = fileio.png_read(cfg["rgb"])[..., :3] if cfg["rgb"] else None
    pts, cols = pointcloud_from_disparity(DisparityMap(disp, "pixels", mask), rig, colors)
    keep = np.linalg.norm(pts, axis=-1) <= float(cfg["max_range"])
    pts = pts[keep]
    cols = None if cols is None else cols[keep]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    fileio.ply_write(out / "cloud.ply", pts, cols, cfg["encoding"])
    _write_meta(out, "cloud", cfg, _hashes(cfg, ["disp", "rig", "rgb", "valid"]), {"points": int(len(pts))})
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"pred": _REQUIRED, "gt": _REQUIRED, "mask": None, "occ": None, "kind": "disparity",
                          "out": _REQUIRED, "threads": None})
    kind = cfg["kind"]
    if kind not in ("disparity", "normal"):
        raise UsageError(f"invalid kind {kind!r}")
    if kind == "disparity":
        pred = fileio.pfm_read(cfg["pred"], channels=1).astype(np.float64)
        gt = fileio.pfm_read(cfg["gt"], channels=1).astype(np.float64)
        fn, columns = disparity_metrics, DISPARITY_COLUMNS
    else:
        pred, gt = fileio.normal_read(cfg["pred"]), fileio.normal_read(cfg["gt"])
        if pred.frame != gt.frame:
            gt = to_heading_aligned(gt) if pred.frame == "heading_aligned" else from_heading_aligned(gt)
        fn, columns = normal_metrics, NORMAL_COLUMNS
    shape = (pred.values if isinstance(pred, NormalMap) else pred).shape[:2]
    mask = fileio.mask_read(cfg["mask"]) if cfg["mask"] else np.ones(shape, dtype=bool)
    variants = {"all": fn(pred, gt, mask)}
    if cfg["occ"]:
        variants["non_occluded"] = fn(pred, gt, mask & ~fileio.mask_read(cfg["occ"]))
    primary = variants.get("non_occluded", variants["all"])
    report = {"kind": kind, **primary.to_dict(), "variants": {k: v.to_dict() for k, v in variants.items()}}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_json(out / "report.json", report)
    text = "".join(f"[{name}] n={rep.count}\n{rep.table(columns)}" for name, rep in variants.items())
    (out / "report.txt").write_text(text)
    _write_meta(out, "eval", cfg, _hashes(cfg, ["pred", "gt", "mask", "occ"]))
    print(text, end="")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; flags override it")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = argparse.ArgumentParser(prog="tbstereo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tbstereo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic stereo dataset")
    g.add_argument("--out")
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--recipe", choices=RECIPES)
    g.add_argument("--width", type=int)
    g.add_argument("--height", type=int)
    g.add_argument("--capsule-radius", dest="capsule_radius", type=float)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("rectify", parents=[common], help="rotate a pair into the rig frame")
    r.add_argument("--top")
    r.add_argument("--bottom")
    r.add_argument("--rig")
    r.add_argument("--out")
    r.add_argument("--interp", choices=("nearest", "bilinear"))
    r.set_defaults(func=cmd_rectify)

    m = sub.add_parser("match", parents=[common], help="census/SGM disparity for a rectified pair")
    m.add_argument("--top")
    m.add_argument("--bottom")
    m.add_argument("--params", help="matcher params JSON")
    m.add_argument("--out")
    m.add_argument("--reference", choices=("bottom", "top"))
    m.set_defaults(func=cmd_match)

    n = sub.add_parser("normals", parents=[common], help="normals from a depth map")
    n.add_argument("--depth")
    n.add_argument("--rig")
    n.add_argument("--frame", choices=("camera", "ha"))
    n.add_argument("--out")
    n.set_defaults(func=cmd_normals)

    c = sub.add_parser("cloud", parents=[common], help="point cloud from a disparity map")
    c.add_argument("--disp")
    c.add_argument("--rig")
    c.add_argument("--rgb")
    c.add_argument("--valid", help="optional validity mask PNG")
    c.add_argument("--out")
    c.add_argument("--max-range", dest="max_range", type=float)
    c.add_argument("--encoding", choices=("ascii", "binary_le"))
    c.set_defaults(func=cmd_cloud)

    e = sub.add_parser("eval", parents=[common], help="disparity or normal metrics")
    e.add_argument("--pred")
    e.add_argument("--gt")
    e.add_argument("--mask")
    e.add_argument("--occ", help="occlusion mask PNG; adds a non-occluded variant")
    e.add_argument("--kind", choices=("disparity", "normal"))
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tbstereo {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError, json.JSONDecodeError) as exc:
        print(f"tbstereo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
