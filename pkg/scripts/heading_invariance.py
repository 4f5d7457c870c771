"""Yaw a camera by whole columns and compare camera-frame vs heading-aligned normals.

Writes side-by-side PNGs of both encodings for the original and yawed views.
"""
import argparse
from pathlib import Path

import numpy as np

from tbstereo import fileio
from tbstereo.normals import to_heading_aligned
from tbstereo.raytrace import CameraPose, render_erp
from tbstereo.scenegen import make_rng, make_scene, sample_rig
from tbstereo.sphere import ErpLattice, column_shift_rotation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--shift", type=int, default=128, help="yaw in columns")
    ap.add_argument("--width", type=int, default=512)
    ap.add_argument("--height", type=int, default=256)
    ap.add_argument("--out", default="heading_demo")
    args = ap.parse_args()

    lat = ErpLattice(args.width, args.height)
    rng = make_rng(args.seed)
    scene = make_scene("chaotic", rng)
    rig = sample_rig(scene, rng, lat)
    R = rig.rig.rotation
    _, _, cam0 = render_erp(scene, CameraPose(rig.position, R), lat)
    _, _, cam1 = render_erp(scene, CameraPose(rig.position, column_shift_rotation(lat, args.shift) @ R), lat)
    ha0, ha1 = to_heading_aligned(cam0), to_heading_aligned(cam1)

    ok = cam1.mask
    cam_diff = np.abs(cam1.values - np.roll(cam0.values, args.shift, 1))[ok].max()
    ha_diff = np.abs(ha1.values - np.roll(ha0.values, args.shift, 1))[ok].max()
    print(f"yaw {360.0 * args.shift / lat.width:.2f} deg")
    print(f"camera frame     max |n1 - roll(n0)| = {cam_diff:.3e}")
    print(f"heading-aligned  max |n1 - roll(n0)| = {ha_diff:.3e}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, a, b in (("camera", cam0, cam1), ("heading_aligned", ha0, ha1)):
        rolled = np.roll(fileio.normal_visual(a), args.shift, 1)
        fileio.png_write(out / f"{name}.png", np.concatenate([rolled, fileio.normal_visual(b)], axis=0))
    print(f"wrote {out}/camera.png and {out}/heading_aligned.png (top: rolled original, bottom: yawed render)")


if __name__ == "__main__":
    main()
