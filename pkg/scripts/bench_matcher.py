"""Matcher accuracy and speed on freshly generated scenegen samples.

    python scripts/bench_matcher.py --n 5 --width 512 --height 256
"""
import argparse
import json
import time

import numpy as np

from tbstereo.disparity import disparity_unit_convert
from tbstereo.evaluation import DISPARITY_COLUMNS, disparity_metrics
from tbstereo.matcher import MatcherParams, match_pair
from tbstereo.scenegen import RECIPES, DatasetConfig, build_sample


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--recipe", choices=RECIPES, default="chaotic")
    ap.add_argument("--width", type=int, default=512)
    ap.add_argument("--height", type=int, default=256)
    ap.add_argument("--max-disparity", type=int, default=64)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--json", help="optional path for per-sample results")
    args = ap.parse_args()

    cfg = DatasetConfig(n=args.n, recipe=args.recipe, seed=args.seed, width=args.width, height=args.height)
    params = MatcherParams(max_disparity=args.max_disparity)
    rows = []
    print(f"{'idx':>4} {'secs':>6} " + " ".join(f"{c:>7}" for c in DISPARITY_COLUMNS) + f" {'valid%':>7}")
    for i in range(cfg.n):
        _, _, s = build_sample(cfg, i)
        t0 = time.perf_counter()
        res = match_pair(s.bottom_rgb, s.top_rgb, params, threads=args.threads)
        secs = time.perf_counter() - t0
        gt = disparity_unit_convert(s.disparity, "pixels").values
        mask = s.disparity.mask & ~s.occlusion & (gt < params.max_disparity) & res.valid
        mask[:2] = mask[-2:] = False
        rep = disparity_metrics(res.disparity.values, gt, mask)
        valid_pct = 100.0 * res.valid.mean()
        print(f"{i:>4} {secs:>6.2f} " + " ".join(f"{rep.metrics[c]:>7.3f}" for c in DISPARITY_COLUMNS)
              + f" {valid_pct:>7.2f}")
        rows.append({"index": i, "seconds": secs, "valid_pct": valid_pct, **rep.to_dict()})
    mean = {c: float(np.mean([r["metrics"][c] for r in rows])) for c in DISPARITY_COLUMNS}
    print("mean        " + " ".join(f"{mean[c]:>7.3f}" for c in DISPARITY_COLUMNS))
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"params": params.to_dict(), "samples": rows, "mean": mean}, f, indent=2)


if __name__ == "__main__":
    main()
