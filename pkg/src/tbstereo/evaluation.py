"""Disparity / normal metrics and the reference training losses as scoring functions.

All reductions use ``math.fsum`` (exactly rounded), so results do not depend
on summation order, e.g. under a column rotation of the inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .disparity import DisparityMap, disparity_unit_convert
from .normals import NormalMap, angular_error

NORMAL_THRESHOLDS_DEG = (5.0, 7.5, 11.5, 22.5, 30.0)
DISPARITY_COLUMNS = ("MAE", "RMSE", "BP-1", "BP-2", "D1")
NORMAL_COLUMNS = ("mean", "rmse") + tuple(f"delta<{t:g}" for t in NORMAL_THRESHOLDS_DEG)


class EmptyEvaluationError(ValueError):
    pass


@dataclass
class EvalReport:
    metrics: dict
    count: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metrics": dict(self.metrics), "count": self.count, "config": dict(self.config)}

    def table(self, columns=None) -> str:
        cols = list(columns or self.metrics)
        width = max(8, *(len(c) for c in cols))
        head = "  ".join(c.rjust(width) for c in cols)
        row = "  ".join(f"{self.metrics[c]:.3f}".rjust(width) for c in cols)
        return f"{head}\n{row}\n"


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.ravel().tolist()) / x.size


def _as_pixels(d):
    if isinstance(d, DisparityMap):
        d = disparity_unit_convert(d, "pixels")
        return np.where(d.mask, d.values, np.nan)
    return np.asarray(d, dtype=np.float64)


def _eval_mask(mask, *arrays):
    m = np.ones(arrays[0].shape[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
    for a in arrays:
        m &= np.all(np.isfinite(a), axis=-1) if a.ndim == 3 else np.isfinite(a)
    if not m.any():
        raise EmptyEvaluationError("no pixels left to evaluate")
    return m


def disparity_metrics(pred, gt, mask=None) -> EvalReport:
    """MAE, RMSE, BP-1, BP-2 and D1 in pixels over ``mask`` and the finite pixels of both maps."""
    p, g = _as_pixels(pred), _as_pixels(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    m = _eval_mask(mask, p, g)
    e = np.abs(p[m] - g[m])
    n = e.size
    metrics = {
        "MAE": _mean(e),
        "RMSE": math.sqrt(_mean(e * e)),
        "BP-1": 100.0 * np.count_nonzero(e >= 1.0) / n,
        "BP-2": 100.0 * np.count_nonzero(e >= 2.0) / n,
        "D1": 100.0 * np.count_nonzero((e >= 3.0) & (e >= 0.05 * np.abs(g[m]))) / n,
    }
    return EvalReport(metrics, n, {"units": "pixels", "masked": mask is not None})


def normal_metrics(pred: NormalMap, gt: NormalMap, mask=None) -> EvalReport:
    ang = np.degrees(angular_error(pred, gt))
    m = _eval_mask(mask, ang)
    a = ang[m]
    n = a.size
    metrics = {"mean": _mean(a), "rmse": math.sqrt(_mean(a * a))}
    for t in NORMAL_THRESHOLDS_DEG:
        metrics[f"delta<{t:g}"] = 100.0 * np.count_nonzero(a < t) / n
    return EvalReport(metrics, n, {"units": "degrees", "frame": pred.frame, "masked": mask is not None})


def loss_normal(pred: NormalMap, gt: NormalMap, mask=None) -> float:
    """Mean squared angle (radians^2) between predicted and reference normals."""
    ang = angular_error(pred, gt)
    m = _eval_mask(mask, ang)
    return _mean(ang[m] ** 2)


def smooth_l1(x, beta: float = 1.0) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < beta, 0.5 * ax * ax / beta, ax - 0.5 * beta)


def _check_same(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"lattice mismatch: {sorted(shapes)}")


def loss_disparity(d0, iterates, gt, gamma: float = 0.9, mask=None, beta: float = 1.0) -> float:
    """Smooth-L1 on the initial prediction plus gamma-weighted L1 on each refinement."""
    d0 = _as_pixels(d0)
    its = [_as_pixels(d) for d in iterates]
    g = _as_pixels(gt)
    _check_same(d0, g, *its)
    m = _eval_mask(mask, d0, g, *its)
    K = len(its)
    total = _mean(smooth_l1(d0[m] - g[m], beta))
    for k, d in enumerate(its, start=1):
        total += gamma ** (K - k) * _mean(np.abs(d[m] - g[m]))
    return total


def loss_nll(iterates, sigmas, gt, gamma: float = 0.9, mask=None) -> float:
    """Laplacian negative log-likelihood summed over refinements with gamma weights."""
    its = [_as_pixels(d) for d in iterates]
    sig = [np.broadcast_to(np.asarray(s, dtype=np.float64), its[0].shape) for s in sigmas]
    g = _as_pixels(gt)
    if len(its) != len(sig):
        raise ValueError(f"{len(its)} iterates but {len(sig)} sigma maps")
    _check_same(g, *its, *sig)
    m = _eval_mask(mask, g, *its, *sig)
    if any(np.any(s[m] <= 0) for s in sig):
        raise ValueError("sigma must be positive")
    K = len(its)
    total = 0.0
    for k, (d, s) in enumerate(zip(its, sig), start=1):
        total += gamma ** (K - k) * _mean(np.abs(d[m] - g[m]) / s[m] + np.log(s[m]))
    return total

