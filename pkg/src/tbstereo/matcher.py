"""Census / semi-global matcher for vertically rectified top-bottom ERP pairs.

The bottom image is the reference.  Candidate disparity ``d`` (pixels) pairs
bottom pixel ``(u, v)`` with top pixel ``(u, v + d)``: the top camera sees
every point lower on the sphere.  Longitude wraps everywhere (census windows,
horizontal and diagonal aggregation paths); rows never wrap across the poles.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .disparity import DisparityMap

# uncertainty mapping: sigma = SIGMA_MIN + SIGMA_SCALE / (margin_per_path + SIGMA_EPS)
SIGMA_MIN = 0.1
SIGMA_SCALE = 4.0
SIGMA_EPS = 1.0

MAX_LAPS = 64


class MatcherConfigError(ValueError):
    pass


@dataclass
class MatcherParams:
    max_disparity: int = 64
    census_window: tuple = (9, 7)  # (width, height)
    p1: float = 10
    p2: float = 120
    paths: int = 8
    uniqueness: float = 0.95
    lr_threshold: float = 1.0

    def __post_init__(self):
        self.census_window = tuple(int(x) for x in self.census_window)
        w, h = self.census_window
        if w % 2 == 0 or h % 2 == 0 or w < 1 or h < 1:
            raise MatcherConfigError(f"census window must be odd, got {self.census_window}")
        if w * h - 1 > 64:
            raise MatcherConfigError(f"census window {w}x{h} needs {w * h - 1} bits, max 64")
        if self.max_disparity < 1:
            raise MatcherConfigError("max_disparity must be >= 1")
        if not 0 <= self.p1 <= self.p2:
            raise MatcherConfigError(f"need 0 <= P1 <= P2, got {self.p1}, {self.p2}")
        if self.paths not in (4, 8):
            raise MatcherConfigError(f"paths must be 4 or 8, got {self.paths}")
        if not 0 < self.uniqueness <= 1:
            raise MatcherConfigError(f"uniqueness must be in (0, 1], got {self.uniqueness}")
        if self.lr_threshold < 0:
            raise MatcherConfigError("lr_threshold must be nonnegative")

    @property
    def census_bits(self) -> int:
        w, h = self.census_window
        return w * h - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["census_window"] = list(self.census_window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MatcherParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise MatcherConfigError(f"unknown matcher params: {sorted(unknown)}")
        return cls(**d)


def to_gray(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def census_transform(gray, window=(9, 7)) -> np.ndarray:
    """Bit k set when the k-th window neighbour (row-major, center skipped) is darker than the center."""
    w, h = window
    if w % 2 == 0 or h % 2 == 0:
        raise MatcherConfigError(f"census window must be odd, got {window}")
    if w * h - 1 > 64:
        raise MatcherConfigError(f"census window {w}x{h} does not fit in 64 bits")
    g = np.asarray(gray, dtype=np.float64)
    H = g.shape[0]
    rows = np.arange(H)
    out = np.zeros(g.shape, dtype=np.uint64)
    bit = 0
    for dy in range(-(h // 2), h // 2 + 1):
        shifted_rows = g[np.clip(rows + dy, 0, H - 1)]
        for dx in range(-(w // 2), w // 2 + 1):
            if dx == 0 and dy == 0:
                continue
            nb = np.roll(shifted_rows, -dx, axis=1)
            out |= (nb < g).astype(np.uint64) << np.uint64(bit)
            bit += 1
    return out


def build_cost_volume(ref_census, other_census, params: MatcherParams, reference: str = "bottom") -> np.ndarray:
    """Hamming cost volume (H, W, D+1); lower is better.

    With ``reference="bottom"`` cost[v, u, d] compares bottom (u, v) with top
    (u, v + d); with ``reference="top"`` it compares top (u, v) with bottom
    (u, v - d).  Lookups past the poles cost ``census_bits``.
    """
    a = np.asarray(ref_census, dtype=np.uint64)
    b = np.asarray(other_census, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError(f"lattice mismatch: {a.shape} vs {b.shape}")
    H, W = a.shape
    D = params.max_disparity
    if D >= H:
        raise MatcherConfigError(f"max_disparity {D} must be < image height {H}")
    vol = np.full((H, W, D + 1), params.census_bits, dtype=np.int32)
    for d in range(D + 1):
        if reference == "bottom":
            vol[: H - d, :, d] = np.bitwise_count(a[: H - d] ^ b[d:])
        else:
            vol[d:, :, d] = np.bitwise_count(a[d:] ^ b[: H - d])
    return vol


def _penalties(params):
    integral = float(params.p1).is_integer() and float(params.p2).is_integer()
    dtype = np.int64 if integral else np.float64
    return dtype(params.p1), dtype(params.p2), dtype


def _step(cost, prev, p1, p2):
    """One DP step along a path; ``prev`` is the (renormalized) state of the previous pixel."""
    m = prev.min(axis=-1, keepdims=True)
    best = prev.copy()
    np.minimum(best[..., 1:], prev[..., :-1] + p1, out=best[..., 1:])
    np.minimum(best[..., :-1], prev[..., 1:] + p1, out=best[..., :-1])
    np.minimum(best, m + p2, out=best)
    best -= m
    best += cost
    return best


def _vertical_path(vol, du, dv, p1, p2, dtype):
    H = vol.shape[0]
    out = np.empty(vol.shape, dtype=dtype)
    order = range(H) if dv > 0 else range(H - 1, -1, -1)
    prev = None
    for v in order:
        c = vol[v].astype(dtype)
        if prev is None:
            cur = c
        else:
            cur = _step(c, np.roll(prev, du, axis=0) if du else prev, p1, p2)
        out[v] = cur
        prev = cur
    return out


def _circular_path(vol, p1, p2, dtype):
    """Left-to-right path around the longitude cycle.

    Every row's DP is iterated lap after lap until the state at column 0
    repeats, so the result is the cycle's fixed point and does not depend on
    where the seam is.
    """
    H, W, _ = vol.shape
    state = vol[:, 0].astype(dtype)
    active = np.arange(H)
    for _ in range(MAX_LAPS):
        if active.size == 0:
            break
        s = state[active]
        start = s.copy()
        sub = vol[active]
        for u in list(range(1, W)) + [0]:
            s = _step(sub[:, u], s, p1, p2)
        state[active] = s
        done = np.all(s == start, axis=-1)
        active = active[~done]
    out = np.empty(vol.shape, dtype=dtype)
    s = state
    out[:, 0] = s
    for u in range(1, W):
        s = _step(vol[:, u], s, p1, p2)
        out[:, u] = s
    return out


def _path_cost(vol, direction, p1, p2, dtype):
    du, dv = direction
    if dv == 0:
        if du > 0:
            return _circular_path(vol, p1, p2, dtype)
        return _circular_path(vol[:, ::-1], p1, p2, dtype)[:, ::-1]
    return _vertical_path(vol, du, dv, p1, p2, dtype)


def path_directions(paths: int):
    four = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    return four if paths == 4 else four + [(1, 1), (-1, 1), (1, -1), (-1, -1)]


def sgm_aggregate(vol, params: MatcherParams, threads: int = 1) -> np.ndarray:
    """Sum of per-direction path costs with penalties P1 (|dd| = 1) and P2 (|dd| > 1)."""
    vol = np.asarray(vol)
    p1, p2, dtype = _penalties(params)
    if vol.dtype.kind == "f":
        dtype = np.float64
        p1, p2 = np.float64(params.p1), np.float64(params.p2)
    dirs = path_directions(params.paths)
    total = np.zeros(vol.shape, dtype=dtype)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda d: _path_cost(vol, d, p1, p2, dtype), dirs))
        for part in parts:  # fixed summation order
            total += part
    else:
        for d in dirs:
            total += _path_cost(vol, d, p1, p2, dtype)
    return total


def extract_disparity(vol, params: MatcherParams):
    """Winner-take-all with parabola refinement, uniqueness test and a margin-based sigma.

    Returns ``(DisparityMap in pixels with NaN for rejected pixels, sigma)``.
    A pixel is rejected when the best cost is not clearly below the best cost
    outside ``best +- 1`` (ratio above ``uniqueness``) or when the winner is
    ``max_disparity`` itself.  ``sigma = exp(u)`` with
    ``u = log(SIGMA_MIN + SIGMA_SCALE / (margin / paths + SIGMA_EPS))``.
    """
    c = np.asarray(vol, dtype=np.float64)
    D1 = c.shape[-1]
    best = np.argmin(c, axis=-1)
    c1 = np.take_along_axis(c, best[..., None], -1)[..., 0]
    far = np.abs(np.arange(D1) - best[..., None]) > 1
    c2 = np.where(far, c, np.inf).min(axis=-1)

    unique = (c2 > c1) & ~(c1 > params.uniqueness * c2)
    valid = unique & (best < D1 - 1)

    lo = np.take_along_axis(c, np.clip(best - 1, 0, D1 - 1)[..., None], -1)[..., 0]
    hi = np.take_along_axis(c, np.clip(best + 1, 0, D1 - 1)[..., None], -1)[..., 0]
    denom = lo - 2.0 * c1 + hi
    interior = (best > 0) & (best < D1 - 1) & (denom > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(interior, (lo - hi) / (2.0 * denom), 0.0)
    disp = best + offset

    margin = (c2 - c1) / params.paths
    with np.errstate(divide="ignore"):
        sigma = SIGMA_MIN + SIGMA_SCALE / (np.maximum(margin, 0.0) + SIGMA_EPS)
    return DisparityMap(np.where(valid, disp, np.nan), "pixels"), sigma


def lr_consistency(disp_ref, disp_other, threshold: float, sign: int = 1) -> np.ndarray:
    """Keep reference pixels whose match points back within ``threshold`` pixels.

    For the default bottom reference the partner of (u, v) is top pixel
    (u, v + round(d)); pass ``sign=-1`` when the top image is the reference.
    """
    a = np.asarray(getattr(disp_ref, "values", disp_ref), dtype=np.float64)
    b = np.asarray(getattr(disp_other, "values", disp_other), dtype=np.float64)
    H, W = a.shape
    finite = np.isfinite(a)
    vv = np.arange(H)[:, None] + sign * np.round(np.where(finite, a, 0)).astype(np.int64)
    inside = finite & (vv >= 0) & (vv < H)
    partner = b[np.clip(vv, 0, H - 1), np.arange(W)[None, :]]
    if np.isinf(threshold):
        return inside
    with np.errstate(invalid="ignore"):
        close = np.abs(a - partner) <= threshold
    return inside & close


@dataclass
class MatchResult:
    disparity: DisparityMap  # pixels, NaN where invalid
    sigma: np.ndarray
    valid: np.ndarray
    reference: str = "bottom"


def match_pair(bottom_rgb, top_rgb, params: MatcherParams | None = None, reference: str = "bottom",
               threads: int = 1) -> MatchResult:
    """Full pipeline: gray -> census -> both cost volumes -> SGM -> WTA -> left-right check."""
    params = params or MatcherParams()
    bottom_rgb = np.asarray(bottom_rgb)
    top_rgb = np.asarray(top_rgb)
    if bottom_rgb.shape != top_rgb.shape:
        raise ValueError(f"image size mismatch: {bottom_rgb.shape} vs {top_rgb.shape}")
    cb = census_transform(to_gray(bottom_rgb), params.census_window)
    ct = census_transform(to_gray(top_rgb), params.census_window)

    ref, other = (cb, ct) if reference == "bottom" else (ct, cb)
    other_name = "top" if reference == "bottom" else "bottom"
    sign = 1 if reference == "bottom" else -1

    disp, sigma = extract_disparity(sgm_aggregate(build_cost_volume(ref, other, params, reference), params, threads), params)
    disp_o, _ = extract_disparity(sgm_aggregate(build_cost_volume(other, ref, params, other_name), params, threads), params)
    valid = disp.mask & lr_consistency(disp, disp_o, params.lr_threshold, sign)
    values = np.where(valid, disp.values, np.nan)
    return MatchResult(DisparityMap(values, "pixels"), sigma, valid, reference)
