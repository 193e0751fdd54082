"""
The planar construction: horizontal slices of the unit ball.

For ``t`` in ``[0, h]`` the line ``y = t`` meets ``B`` in a segment of
length ``lambda(t)``.  Picking heights where ``lambda`` hits ``i w / (m+1)``
gives boundary points ``p_i`` whose translates ``p_i + i v`` are again on
the boundary, with ``v = w e_1 / (m+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BisectionFailure, NotStrictlyConvex, OutOfRange
from .norms import NormOracle, require_strictly_convex, rotated

MONOTONE_SLACK = 1e-10


@dataclass(frozen=True)
class ChordProfile:
    """Slice-length function of a planar unit ball."""

    norm: NormOracle
    height: float       # sup of y over B
    width: float        # lambda(0)
    center_slope: float  # slice minimiser of the gauge sits at x = center_slope * t

    def eval(self, t):
        return chord_length(self.norm, t, profile=self)


def _check_2d(norm: NormOracle):
    if norm.dim != 2:
        raise ValueError(f"planar construction needs d = 2, got d = {norm.dim}")


def chord_profile(norm: NormOracle) -> ChordProfile:
    _check_2d(norm)
    g = norm.gauge
    g1 = float(g(np.array([1.0, 0.0])))
    g2 = float(g(np.array([0.0, 1.0])))
    # gauge((s, 1)) >= |s| g(e1) - g(e2), so its minimiser has |s| <= 2 g(e2) / g(e1)
    R = 2.0 * g2 / g1 + 1e-12
    res = minimize_scalar(lambda s: float(g(np.array([s, 1.0]))), bounds=(-R, R),
                          method="bounded", options={"xatol": 1e-13})
    s_star, gmin = float(res.x), float(res.fun)
    if g2 <= gmin:
        s_star, gmin = 0.0, g2
    return ChordProfile(norm=norm, height=1.0 / gmin, width=2.0 / g1, center_slope=s_star)


def _slice_endpoints(norm: NormOracle, t: np.ndarray, center: np.ndarray):
    """Left/right ends of ``{x : gauge(x, t) <= 1}`` by vectorised bisection."""
    def inside(x):
        return norm.gauge(np.stack([x, t], axis=-1)) <= 1.0

    ends = []
    for sign in (-1.0, 1.0):
        lo = center.copy()
        step = np.full_like(t, 0.25)
        hi = center + sign * step
        for _ in range(200):
            grow = inside(hi)
            if not grow.any():
                break
            lo = np.where(grow, hi, lo)
            step = np.where(grow, 2.0 * step, step)
            hi = np.where(grow, center + sign * step, hi)
        else:
            raise BisectionFailure("slice appears unbounded")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            active = (mid != lo) & (mid != hi)
            if not active.any():
                break
            ins = inside(mid)
            lo = np.where(active & ins, mid, lo)
            hi = np.where(active & ~ins, mid, hi)
        ends.append(lo)
    return ends[0], ends[1]


def chord_length(norm: NormOracle, t, profile: Optional[ChordProfile] = None):
    """Length of the slice of ``B`` at height ``t`` (scalar or array)."""
    prof = profile or chord_profile(norm)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0) or np.any(tt > prof.height * (1 + 1e-12)):
        raise OutOfRange(f"height must lie in [0, {prof.height:.17g}]")
    center = prof.center_slope * tt
    # the slice at the top height is the single top point; below it the
    # length behaves like sqrt(h - t) and cannot resolve that limit in floats
    empty = (norm.gauge(np.stack([center, tt], axis=-1)) > 1.0) | (tt >= prof.height)
    out = np.zeros_like(tt)
    ok = ~empty
    if ok.any():
        left, right = _slice_endpoints(norm, tt[ok], center[ok])
        out[ok] = right - left
    return float(out[0]) if np.ndim(t) == 0 else out


def _bisect_heights(norm, prof, targets, lo, hi):
    """Solve ``lambda(t) = target`` on brackets where lambda(lo) >= target >= lambda(hi)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (mid != lo) & (mid != hi)
        if not active.any():
            break
        above = chord_length(norm, mid, profile=prof) >= targets
        lo = np.where(active & above, mid, lo)
        hi = np.where(active & ~above, mid, hi)
    return 0.5 * (lo + hi)


def find_heights(norm: NormOracle, m: int, profile: Optional[ChordProfile] = None,
                 scan_points: int = 257) -> np.ndarray:
    """Heights ``t_1 > ... > t_m`` with ``lambda(t_i) = i w / (m + 1)``."""
    if m < 1:
        raise ValueError("m must be positive")
    require_strictly_convex(norm)
    prof = profile or chord_profile(norm)
    h, w = prof.height, prof.width
    targets = w * np.arange(1, m + 1) / (m + 1)

    grid = np.linspace(0.0, h, scan_points)
    lam = chord_length(norm, grid, profile=prof)
    if np.all(np.diff(lam) <= MONOTONE_SLACK):
        t = _bisect_heights(norm, prof, targets, np.zeros(m), np.full(m, h))
    else:
        # scan-then-bisect: first grid cell where lambda drops through each target
        lo, hi = np.empty(m), np.empty(m)
        for i, target in enumerate(targets):
            cells = np.flatnonzero((lam[:-1] >= target) & (lam[1:] < target))
            if cells.size == 0:
                raise BisectionFailure(f"no slice of length {target:.6g} found")
            lo[i], hi[i] = grid[cells[0]], grid[cells[0] + 1]
        t = _bisect_heights(norm, prof, targets, lo, hi)

    err = np.abs(chord_length(norm, t, profile=prof) - targets)
    if err.max() > 1e-10 and np.any(h - t[err > 1e-10] <= 1e-12 * h):
        raise NotStrictlyConvex("slice length jumps at the top: horizontal boundary segment")
    if err.max() > 1e-10 or np.any(np.diff(t) >= 0):
        raise BisectionFailure(f"height search failed (max error {err.max():.2e})")
    return t


@dataclass(frozen=True)
class Generators2D:
    points: np.ndarray   # p_1..p_m, shape (m, 2)
    v: np.ndarray
    heights: np.ndarray
    width: float

    @property
    def partners(self) -> np.ndarray:
        """``q_i = p_i + i v``, the right slice endpoints."""
        i = np.arange(1, len(self.points) + 1)[:, None]
        return self.points + i * self.v


def build_2d_generators(norm: NormOracle, m: int, angle: float = 0.0) -> Generators2D:
    """``p_1..p_m`` (left slice endpoints) and the step ``v``.

    ``angle`` rotates the slicing direction, for oracles whose horizontal
    slices are degenerate.
    """
    _check_2d(norm)
    R = None
    work = norm
    if angle:
        c, s = math.cos(angle), math.sin(angle)
        R = np.array([[c, -s], [s, c]])
        work = rotated(norm, R)
    prof = chord_profile(work)
    t = find_heights(work, m, profile=prof)
    left, _ = _slice_endpoints(work, t, prof.center_slope * t)
    P = np.stack([left, t], axis=-1)
    v = np.array([prof.width / (m + 1), 0.0])
    if R is not None:
        P = P @ R.T
        v = R @ v
    return Generators2D(points=P, v=v, heights=t, width=prof.width)


def warmup_gapspec(norm: NormOracle, m: int, angle: float = 0.0):
    """GAP with generators ``(p_1..p_m, v)`` and ranges ``(2,..,2, m^2)``.

    Unit directions are ``p_j`` and ``p_j + j v``.
    """
    from .construct import GapSpec, realize_directions

    gens = build_2d_generators(norm, m, angle)
    generators = np.vstack([gens.points, gens.v[None, :]])
    ranges = [2] * m + [m * m]
    codes = []
    for j in range(m):
        c = [0] * (m + 1)
        c[j] = 1
        codes.append(c)
    for j in range(m):
        c = [0] * (m + 1)
        c[j] = 1
        c[m] = j + 1
        codes.append(c)
    codes = np.array(codes, dtype=np.int64)
    spec = GapSpec(generators=generators, ranges=ranges, codes=codes,
                   directions=codes @ generators, m=m, d=2,
                   provenance={"construction": "warmup", "norm": norm.name,
                               "heights": gens.heights.tolist(), "angle": angle})
    realize_directions(norm, spec)
    return spec
