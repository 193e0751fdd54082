"""
Point sets spanned by generalized arithmetic progressions, and unit-distance
counting on them.

Lookups go through a hash of integer grid cells: a point ``x`` lives in cell
``floor(x / cell)``, the cell keys are mixed into one ``uint64`` and sorted, and a
query probes the cell of ``y`` plus those neighbouring cells that the query ball
actually reaches.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .constants import EPS_UNIT, TAU
from .errors import Overflow, TooLarge

MATERIALIZE_CAP = 2 ** 24
PAIRWISE_CAP = 2 * 10 ** 4
NEAR_FACTOR = 10
# cells wider than the probe radius keep most lookups to a single cell
CELL_FACTOR = 256

_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


def _mix(h):
    h = h ^ (h >> np.uint64(30))
    h = h * _M2
    h = h ^ (h >> np.uint64(27))
    h = h * _M3
    return h ^ (h >> np.uint64(31))


_COLUMN_MULTIPLIERS = np.array([0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9,
                                0xD6E8FEB86659FD93, 0xFF51AFD7ED558CCD, 0xC4CEB9FE1A85EC53],
                               dtype=np.uint64)


def hash_cells(keys: np.ndarray) -> np.ndarray:
    """One ``uint64`` per row of integer cell keys."""
    keys = np.asarray(keys, dtype=np.int64)
    h = np.zeros(keys.shape[0], dtype=np.uint64)
    for i, col in enumerate(keys.T):
        h += col.view(np.uint64) * _COLUMN_MULTIPLIERS[i % len(_COLUMN_MULTIPLIERS)]
        if i % len(_COLUMN_MULTIPLIERS) == len(_COLUMN_MULTIPLIERS) - 1:
            h = _mix(h)
    return _mix(h)


def _expand_runs(qidx, lo, hi):
    counts = hi - lo
    keep = counts > 0
    qidx, lo, counts = qidx[keep], lo[keep], counts[keep]
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
    return np.repeat(qidx, counts), starts + np.arange(total)


class GridIndex:
    """Hash index over fixed points; read-only after construction.

    Distinct cell hashes live in an open-addressing table (linear probing);
    each slot points at the run of ``order`` holding that cell's points.
    """

    def __init__(self, points: np.ndarray, cell: float):
        self.points = np.asarray(points, dtype=float)
        self.cell = float(cell)
        h = hash_cells(np.floor(self.points / self.cell))
        self.order = np.argsort(h, kind="stable")
        self.hashes, self.starts, self.counts = np.unique(
            h[self.order], return_index=True, return_counts=True)
        size = 1 << max(4, int(2 * len(self.hashes)).bit_length())
        self.mask = np.uint64(size - 1)
        self.slots = np.full(size, -1, dtype=np.int64)
        pending = np.arange(len(self.hashes))
        pos = (self.hashes & self.mask).astype(np.int64)
        while pending.size:
            free = self.slots[pos] < 0
            # one winner per free slot; everyone else moves one slot on
            cand = pending[free]
            _, first = np.unique(pos[free], return_index=True)
            won = cand[first]
            self.slots[pos[free][first]] = won
            placed = np.zeros(len(self.hashes), dtype=bool)
            placed[won] = True
            keep = ~placed[pending]
            pending = pending[keep]
            pos = (pos[keep] + 1) & int(self.mask)

    def lookup(self, h: np.ndarray) -> np.ndarray:
        """Index into ``hashes`` for each query hash, or -1."""
        out = np.full(len(h), -1, dtype=np.int64)
        todo = np.arange(len(h))
        pos = (h & self.mask).astype(np.int64)
        while todo.size:
            s = self.slots[pos]
            empty = s < 0
            hit = ~empty
            hit[hit] = self.hashes[s[hit]] == h[todo[hit]]
            out[todo[hit]] = s[hit]
            more = ~(empty | hit)
            todo = todo[more]
            pos = (pos[more] + 1) & int(self.mask)
        return out

    def _runs(self, h):
        """Slices of ``order`` holding each hash; empty where absent."""
        idx = self.lookup(h)
        found = idx >= 0
        lo = np.where(found, self.starts[np.maximum(idx, 0)], 0)
        return lo, lo + np.where(found, self.counts[np.maximum(idx, 0)], 0)

    def candidates(self, Q: np.ndarray, radius: float):
        """Pairs ``(query row, stored row)`` whose cells could hold a point within ``radius``.

        Hash collisions only add spurious candidates; callers filter by distance.
        """
        if radius > self.cell:
            raise ValueError("probe radius must not exceed the cell size")
        Q = np.asarray(Q, dtype=float)
        if len(self.points) == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        scaled = Q / self.cell
        base = np.floor(scaled)
        frac = scaled - base
        r = radius / self.cell
        low, high = frac < r, frac > 1.0 - r
        base = base.astype(np.int64)
        d = Q.shape[1]
        qs, ps = [], []
        rows = np.arange(len(Q))
        lo, hi = self._runs(hash_cells(base))
        qi, pos = _expand_runs(rows, lo, hi)
        qs.append(qi)
        ps.append(self.order[pos])
        # only queries near a cell face need the neighbouring cells
        edge = np.flatnonzero(np.any(low | high, axis=1))
        if edge.size:
            low, high, eb = low[edge], high[edge], base[edge]
            for off in itertools.product((0, -1, 1), repeat=d):
                if not any(off):
                    continue
                need = np.ones(len(edge), dtype=bool)
                for i, o in enumerate(off):
                    if o == -1:
                        need &= low[:, i]
                    elif o == 1:
                        need &= high[:, i]
                sel = np.flatnonzero(need)
                if sel.size == 0:
                    continue
                lo, hi = self._runs(hash_cells(eb[sel] + np.array(off, dtype=np.int64)))
                qi, pos = _expand_runs(edge[sel], lo, hi)
                qs.append(qi)
                ps.append(self.order[pos])
        return np.concatenate(qs), np.concatenate(ps)

    def within(self, Q: np.ndarray, radius: float):
        """Candidate pairs filtered to Euclidean distance <= radius, with distances."""
        qi, pj = self.candidates(Q, radius)
        diff = np.asarray(Q, dtype=float)[qi] - self.points[pj]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = dist <= radius
        return qi[keep], pj[keep], dist[keep]

    def contains(self, Q: np.ndarray, radius: float) -> np.ndarray:
        qi, _, _ = self.within(Q, radius)
        hit = np.zeros(len(Q), dtype=bool)
        hit[qi] = True
        return hit


@dataclass
class PointSet:
    points: np.ndarray
    tau: float = TAU
    origin_spec: Optional[object] = None
    merged: int = 0        # input points absorbed into another representative
    near_merges: int = 0   # input pairs at distance in (tau, 10 tau]
    _index: Optional[GridIndex] = field(default=None, repr=False)

    @classmethod
    def from_points(cls, points, tau: float = TAU, origin_spec=None) -> "PointSet":
        """Deduplicate: points joined by a chain of tau-close pairs collapse to the first."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(P)
        if n == 0:
            return cls(points=P, tau=tau, origin_spec=origin_spec)
        wide = GridIndex(P, CELL_FACTOR * NEAR_FACTOR * tau)
        qi, pj, dist = wide.within(P, NEAR_FACTOR * tau)
        pair = qi < pj
        qi, pj, dist = qi[pair], pj[pair], dist[pair]
        close = dist <= tau
        near = int(np.count_nonzero(~close))
        if close.any():
            g = coo_matrix((np.ones(int(close.sum())), (qi[close], pj[close])), shape=(n, n))
            _, labels = connected_components(g, directed=False)
            rep = np.full(labels.max() + 1, n)
            np.minimum.at(rep, labels, np.arange(n))
            keep = np.sort(rep)
        else:
            keep = np.arange(n)
        return cls(points=P[keep], tau=tau, origin_spec=origin_spec,
                   merged=n - len(keep), near_merges=near)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def index(self) -> GridIndex:
        if self._index is None:
            self._index = GridIndex(self.points, CELL_FACTOR * self.tau)
        return self._index

    def contains(self, Q) -> np.ndarray:
        return self.index.contains(np.atleast_2d(np.asarray(Q, dtype=float)), self.tau)

    def diameter_bound(self) -> float:
        """Diagonal of the bounding box (an upper bound on the diameter)."""
        if len(self) == 0:
            return 0.0
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(self.dim)])
        for row in self.points:
            w.writerow([float(v).hex() for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, tau: float = TAU) -> "PointSet":
        rows = list(csv.reader(io.StringIO(text)))
        pts = [[float.fromhex(v) for v in r] for r in rows[1:] if r]
        return cls.from_points(np.array(pts, dtype=float).reshape(len(pts), len(rows[0])), tau)

    def to_json(self) -> dict:
        return {"schema": "udf/1", "type": "PointSet", "tau": self.tau,
                "size": len(self), "merged": self.merged, "near_merges": self.near_merges,
                "points": [[float(v).hex() for v in row] for row in self.points]}


def materialize(spec, cap: int = MATERIALIZE_CAP, tau: float = TAU) -> PointSet:
    """All sums ``a . generators`` with ``0 <= a_i < k_i``, deduplicated."""
    if any(k < 1 for k in spec.ranges):
        raise ValueError("ranges must be positive")
    if spec.tuple_count > cap:
        raise Overflow(f"{spec.tuple_count} lattice tuples exceed the cap {cap}")
    pts = np.zeros((1, spec.generators.shape[1]))
    for v, k in zip(spec.generators, spec.ranges):
        steps = np.arange(k, dtype=float)[:, None] * v[None, :]
        pts = (pts[:, None, :] + steps[None, :, :]).reshape(-1, pts.shape[1])
    return PointSet.from_points(pts, tau=tau, origin_spec=spec)


def grid_bound(spec, set_size: int) -> Fraction:
    """``set_size * sum_c prod_i (1 - c_i / k_i)`` exactly."""
    total = Fraction(0)
    for c in spec.codes:
        term = Fraction(1)
        for ci, k in zip(c, spec.ranges):
            term *= 1 - Fraction(abs(int(ci)), k)
            if term <= 0:
                term = Fraction(0)
                break
        total += term
    return set_size * total


def proposition_bound(spec, set_size: int) -> Fraction:
    return Fraction(spec.d * (spec.m - 2) * set_size, 2)


@dataclass
class UnitDistanceReport:
    directions: np.ndarray
    per_direction: list
    size: int
    lemma_bound: Optional[Fraction] = None
    prop_bound: Optional[Fraction] = None
    pairwise_total: Optional[int] = None
    near_merges: int = 0
    parts: Optional[list] = None        # per-block summary for composed sets
    table_bound: Optional[int] = None   # sum of tabulated block counts

    @property
    def total(self) -> int:
        return int(sum(self.per_direction))

    @property
    def meets_lemma(self) -> Optional[bool]:
        if self.lemma_bound is None:
            return None
        return self.total >= math.ceil(self.lemma_bound)

    def to_json(self) -> dict:
        def frac(x):
            return None if x is None else {"num": x.numerator, "den": x.denominator,
                                           "value": float(x)}
        return {
            "schema": "udf/1",
            "type": "UnitDistanceReport",
            "size": self.size,
            "total": self.total,
            "per_direction": [{"direction": [float(v) for v in u], "count": int(c)}
                              for u, c in zip(self.directions, self.per_direction)],
            "lemma_bound": frac(self.lemma_bound),
            "prop_bound": frac(self.prop_bound),
            "pairwise_total": self.pairwise_total,
            "near_merges": self.near_merges,
            "parts": self.parts,
            "table_bound": self.table_bound,
        }


def count_directional(ps: PointSet, directions=None, workers: int = 1) -> UnitDistanceReport:
    """For each ``u``, the number of ``x`` in the set with ``x + u`` also in it.

    Defaults to the origin spec's certified directions.  Results do not
    depend on ``workers``.
    """
    spec = ps.origin_spec
    if directions is None:
        if spec is None:
            raise ValueError("directions are required for a point set without a spec")
        directions = spec.directions
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    index = ps.index   # built once, then shared read-only

    def one(u):
        return int(np.count_nonzero(index.contains(ps.points + u, ps.tau)))

    if workers > 1 and len(U) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(one, U))
    else:
        counts = [one(u) for u in U]
    rep = UnitDistanceReport(directions=U, per_direction=counts, size=len(ps),
                             near_merges=ps.near_merges)
    if spec is not None and np.array_equal(U, spec.directions):
        rep.lemma_bound = grid_bound(spec, len(ps))
        if spec.m:
            rep.prop_bound = proposition_bound(spec, len(ps))
    return rep


def _pair_block(norm, D, eps_unit):
    g = norm.gauge(D)
    return int(np.count_nonzero(np.abs(g - 1.0) <= eps_unit))


def count_pairwise(ps, norm, eps_unit: float = EPS_UNIT, cap: int = PAIRWISE_CAP,
                   block_elems: int = 1 << 22) -> int:
    """Unordered pairs at gauge distance within ``eps_unit`` of 1, by brute force.

    When the oracle carries Euclidean bounds for its unit sphere, pairs whose
    Euclidean distance falls outside them are skipped without evaluating the gauge.
    """
    P = ps.points if isinstance(ps, PointSet) else np.atleast_2d(np.asarray(ps, dtype=float))
    n = len(P)
    if n > cap:
        raise TooLarge(f"{n} points exceed the pairwise cap {cap}")
    shell = None
    if norm.euclid_bounds is not None:
        lo, hi = norm.euclid_bounds
        # a unit-gauge slack of eps_unit scales Euclidean length by at most that much
        shell = ((lo * (1 - 2 * eps_unit) * (1 - 1e-12)) ** 2,
                 (hi * (1 + 2 * eps_unit) * (1 + 1e-12)) ** 2)
    total = 0
    rows = max(1, block_elems // max(n, 1))
    for i0 in range(0, n, rows):
        i1 = min(n, i0 + rows)
        D = P[i0:i1, None, :] - P[None, i0:, :]
        # keep j > i only
        ii = np.arange(i0, i1)[:, None]
        jj = np.arange(i0, n)[None, :]
        mask = jj > ii
        if shell is not None:
            r2 = np.einsum("ijk,ijk->ij", D, D)
            mask &= (r2 >= shell[0]) & (r2 <= shell[1])
        total += _pair_block(norm, D[mask], eps_unit)
    return total


def ap_sumset_size(X, x, length: int) -> int:
    """``|X + {0, 1, .., length-1} x|`` for integer vectors, exactly."""
    x = tuple(int(v) for v in x)
    out = set()
    for p in X:
        p = tuple(int(v) for v in p)
        for a in range(length):
            out.add(tuple(pi + a * xi for pi, xi in zip(p, x)))
    return len(out)


def sumset_ratio_check(X, x, k: int, c: int) -> bool:
    """``|X + [0, k-c-1] x| >= (1 - c/k) |X + [0, k-1] x|`` by enumeration."""
    X = list(X)
    if not X:
        raise ValueError("X must be nonempty")
    if not (2 <= c <= k):
        raise ValueError(f"need 2 <= c <= k, got c = {c}, k = {k}")
    small = ap_sumset_size(X, x, k - c)
    big = ap_sumset_size(X, x, k)
    # compare k * small >= (k - c) * big in integers
    return k * small >= (k - c) * big


def report_json(report: UnitDistanceReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True)
