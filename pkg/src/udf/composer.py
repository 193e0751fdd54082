"""
Assembling ``n``-point sets from translated GAP blocks.

``S_m`` is the GAP of the general construction with parameter ``m``; its size
``s_m`` and certified directional count ``t_m`` go into a size table.  A target
``n`` is written greedily as ``s_{m_1} + s_{m_2} + ...`` and one translated copy
of each block is placed far from the others.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .constants import TAU
from .construct import GapSpec, proposition_spec
from .errors import NoSegment, OffsetExhausted, SegmentTooShort
from .gap import (PointSet, UnitDistanceReport, count_directional, count_pairwise,
                  materialize)
from .norms import (NormOracle, norm_digest, require_strictly_convex,
                    strict_convexity_probe)

OFFSET_RETRIES = 100
BOX_FACTOR = 100.0
GAP_FACTOR = 10.0
RATIO_DROP = 0.02


def _singleton_spec(d: int) -> GapSpec:
    return GapSpec.simple(np.zeros((1, d)), [1], m=0, d=d,
                          provenance={"construction": "singleton"})


@dataclass
class TableEntry:
    m: int
    size: int
    count: int
    seed: int = 0
    lam: Optional[float] = None
    t: Optional[list] = None

    def to_json(self) -> dict:
        return {"m": self.m, "s": self.size, "t_count": self.count, "seed": self.seed,
                "lambda": self.lam, "t": self.t}

    @classmethod
    def from_json(cls, obj) -> "TableEntry":
        return cls(m=obj["m"], size=obj["s"], count=obj["t_count"], seed=obj.get("seed", 0),
                   lam=obj.get("lambda"), t=obj.get("t"))


def cache_dir() -> Optional[Path]:
    p = os.environ.get("UDF_CACHE_DIR")
    return Path(p) if p else None


class SizeTable:
    """``(m, s_m, t_m)`` for one norm, grown on demand and optionally persisted."""

    def __init__(self, norm: Optional[NormOracle] = None, seed: int = 0,
                 entries=None, sizes=None):
        self.norm = norm
        self.seed = seed
        self.d = norm.dim if norm is not None else None
        self._blocks: dict = {}
        if sizes is not None:
            # bare table for decomposition only
            entries = [TableEntry(m=i, size=int(s), count=0) for i, s in enumerate(sizes)]
        self.entries: list = list(entries or [])
        if not self.entries:
            self.entries.append(TableEntry(m=0, size=1, count=0, seed=seed))
            if norm is not None:
                self._load()

    @property
    def sizes(self) -> list:
        return [e.size for e in self.entries]

    @property
    def counts(self) -> list:
        return [e.count for e in self.entries]

    def _path(self) -> Optional[Path]:
        root = cache_dir()
        if root is None or self.norm is None:
            return None
        return root / f"sizetable-{norm_digest(self.norm)[:16]}-d{self.d}-s{self.seed}.json"

    def _load(self):
        path = self._path()
        if path is None or not path.exists():
            return
        obj = json.loads(path.read_text())
        if obj.get("norm_id") == norm_digest(self.norm) and obj.get("d") == self.d:
            self.entries = [TableEntry.from_json(e) for e in obj["entries"]]

    def save(self):
        path = self._path()
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        tmp.replace(path)

    def to_json(self) -> dict:
        return {"schema": "udf/1", "type": "SizeTable",
                "norm_id": norm_digest(self.norm) if self.norm is not None else None,
                "norm": self.norm.name if self.norm is not None else None,
                "d": self.d, "entries": [e.to_json() for e in self.entries]}

    def block(self, m: int):
        """``(spec, point set)`` for ``S_m``, built once."""
        if m not in self._blocks:
            if m == 0:
                spec = _singleton_spec(self.d)
            else:
                spec = proposition_spec(self.norm, m, seed=self.seed)
            self._blocks[m] = (spec, materialize(spec))
        return self._blocks[m]

    def _add(self, m: int):
        spec, ps = self.block(m)
        rep = count_directional(ps)
        self.entries.append(TableEntry(m=m, size=len(ps), count=rep.total, seed=self.seed,
                                       lam=spec.provenance.get("lambda"),
                                       t=spec.provenance.get("t")))

    def extend_to(self, n: int) -> "SizeTable":
        """Grow until some ``s_m`` exceeds ``n``."""
        if self.norm is None:
            return self
        grew = False
        while self.entries[-1].size <= n:
            self._add(self.entries[-1].m + 1)
            grew = True
        if grew:
            self.save()
        return self


def decompose(n: int, table) -> list:
    """Greedy: largest ``m`` with ``s_m <= remaining``, repeated until nothing remains."""
    if n < 1:
        raise ValueError("n must be positive")
    sizes = table.sizes if isinstance(table, SizeTable) else list(table)
    if not sizes or sizes[0] != 1:
        raise ValueError("the table must start with s_0 = 1")
    out = []
    rest = n
    m = len(sizes) - 1
    while rest:
        while sizes[m] > rest:
            m -= 1
        out.append(m)
        rest -= sizes[m]
    return out


def _boxes_apart(lo_a, hi_a, lo_b, hi_b, gap) -> bool:
    return bool(np.any((lo_b - hi_a > gap) | (lo_a - hi_b > gap)))


def compose_pointset(norm: NormOracle, n: int, seed: int = 0,
                     table: Optional[SizeTable] = None, tau: float = TAU):
    """Union of translated blocks ``x_i + S_{m_i}`` with exactly ``n`` points.

    Only unit distances inside each block are counted.
    """
    require_strictly_convex(norm)
    table = table or SizeTable(norm, seed=seed)
    table.extend_to(n)
    parts = decompose(n, table)
    rng = np.random.default_rng(seed)
    d = norm.dim
    diam = max(table.block(parts[0])[1].diameter_bound(), 1.0)
    side = BOX_FACTOR * diam
    gap = GAP_FACTOR * tau

    placed = []   # (lo, hi) of each translated copy
    chunks, dirs, counts = [], [], []
    lemma, prop = Fraction(0), Fraction(0)
    info = []
    for m in parts:
        spec, block = table.block(m)
        lo0, hi0 = block.points.min(axis=0), block.points.max(axis=0)
        for _ in range(OFFSET_RETRIES):
            x = rng.uniform(0.0, side, size=d)
            lo, hi = lo0 + x, hi0 + x
            if all(_boxes_apart(lo, hi, a, b, gap) for a, b in placed):
                break
        else:
            raise OffsetExhausted(f"no free offset for block m = {m} after {OFFSET_RETRIES} draws")
        placed.append((lo, hi))
        moved = PointSet(points=block.points + x, tau=block.tau, origin_spec=spec)
        rep = count_directional(moved) if len(spec.directions) else None
        chunks.append(moved.points)
        if rep is not None:
            dirs.append(spec.directions)
            counts.extend(rep.per_direction)
            lemma += rep.lemma_bound
            if rep.prop_bound is not None:
                prop += rep.prop_bound
        info.append({"m": m, "size": len(block), "offset": x.tolist(),
                     "count": rep.total if rep is not None else 0})

    ps = PointSet.from_points(np.vstack(chunks), tau=tau)
    if len(ps) != n:
        raise OffsetExhausted(f"copies merged: expected {n} points, got {len(ps)}")
    report = UnitDistanceReport(
        directions=np.vstack(dirs) if dirs else np.zeros((0, d)),
        per_direction=counts, size=n, lemma_bound=lemma, prop_bound=prop,
        near_merges=ps.near_merges, parts=info,
        table_bound=sum(table.entries[m].count for m in parts))
    return ps, report


@dataclass
class RatioRow:
    n: int
    total: int
    ratio: float
    target: float
    flagged: bool = False


def ratio_report(norm: NormOracle, n_list, seed: int = 0,
                 table: Optional[SizeTable] = None) -> list:
    """``total / (n log2 n)`` per ``n``; flags drops larger than 0.02."""
    table = table or SizeTable(norm, seed=seed)
    rows = []
    prev = None
    for n in n_list:
        _, rep = compose_pointset(norm, n, seed=seed, table=table)
        ratio = rep.total / (n * math.log2(n)) if n > 1 else 0.0
        flagged = prev is not None and ratio < prev - RATIO_DROP
        rows.append(RatioRow(n=n, total=rep.total, ratio=ratio, target=norm.dim / 2,
                             flagged=flagged))
        prev = ratio
    return rows


def ratio_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "total", "ratio", "target", "flagged"])
    for r in rows:
        w.writerow([r.n, r.total, repr(r.ratio), r.target, int(r.flagged)])
    return buf.getvalue()


def ratio_json(rows) -> dict:
    return {"schema": "udf/1", "type": "RatioReport",
            "rows": [r.__dict__ for r in rows]}


def degenerate_construction(norm: NormOracle, n: int, verdict=None, tau: float = TAU):
    """Two parallel rows of ``n/2`` points along a boundary segment.

    With the segment ``x + [-1, 1] y`` on the unit sphere, every point of
    ``{s y}`` is at unit distance from every point of ``{x + s' y}``.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even integer")
    if verdict is None:
        verdict = strict_convexity_probe(norm)
    if verdict.kind != "segment":
        raise NoSegment("degenerate construction needs a boundary segment; the probe found none")
    x, y = np.asarray(verdict.midpoint), np.asarray(verdict.half)
    half = n // 2
    if 2 * np.linalg.norm(y) < n * GAP_FACTOR * tau:
        raise SegmentTooShort(f"segment of length {2 * np.linalg.norm(y):.3g} is too short "
                              f"for {n} points")
    # stay inside the segment so endpoint rounding cannot leave the sphere
    s = np.linspace(0.05, 0.95, half)[:, None]
    pts = np.vstack([s * y, x + s * y])
    ps = PointSet.from_points(pts, tau=tau)
    return ps, count_pairwise(ps, norm)
