"""
Generator systems for every dimension.

``Phi = (phi_{w_1}, ..., phi_{w_{d-1}})`` maps the boundary to R^{d-1}.  We
locate a regular value ``t`` (a seed point where the finite-difference
Jacobian of ``Phi`` is invertible, so ``Phi`` is locally open there) and then
solve ``Phi(p_j) = (1 + j lam) t`` by Newton continuation in ``j``.  The
points and chords assemble into a GAP whose code vectors map to ``d m``
non-overlapping unit vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import EPS_BND, TAU_TAN
from .errors import (
    ApSearchFailed,
    NoConvergence,
    NotOnBoundary,
    SeedExhausted,
    UDFError,
    UnitCertificateFailed,
)
from .norms import (
    NormOracle,
    chord_scalar,
    require_strictly_convex,
    sample_boundary,
    to_jsonable,
)

log = logging.getLogger(__name__)

FD_STEP = 1e-6
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
SEPARATION = 1e-8


@dataclass
class GapSpec:
    """A generalized arithmetic progression plus its certified unit directions.

    ``codes[c] @ generators`` is the realised direction ``directions[c]``.
    """

    generators: np.ndarray
    ranges: list
    codes: np.ndarray
    directions: np.ndarray
    m: int = 0
    d: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.generators = np.atleast_2d(np.asarray(self.generators, dtype=float))
        self.ranges = [int(k) for k in self.ranges]
        self.codes = np.atleast_2d(np.asarray(self.codes, dtype=np.int64))
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, self.generators.shape[1])
        if not self.d:
            self.d = self.generators.shape[1]
        if len(self.ranges) != len(self.generators):
            raise ValueError("one range per generator is required")
        if self.codes.size and self.codes.shape[1] != len(self.generators):
            raise ValueError("codes must have one entry per generator")

    @classmethod
    def simple(cls, generators, ranges, codes=(), **kw) -> "GapSpec":
        gens = np.atleast_2d(np.asarray(generators, dtype=float))
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, len(gens))
        return cls(generators=gens, ranges=list(ranges), codes=codes,
                   directions=codes @ gens if codes.size else np.zeros((0, gens.shape[1])), **kw)

    @property
    def tuple_count(self) -> int:
        out = 1
        for k in self.ranges:
            out *= k
        return out

    def labels(self):
        """Structural role of each direction: ``("p", j)`` or ``("q", i, j)`` (1-based).

        Codes with a single unit entry among the first ``m`` generators are
        ``p_j``; codes that also touch later generators are chord partners
        ``q_ij``, with ``i`` read from the first later generator used.
        """
        m = self.m
        out = []
        for k, c in enumerate(self.codes):
            nz = np.flatnonzero(c)
            if m and len(nz) and nz[0] < m and c[nz[0]] == 1:
                j = int(nz[0]) + 1
                if len(nz) == 1:
                    out.append(("p", j))
                else:
                    out.append(("q", int(nz[1]) - m + 1, j))
            else:
                out.append(("p", k + 1))
        return out

    def to_json(self) -> dict:
        return {
            "schema": "udf/1",
            "type": "GapSpec",
            "m": self.m,
            "d": self.d,
            "generators": self.generators.tolist(),
            "ranges": list(self.ranges),
            "codes": self.codes.tolist(),
            "directions": self.directions.tolist(),
            "provenance": to_jsonable(self.provenance),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GapSpec":
        return cls(generators=obj["generators"], ranges=obj["ranges"], codes=obj["codes"],
                   directions=obj["directions"], m=obj.get("m", 0), d=obj.get("d", 0),
                   provenance=obj.get("provenance", {}))


@dataclass
class ApWitness:
    ws: np.ndarray
    wd: np.ndarray
    t: np.ndarray
    lam: float
    points: np.ndarray
    x_seed: Optional[np.ndarray] = None
    seed: Optional[int] = None
    eps_coord: float = 1e-3
    eta: float = 1e-3

    def check(self, norm: NormOracle, tol: float = 1e-9) -> None:
        """Raise ``ApSearchFailed`` if any witness invariant fails."""
        if np.min(np.abs(self.t)) < self.eps_coord:
            raise ApSearchFailed("target has a coordinate below eps_coord")
        if np.any(self.points @ self.wd <= self.eta):
            raise ApSearchFailed("a point lies too close to the hyperplane span(ws)")
        for j, p in enumerate(self.points, start=1):
            err = np.max(np.abs(phi_map(norm, p, self.ws) - (1 + j * self.lam) * self.t))
            if err > tol:
                raise ApSearchFailed(f"Phi(p_{j}) misses its target by {err:.2e}")


# ---------------------------------------------------------------------------
# frames and charts


def default_frame(d: int):
    eye = np.eye(d)
    return eye[: d - 1].copy(), eye[d - 1].copy()


def complete_frame(ws, wd=None):
    """Validate ``ws`` and supply a unit normal ``wd`` to their span if missing."""
    ws = np.atleast_2d(np.asarray(ws, dtype=float))
    d = ws.shape[1]
    if ws.shape[0] != d - 1 or np.linalg.matrix_rank(ws) != d - 1:
        raise ValueError("need d-1 linearly independent vectors w_i")
    if wd is None:
        _, _, vt = np.linalg.svd(ws)
        wd = vt[-1]
        # deterministic orientation: first nonzero coordinate positive
        wd = wd * np.sign(wd[np.flatnonzero(np.abs(wd) > 1e-12)[0]])
    wd = np.asarray(wd, dtype=float)
    wd = wd / np.linalg.norm(wd)
    if np.max(np.abs(ws @ wd)) > 1e-9 * np.max(np.abs(ws)):
        raise ValueError("wd must be orthogonal to every w_i")
    return ws, wd


class _Chart:
    """Central projection of the half-space ``<x, wd> > 0`` onto the boundary."""

    def __init__(self, norm: NormOracle, wd: np.ndarray):
        self.norm = norm
        self.wd = wd
        d = len(wd)
        # orthonormal basis of wd^perp
        q, _ = np.linalg.qr(np.column_stack([wd, np.eye(d)]))
        self.basis = q[:, 1:d]

    def point(self, y):
        z = self.basis @ y + self.wd
        return z / float(self.norm.gauge(z))

    def coords(self, x):
        x = np.asarray(x, dtype=float)
        h = float(x @ self.wd)
        if h <= 0:
            raise ValueError("point is not on the wd side of the frame")
        return self.basis.T @ x / h


def phi_map(norm: NormOracle, x, ws, tau_tan: float = TAU_TAN) -> np.ndarray:
    """``(phi_{w_1}(x), ..., phi_{w_{d-1}}(x))``."""
    ws = np.atleast_2d(np.asarray(ws, dtype=float))
    return np.array([chord_scalar(norm, x, w, tau_tan=tau_tan).value for w in ws])


def _phi_jacobian(norm, chart, ws, y, step=FD_STEP, tau_tan=TAU_TAN):
    k = len(y)
    J = np.empty((len(ws), k))
    for a in range(k):
        e = np.zeros(k)
        e[a] = step
        J[:, a] = (phi_map(norm, chart.point(y + e), ws, tau_tan)
                   - phi_map(norm, chart.point(y - e), ws, tau_tan)) / (2 * step)
    return J


def solve_on_boundary(norm: NormOracle, target, x_init, ws=None, wd=None,
                      tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER,
                      polish: int = 3, tau_tan: float = TAU_TAN):
    """Newton on the chart for ``Phi(x) = target``; returns a boundary point.

    After reaching ``tol`` a few extra steps are taken while they keep
    reducing the residual, so the result sits on its chords to near machine
    precision.
    """
    from .norms import BoundaryPoint

    x_init = getattr(x_init, "coords", x_init)
    x_init = np.asarray(x_init, dtype=float)
    d = len(x_init)
    if ws is None:
        ws, wd0 = default_frame(d)
        wd = wd if wd is not None else wd0
    ws, wd = complete_frame(ws, wd)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    chart = _Chart(norm, wd)
    try:
        y = chart.coords(x_init)
    except ValueError as exc:
        raise NoConvergence(str(exc)) from exc

    def resid(y):
        return phi_map(norm, chart.point(y), ws, tau_tan) - target

    F = resid(y)
    err = np.max(np.abs(F))
    extra = 0
    for _ in range(max_iter):
        if err <= tol:
            if extra >= polish:
                break
            extra += 1
        J = _phi_jacobian(norm, chart, ws, y, tau_tan=tau_tan)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        alpha = 1.0
        improved = False
        for _ in range(30):
            y_new = y + alpha * step
            try:
                F_new = resid(y_new)
            except UDFError:
                alpha *= 0.5
                continue
            err_new = np.max(np.abs(F_new))
            if err_new < err:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        y, F, err = y_new, F_new, err_new
    if err > tol:
        raise NoConvergence(f"Newton stalled at residual {err:.3e}")
    x = chart.point(y)
    return BoundaryPoint(x, abs(float(norm.gauge(x)) - 1.0))


def seed_target(norm: NormOracle, ws=None, wd=None, eps_coord: float = 1e-3,
                eta: float = 1e-3, seed: int = 0, budget: int = 100_000,
                min_singular: float = 1e-3, tau_tan: float = TAU_TAN):
    """Rejection-sample a boundary point away from all shadow boundaries.

    Accepts ``x`` with ``<x, wd> > eta``, ``min |Phi(x)_i| >= eps_coord`` and a
    well-conditioned Jacobian of ``Phi`` (so ``Phi`` is open near ``x``).
    Returns ``(x, Phi(x))``.
    """
    d = norm.dim
    if ws is None:
        ws, wd0 = default_frame(d)
        wd = wd if wd is not None else wd0
    ws, wd = complete_frame(ws, wd)
    rng = np.random.default_rng(seed)
    chart = _Chart(norm, wd)
    drawn = 0
    while drawn < budget:
        batch = min(256, budget - drawn)
        X = sample_boundary(norm, batch, rng)
        for x in X:
            drawn += 1
            h = float(x @ wd)
            if h < 0:
                x, h = -x, -h
            if h <= eta:
                continue
            try:
                t = phi_map(norm, x, ws, tau_tan)
            except UDFError:
                continue
            if np.min(np.abs(t)) < eps_coord:
                continue
            try:
                J = _phi_jacobian(norm, chart, ws, chart.coords(x), tau_tan=tau_tan)
            except UDFError:
                continue
            if np.linalg.svd(J, compute_uv=False).min() < min_singular:
                continue
            return x, t
    raise SeedExhausted(f"no admissible seed point in {budget} samples")


def _nearest_seed(norm, ws, wd, t, eta, seed, samples=512, tau_tan=TAU_TAN):
    rng = np.random.default_rng(seed)
    best, best_err = None, np.inf
    for x in sample_boundary(norm, samples, rng):
        if x @ wd < 0:
            x = -x
        if x @ wd <= eta:
            continue
        try:
            err = np.max(np.abs(phi_map(norm, x, ws, tau_tan) - t))
        except UDFError:
            continue
        if err < best_err:
            best, best_err = x, err
    if best is None:
        raise SeedExhausted("no boundary sample on the wd side")
    return best


def find_ap_points(norm: NormOracle, m: int, ws=None, wd=None, seed: int = 0,
                   eps_coord: float = 1e-3, eta: float = 1e-3, lam0: float = 0.01,
                   lam_min: float = 1e-8, t=None, lam: Optional[float] = None,
                   x_seed=None, budget: int = 100_000,
                   tau_tan: float = TAU_TAN) -> ApWitness:
    """Distinct ``p_1..p_m`` on the boundary with ``Phi(p_j) = (1 + j lam) t``."""
    if m < 1:
        raise ValueError("m must be positive")
    require_strictly_convex(norm)
    d = norm.dim
    if d < 2:
        raise ValueError("need d >= 2")
    if ws is None:
        ws, wd0 = default_frame(d)
        wd = wd if wd is not None else wd0
    ws, wd = complete_frame(ws, wd)

    if t is None:
        try:
            x_seed, t = seed_target(norm, ws, wd, eps_coord, eta, seed, budget,
                                    tau_tan=tau_tan)
        except SeedExhausted as exc:
            raise ApSearchFailed(str(exc)) from exc
    else:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if x_seed is None:
            x_seed = _nearest_seed(norm, ws, wd, t, eta, seed, tau_tan=tau_tan)
    x_seed = np.asarray(getattr(x_seed, "coords", x_seed), dtype=float)
    lam = lam0 / m ** 2 if lam is None else float(lam)
    if lam == 0 and m > 1:
        raise ApSearchFailed("lam = 0 makes all targets equal; the points would not be distinct")

    while True:
        try:
            pts = []
            x = x_seed
            for j in range(1, m + 1):
                x = solve_on_boundary(norm, (1 + j * lam) * t, x, ws, wd,
                                      tau_tan=tau_tan).coords
                if x @ wd <= eta:
                    raise NoConvergence(f"p_{j} drifted to the frame hyperplane")
                pts.append(x)
            P = np.array(pts)
            if m > 1:
                gaps = np.sqrt(np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1))
                gaps[np.diag_indices(m)] = np.inf
                if gaps.min() <= SEPARATION:
                    raise ApSearchFailed("AP points are not distinct")
            break
        except NoConvergence as exc:
            log.debug("lam=%g failed (%s); halving", lam, exc)
            lam *= 0.5
            if lam < lam_min:
                raise ApSearchFailed(f"lam fell below {lam_min:g}") from exc
    witness = ApWitness(ws=ws, wd=wd, t=t, lam=lam, points=P, x_seed=x_seed, seed=seed,
                        eps_coord=eps_coord, eta=eta)
    witness.check(norm)
    return witness


# ---------------------------------------------------------------------------
# assembly and certificates


def proposition_ranges(m: int, d: int) -> list:
    return [2] * m + [m] * (d - 1) + [m * m] * (d - 1)


def proposition_codes(m: int, d: int) -> np.ndarray:
    n = m + 2 * d - 2
    codes = []
    for j in range(1, m + 1):
        c = np.zeros(n, dtype=np.int64)
        c[j - 1] = 1
        codes.append(c)
    for j in range(1, m + 1):
        for i in range(1, d):
            c = np.zeros(n, dtype=np.int64)
            c[j - 1] = 1
            c[m + i - 1] = 1
            c[m + d - 1 + i - 1] = j
            codes.append(c)
    return np.array(codes)


def realize_directions(norm: NormOracle, spec: GapSpec, eps_bnd: float = EPS_BND) -> None:
    """Raise ``UnitCertificateFailed`` unless every direction has gauge 1 +- eps_bnd."""
    g = norm.gauge(spec.directions)
    bad = np.flatnonzero(np.abs(g - 1.0) > eps_bnd)
    if bad.size:
        k = bad[0]
        raise UnitCertificateFailed(
            f"direction {k} has gauge {g[k]:.17g} (|g-1| = {abs(g[k] - 1):.2e})")


def assemble_generators(norm: NormOracle, m: int, witness: ApWitness,
                        eps_bnd: float = EPS_BND) -> GapSpec:
    d = norm.dim
    ws, t, lam = witness.ws, witness.t, witness.lam
    gens = np.vstack([
        witness.points,
        -(t[:, None] * ws),
        -(lam * t[:, None] * ws),
    ])
    codes = proposition_codes(m, d)
    spec = GapSpec(
        generators=gens,
        ranges=proposition_ranges(m, d),
        codes=codes,
        directions=codes @ gens,
        m=m,
        d=d,
        provenance={"construction": "proposition", "norm": norm.name, "seed": witness.seed,
                    "lambda": lam, "t": t.tolist(), "ws": ws.tolist(), "wd": witness.wd.tolist()},
    )
    realize_directions(norm, spec, eps_bnd)
    return spec


@dataclass(frozen=True)
class OverlapReport:
    ok: bool
    case: Optional[int] = None
    indices: tuple = ()
    distance: float = float("nan")


def verify_non_overlapping(spec: GapSpec, sep: float = SEPARATION) -> OverlapReport:
    """Check that the ``2|U|`` vectors ``+-u`` are pairwise separated.

    A violation is labelled with the case of the non-overlap argument it
    contradicts: 1 antipodes, 2 ``p_j = p_j'``, 3 ``q_ij = p_j'``,
    4 ``q_ij = q_ij'``, 5 ``q_ij = q_i'j'`` with ``i != i'``.
    """
    U = spec.directions
    n = len(U)
    V = np.vstack([U, -U])
    D = np.sqrt(np.sum((V[:, None, :] - V[None, :, :]) ** 2, axis=-1))
    D[np.triu_indices(2 * n)] = np.inf
    D[np.diag_indices(2 * n)] = np.inf
    close = np.argwhere(D <= sep)
    if close.size == 0:
        return OverlapReport(True)
    labels = spec.labels()
    r, c = close[np.lexsort((close[:, 0], close[:, 1]))[0]]
    a, sa = c % n, c < n
    b, sb = r % n, r < n
    dist = float(D[r, c])
    if sa != sb or a == b:
        return OverlapReport(False, 1, (int(a), int(b)), dist)
    la, lb = labels[a], labels[b]
    if la[0] == "p" and lb[0] == "p":
        case = 2
    elif la[0] != lb[0]:
        case = 3
    elif la[1] == lb[1]:
        case = 4
    else:
        case = 5
    return OverlapReport(False, case, (int(a), int(b)), dist)


def proposition_spec(norm: NormOracle, m: int, seed: int = 0, eps_bnd: float = EPS_BND,
                     **kw) -> GapSpec:
    """Generator system whose GAP spans at least ``d (m - 2) |S| / 2`` unit distances."""
    witness = find_ap_points(norm, m, seed=seed, **kw)
    spec = assemble_generators(norm, m, witness, eps_bnd)
    report = verify_non_overlapping(spec)
    if not report.ok:
        raise UnitCertificateFailed(
            f"directions overlap (case {report.case}, indices {report.indices})")
    return spec
