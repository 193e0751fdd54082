"""
Norms as gauge oracles, plus the boundary geometry the constructions need.

A norm is handed around as a :class:`NormOracle`: an immutable wrapper
around a vectorised gauge ``X[..., d] -> [...]``.  Closed-form families
(lp, ellipsoids, smooth perturbations of lp) evaluate directly; bodies given
only by a convex level function are resolved by radial bisection.
"""

from __future__ import annotations

import itertools
import json
import math
import weakref
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .constants import EPS_BND, GAUGE_ATOL, TAU_TAN
from .errors import (
    BisectionFailure,
    NonFinite,
    NormSpecError,
    NotOnBoundary,
    NotStrictlyConvex,
    ZeroVector,
)

GaugeFn = Callable[[np.ndarray], np.ndarray]

# f(s) values below this magnitude are treated as numerical zeros
_CHORD_NOISE = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class NormOracle:
    """Handle on ``||.||_B``.

    ``gauge`` is vectorised over the last axis.  ``strict`` is the known
    strict-convexity verdict (``None`` when it has to be probed).
    """

    dim: int
    gauge: GaugeFn
    name: str
    grad_hint: Optional[GaugeFn] = None
    strict: Optional[bool] = None
    smooth: bool = True
    spec: dict = field(default_factory=dict)
    # (lo, hi): every unit vector has Euclidean length in [lo, hi]
    euclid_bounds: Optional[tuple] = None

    def __call__(self, x) -> float:
        return gauge_eval(self, x)


@dataclass(frozen=True)
class BoundaryPoint:
    coords: np.ndarray
    residual: float


@dataclass(frozen=True)
class ChordResult:
    value: float
    tangent: bool


@dataclass(frozen=True)
class ConvexityVerdict:
    """Outcome of :func:`strict_convexity_probe`.

    For ``kind == "segment"`` the boundary contains the segment ``[a, b]``;
    ``midpoint`` and ``half`` give it as ``midpoint +- half``.
    """

    kind: str  # "strict" | "segment" | "inconclusive"
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    samples: int = 0

    @property
    def midpoint(self):
        return None if self.a is None else 0.5 * (self.a + self.b)

    @property
    def half(self):
        return None if self.a is None else 0.5 * (self.b - self.a)


# ---------------------------------------------------------------------------
# gauge families


def _lp_gauge(p: float) -> GaugeFn:
    if p == 1:
        return lambda X: np.sum(np.abs(X), axis=-1)
    if math.isinf(p):
        return lambda X: np.max(np.abs(X), axis=-1)

    def scaled(X):
        A = np.abs(X)
        # rescale by the max entry so large/small inputs do not over/underflow
        s = np.max(A, axis=-1)
        safe = np.where(s > 0, s, 1.0)
        return s * np.sum((A / safe[..., None]) ** p, axis=-1) ** (1.0 / p)

    if p != 2:
        return scaled

    def euclid(X):
        X = np.asarray(X, dtype=float)
        r = np.sqrt(np.sum(X * X, axis=-1))
        # squares under/overflow far from unit scale; redo those rows scaled
        bad = (r < 1e-150) | (r > 1e150)
        if np.any(bad):
            r = np.where(bad, scaled(X), r)
        return r

    return euclid


def _fmt_p(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return f"{p:g}"


def lp_norm(p: float, d: int) -> NormOracle:
    p = float(p)
    if not p >= 1:
        raise NormSpecError(f"lp norm needs p >= 1, got {p}")
    grad = None
    if p == 2:
        def grad(X):
            return X / np.sqrt(np.sum(X * X, axis=-1))[..., None]
    return NormOracle(
        dim=d,
        gauge=_lp_gauge(p),
        name=f"lp:{_fmt_p(p)}",
        grad_hint=grad,
        strict=1 < p < math.inf,
        smooth=1 < p < math.inf,
        spec={"kind": "lp", "p": _fmt_p(p) if math.isinf(p) else p, "d": d},
        euclid_bounds=_lp_euclid_bounds(p, d),
    )


def _lp_euclid_bounds(p: float, d: int):
    # |x|_p and |x|_2 differ by at most a factor d^{|1/2 - 1/p|}
    e = 0.5 if math.isinf(p) else abs(0.5 - 1.0 / p)
    f = float(d) ** e
    return (1.0, f) if p >= 2 else (1.0 / f, 1.0)


def euclidean(d: int) -> NormOracle:
    return lp_norm(2, d)


def ellipsoid_norm(matrix, name: Optional[str] = None) -> NormOracle:
    """Gauge ``sqrt(x^T A x)`` for a symmetric positive definite ``A``."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NormSpecError("ellipsoid matrix must be square")
    if not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise NormSpecError("ellipsoid matrix must be symmetric positive definite")
    A = 0.5 * (A + A.T)

    def g(X):
        q = np.einsum("...i,ij,...j->...", X, A, X)
        return np.sqrt(np.maximum(q, 0.0))

    return NormOracle(
        dim=A.shape[0],
        gauge=g,
        name=name or "ellipsoid",
        strict=True,
        spec={"kind": "ellipsoid", "matrix": A.tolist()},
        euclid_bounds=tuple(1.0 / np.sqrt(np.linalg.eigvalsh(A)[[-1, 0]])),
    )


class EvenPerturbation:
    """Seeded smooth even function on the sphere with ``sup |psi| <= 1``.

    A random combination of degree-2 and degree-4 monomials in the unit
    direction; coefficients are normalised by their l1 mass, and every
    monomial is bounded by 1 on the sphere.
    """

    def __init__(self, d: int, seed: int, degrees=(2, 4)):
        rng = np.random.default_rng(seed)
        monos = []
        for deg in degrees:
            monos.extend(itertools.combinations_with_replacement(range(d), deg))
        coeffs = rng.standard_normal(len(monos))
        self.d = d
        self.seed = seed
        self.coeffs = coeffs / np.sum(np.abs(coeffs))
        # pad short monomials with index d, which points at a column of ones
        width = max(degrees)
        self.index = np.array([m + (d,) * (width - len(m)) for m in monos], dtype=int)

    def __call__(self, U):
        U = np.asarray(U, dtype=float)
        ones = np.ones(U.shape[:-1] + (1,))
        U1 = np.concatenate([U, ones], axis=-1)
        return np.prod(U1[..., self.index], axis=-1) @ self.coeffs


def multiplicative_perturbation(base: NormOracle, delta: float, seed: int,
                                name: Optional[str] = None,
                                spec: Optional[dict] = None) -> NormOracle:
    """``gauge'(x) = gauge(x) * (1 + delta * psi(x / |x|_2))``."""
    psi = EvenPerturbation(base.dim, seed)
    length = _lp_gauge(2)

    def g(X):
        X = np.asarray(X, dtype=float)
        r = length(X)
        safe = np.where(r > 0, r, 1.0)
        U = X / safe[..., None]
        return base.gauge(X) * (1.0 + delta * psi(U))

    if spec is None:
        spec = {"kind": "perturbed", "base": base.spec, "delta": delta, "seed": seed}
    bounds = None
    if base.euclid_bounds is not None and abs(delta) < 1:
        lo, hi = base.euclid_bounds
        bounds = (lo / (1 + abs(delta)), hi / (1 - abs(delta)))
    return NormOracle(
        dim=base.dim,
        gauge=g,
        name=name or f"{base.name}~{delta:g}#{seed}",
        strict=None,
        smooth=base.smooth,
        spec=spec,
        euclid_bounds=bounds,
    )


def perturbed_lp_norm(p: float, d: int, delta: float = 0.02, seed: int = 0) -> NormOracle:
    return multiplicative_perturbation(
        lp_norm(p, d), delta, seed,
        name=f"perturbed_lp:{_fmt_p(float(p))}:{delta:g}:{seed}",
        spec={"kind": "perturbed_lp", "p": float(p), "d": d, "delta": delta, "seed": seed})


def radial_scale(level: Callable[[np.ndarray], np.ndarray], U: np.ndarray,
                 max_iter: int = 200) -> np.ndarray:
    """For unit directions ``U`` find ``s`` with ``level(s * u) = 0``.

    ``level`` must be convex, negative at the origin and eventually positive
    along every ray.  Brackets by doubling/halving, then bisects until the
    bracket stops shrinking.
    """
    U = np.atleast_2d(U)
    n = U.shape[0]
    hi = np.ones(n)
    for _ in range(max_iter):
        grow = level(hi[:, None] * U) <= 0
        if not grow.any():
            break
        hi = np.where(grow, 2.0 * hi, hi)
    else:
        raise BisectionFailure("body is unbounded along a sampled ray")
    lo = 0.5 * hi
    for _ in range(max_iter):
        shrink = level(lo[:, None] * U) > 0
        if not shrink.any():
            break
        hi = np.where(shrink, lo, hi)
        lo = np.where(shrink, 0.5 * lo, lo)
    else:
        raise BisectionFailure("origin is not interior to the body")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi) & (hi - lo > GAUGE_ATOL * 1e-3 * hi)
        if not active.any():
            break
        inside = level(mid[:, None] * U) <= 0
        lo = np.where(active & inside, mid, lo)
        hi = np.where(active & ~inside, mid, hi)
    return 0.5 * (lo + hi)


def body_norm(level: Callable[[np.ndarray], np.ndarray], d: int, name: str,
              strict: Optional[bool] = None, spec: Optional[dict] = None) -> NormOracle:
    """Norm of the body ``{z : level(z) <= 0}`` by radial bisection.

    ``level`` is vectorised, convex, symmetric, and negative at 0.
    """

    def g(X):
        X = np.asarray(X, dtype=float)
        shape = X.shape[:-1]
        flat = X.reshape(-1, d)
        r = np.sqrt(np.sum(flat * flat, axis=-1))
        out = np.zeros(flat.shape[0])
        nz = r > 0
        if nz.any():
            U = flat[nz] / r[nz, None]
            out[nz] = r[nz] / radial_scale(level, U)
        return out.reshape(shape)

    return NormOracle(dim=d, gauge=g, name=name, strict=strict, spec=spec or {})


def table_norm(terms, name: Optional[str] = None) -> NormOracle:
    """Body ``{z : sum_k c_k prod_i |z_i|^e_ki <= 1}`` (e.g. ``|y| + x^2 <= 1``).

    Convexity of the polynomial body is the caller's responsibility.
    """
    try:
        coeffs = np.array([float(c) for c, _ in terms])
        exps = np.array([[float(e) for e in ex] for _, ex in terms])
    except (TypeError, ValueError) as exc:
        raise NormSpecError(f"bad table terms: {exc}") from exc
    if exps.ndim != 2 or len(coeffs) == 0:
        raise NormSpecError("table norm needs a non-empty list of [coef, exponents]")
    if np.any(coeffs < 0) or np.any(exps < 0):
        raise NormSpecError("table norm coefficients and exponents must be non-negative")
    d = exps.shape[1]
    for i in range(d):
        if not np.any((exps[:, i] > 0) & (coeffs > 0)):
            raise NormSpecError(f"table body is unbounded along axis {i}")

    def level(Z):
        A = np.abs(Z)
        return np.sum(coeffs * np.prod(A[..., None, :] ** exps, axis=-1), axis=-1) - 1.0

    spec = {"kind": "table", "terms": [[float(c), [float(e) for e in ex]] for c, ex in terms]}
    return body_norm(level, d, name or "table", strict=None, spec=spec)


def rotated(norm: NormOracle, R) -> NormOracle:
    """The norm ``x -> ||R x||``; its unit ball is ``R^{-1} B``."""
    R = np.asarray(R, dtype=float)
    return NormOracle(
        dim=norm.dim,
        gauge=lambda X: norm.gauge(np.asarray(X, dtype=float) @ R.T),
        name=f"{norm.name}@rot",
        strict=norm.strict,
        smooth=norm.smooth,
        spec={"kind": "rotated", "base": norm.spec, "R": R.tolist()},
    )


# ---------------------------------------------------------------------------
# spec parsing


def parse_norm_spec(spec, d: Optional[int] = None) -> NormOracle:
    """Build a norm from a JSON object, JSON text, or CLI shorthand.

    Shorthands: ``lp:P``, ``l1``, ``l2``, ``linf``, ``euclidean``,
    ``perturbed_lp:P[:DELTA[:SEED]]``.
    """
    if isinstance(spec, NormOracle):
        return spec
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            try:
                spec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise NormSpecError(f"norm spec is not valid JSON: {exc}") from exc
        else:
            spec = _parse_shorthand(text)
    if not isinstance(spec, dict):
        raise NormSpecError(f"norm spec must be an object, got {type(spec).__name__}")
    kind = spec.get("kind")
    dim = spec.get("d", d)
    try:
        if kind == "lp":
            return lp_norm(_parse_p(spec["p"]), _need_dim(dim))
        if kind == "ellipsoid":
            if "matrix" in spec:
                return ellipsoid_norm(spec["matrix"])
            axes = np.asarray(spec["axes"], dtype=float)
            if np.any(axes <= 0):
                raise NormSpecError("ellipsoid axes must be positive")
            norm = ellipsoid_norm(np.diag(1.0 / axes ** 2), name="ellipsoid")
            return norm
        if kind == "perturbed_lp":
            return perturbed_lp_norm(_parse_p(spec["p"]), _need_dim(dim),
                                     float(spec.get("delta", 0.02)), int(spec.get("seed", 0)))
        if kind == "table":
            return table_norm(spec["terms"], name=spec.get("name"))
    except KeyError as exc:
        raise NormSpecError(f"norm spec of kind {kind!r} is missing {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NormSpecError):
            raise
        raise NormSpecError(f"bad parameters for norm kind {kind!r}: {exc}") from exc
    raise NormSpecError(
        f"unknown norm kind {kind!r}; expected one of lp, ellipsoid, perturbed_lp, table")


def _need_dim(d):
    if d is None:
        raise NormSpecError("dimension d is required for this norm kind")
    d = int(d)
    if d < 1:
        raise NormSpecError(f"dimension must be positive, got {d}")
    return d


def _parse_p(p) -> float:
    if isinstance(p, str) and p.lower() in ("inf", "infinity"):
        return math.inf
    return float(p)


def _parse_shorthand(text: str) -> dict:
    low = text.lower()
    named = {"l1": 1, "l2": 2, "linf": "inf", "euclidean": 2, "taxicab": 1, "max": "inf"}
    if low in named:
        return {"kind": "lp", "p": named[low]}
    parts = low.split(":")
    try:
        if parts[0] == "lp" and len(parts) == 2:
            return {"kind": "lp", "p": parts[1]}
        if parts[0] == "perturbed_lp" and 2 <= len(parts) <= 4:
            out = {"kind": "perturbed_lp", "p": parts[1]}
            if len(parts) > 2:
                out["delta"] = float(parts[2])
            if len(parts) > 3:
                out["seed"] = int(parts[3])
            return out
    except ValueError as exc:
        raise NormSpecError(f"cannot parse norm shorthand {text!r}: {exc}") from exc
    raise NormSpecError(
        f"cannot parse norm spec {text!r}; use lp:P, l1, l2, linf, perturbed_lp:P[:DELTA[:SEED]] or JSON")


# ---------------------------------------------------------------------------
# operations


def gauge_eval(norm: NormOracle, x) -> float:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite coordinate in {x}")
    if not np.any(x):
        return 0.0
    return float(norm.gauge(x))


def boundary_point(norm: NormOracle, x) -> BoundaryPoint:
    x = np.asarray(x, dtype=float)
    g = gauge_eval(norm, x)
    if g == 0.0:
        raise ZeroVector("cannot normalise the zero vector")
    y = x / g
    return BoundaryPoint(y, abs(gauge_eval(norm, y) - 1.0))


def _coords(x) -> np.ndarray:
    if isinstance(x, BoundaryPoint):
        return x.coords
    return np.asarray(x, dtype=float)


def chord_scalar(norm: NormOracle, x, w, tau_tan: float = TAU_TAN,
                 eps_bnd: float = EPS_BND) -> ChordResult:
    """The scalar ``s != 0`` with ``x - s w`` on the boundary, or tangency.

    ``f(s) = gauge(x - s w) - 1`` is convex with ``f(0) = 0``; the nonzero
    root lies on the side where ``f`` dips below zero.
    """
    x = _coords(x)
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        raise ZeroVector("chord direction must be nonzero")
    res = abs(gauge_eval(norm, x) - 1.0)
    if res > eps_bnd:
        raise NotOnBoundary(f"point has boundary residual {res:.3e}")

    def f(s):
        return float(norm.gauge(x - s * w)) - 1.0

    f_plus, f_minus = f(tau_tan), f(-tau_tan)
    if f_plus >= -_CHORD_NOISE and f_minus >= -_CHORD_NOISE:
        for sign in (1.0, -1.0):
            if abs(f(sign * tau_tan)) <= _CHORD_NOISE and abs(f(2 * sign * tau_tan)) <= _CHORD_NOISE:
                if norm.strict:
                    # zero curvature at a tangency of a strictly convex body
                    break
                raise NotStrictlyConvex(
                    f"gauge is flat along w on an interval wider than {tau_tan:g}")
        return ChordResult(0.0, True)
    sign = 1.0 if f_plus < f_minus else -1.0

    lo, hi = tau_tan, 0.1
    for _ in range(64):
        if f(sign * hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BisectionFailure("no chord endpoint found; is the body bounded?")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(sign * mid) < 0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    if s <= tau_tan:
        return ChordResult(0.0, True)
    return ChordResult(sign * s, False)


def is_shadow_boundary(norm: NormOracle, x, w, tau_tan: float = TAU_TAN) -> bool:
    return chord_scalar(norm, x, w, tau_tan=tau_tan).tangent


def sample_boundary(norm: NormOracle, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` boundary points along Gaussian-random directions."""
    G = rng.standard_normal((count, norm.dim))
    return G / norm.gauge(G)[:, None]


def strict_convexity_probe(norm: NormOracle, samples: int = 10_000, seed: int = 0,
                           batch: int = 4096) -> ConvexityVerdict:
    """Look for a boundary segment by testing midpoints of random boundary chords."""
    if samples <= 0:
        return ConvexityVerdict("inconclusive", samples=0)
    rng = np.random.default_rng(seed)
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        X = sample_boundary(norm, k, rng)
        Y = sample_boundary(norm, k, rng)
        sep = np.sqrt(np.sum((X - Y) ** 2, axis=-1))
        mid = norm.gauge(0.5 * (X + Y))
        hit = np.flatnonzero((mid >= 1.0 - 1e-12) & (sep > 1e-6))
        if hit.size:
            i = hit[0]
            return ConvexityVerdict("segment", X[i].copy(), Y[i].copy(), samples=done + i + 1)
        done += k
    return ConvexityVerdict("strict", samples=done)


_PROBE_CACHE: "weakref.WeakKeyDictionary[NormOracle, dict]" = weakref.WeakKeyDictionary()


def require_strictly_convex(norm: NormOracle, samples: int = 10_000, seed: int = 0) -> None:
    """Raise :class:`NotStrictlyConvex` unless the norm is (believed) strictly convex."""
    if norm.strict is True:
        return
    if norm.strict is False:
        raise NotStrictlyConvex(f"{norm.name} is not strictly convex")
    cache = _PROBE_CACHE.setdefault(norm, {})
    verdict = cache.get((samples, seed))
    if verdict is None:
        verdict = cache[(samples, seed)] = strict_convexity_probe(norm, samples, seed)
    if verdict.kind == "segment":
        raise NotStrictlyConvex(
            f"{norm.name}: boundary segment between {verdict.a} and {verdict.b}")


def norm_digest(norm: NormOracle) -> str:
    """Canonical text identifying a norm (used as a cache key)."""
    return json.dumps({"name": norm.name, "spec": norm.spec}, sort_keys=True)


def to_jsonable(obj: Any):
    """Recursively convert numpy containers into JSON-friendly Python values."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj
