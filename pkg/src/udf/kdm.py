"""
A crinkled paraboloid cap whose unit distance graph contains ``K_{d,2n}``.

The body is ``B0 = {(x; y) : |y| <= 16 - rho(x)}`` with
``rho(x) = |x|^2 + h chi(x) cos(pi n x_1)``.  Its lower cap is the graph of
``rho - 16``, and the ``d`` translates ``dB0 - q_j`` meet in ``2n`` points
near the parabola ``(t, 0, .., 0, t^2 - 16)``.  Those points are at unit
distance from each of ``-q_0, .., -q_{d-1}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import HUnderflow, OutOfRange, RootLost
from .norms import NormOracle, body_norm, multiplicative_perturbation

FD_STEP = 1e-6
HESS_STEP = 1e-4
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
RESIDUAL_TOL = 1e-10
VERIFY_TOL = 1e-9
DET_MIN = 1e-6
SEPARATION = 1e-4
DELTA_MAX = 1e-2
CENTER_RADIUS = 2.5
CAP = 16.0


def _g(s):
    s = np.asarray(s, dtype=float)
    pos = s > 0
    return np.where(pos, np.exp(-1.0 / np.where(pos, s, 1.0)), 0.0)


def make_bump(d: int = 3) -> Callable:
    """Radial smooth step: 1 on the unit ball, 0 outside radius 2."""
    if d < 2:
        raise ValueError("d must be at least 2")

    def chi(x):
        r = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
        a, b = _g(2.0 - r), _g(r - 1.0)
        return a / (a + b)

    return chi


def make_rho(chi: Callable, h: float, n: int) -> Callable:
    def rho(x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1) + h * chi(x) * np.cos(math.pi * n * x[..., 0])

    return rho


def fd_hessian(f: Callable, X: np.ndarray, step: float = HESS_STEP) -> np.ndarray:
    """Central-difference Hessians of ``f`` at the rows of ``X``."""
    X = np.atleast_2d(X)
    k = X.shape[1]
    H = np.empty((X.shape[0], k, k))
    f0 = f(X)
    E = np.eye(k) * step
    for i in range(k):
        H[:, i, i] = (f(X + E[i]) - 2 * f0 + f(X - E[i])) / step ** 2
        for j in range(i + 1, k):
            v = (f(X + E[i] + E[j]) - f(X + E[i] - E[j])
                 - f(X - E[i] + E[j]) + f(X - E[i] - E[j])) / (4 * step ** 2)
            H[:, i, j] = H[:, j, i] = v
    return H


def _ball_grid(k: int, radius: float, step: float) -> np.ndarray:
    ticks = np.arange(-radius, radius + step / 2, step)
    G = np.stack(np.meshgrid(*([ticks] * k), indexing="ij"), axis=-1).reshape(-1, k)
    return G[np.sum(G * G, axis=1) <= radius ** 2 + 1e-12]


def min_hessian_eigenvalue(rho: Callable, k: int, grid_step: float = 0.05,
                           radius: float = 2.5) -> float:
    G = _ball_grid(k, radius, grid_step)
    lo = math.inf
    for chunk in np.array_split(G, max(1, len(G) // 100000)):
        lo = min(lo, float(np.linalg.eigvalsh(fd_hessian(rho, chunk))[:, 0].min()))
    return lo


def select_h(n: int, d: int, grid_step: float = 0.05, chi: Optional[Callable] = None) -> float:
    """Largest ``h = 1/(pi n)^2 / 2^j`` keeping ``rho`` uniformly convex on the grid."""
    if n < 1:
        raise ValueError("n must be positive")
    chi = chi or make_bump(d)
    h = 1.0 / (math.pi * n) ** 2
    while h >= 1e-12:
        if min_hessian_eigenvalue(make_rho(chi, h, n), d - 1, grid_step) > 1e-6:
            return h
        h /= 2
    raise HUnderflow(f"no admissible h for n = {n}, d = {d}")


def simplex_points(count: int, dim: int, radius: float) -> np.ndarray:
    """``count`` vertices of a regular simplex in ``R^dim`` on the sphere of ``radius``."""
    if count - 1 > dim:
        raise ValueError("too many vertices for the dimension")
    C = np.eye(count) - 1.0 / count
    # orthonormal basis of the centred span, with a fixed sign convention
    U, _, _ = np.linalg.svd(C)
    B = U[:, :count - 1]
    B = B * np.where(B[np.argmax(np.abs(B), axis=0), range(count - 1)] < 0, -1.0, 1.0)
    P = C @ B
    P = P / np.linalg.norm(P, axis=1, keepdims=True) * radius
    out = np.zeros((count, dim))
    out[:, :count - 1] = P
    return out


@dataclass
class LocalModel:
    d: int
    n: int
    h: float
    chi: Callable
    rho: Callable
    body: NormOracle
    p: np.ndarray        # p_1..p_{d-1} in R^{d-1}
    centers: np.ndarray  # q_0..q_{d-1} in R^d

    @property
    def partners(self) -> np.ndarray:
        """Points at unit distance from every intersection point."""
        return -self.centers


def build_model(d: int, n: int, h: Optional[float] = None, grid_step: float = 0.05) -> LocalModel:
    if d < 3:
        raise ValueError(f"the local model needs d >= 3, got d = {d}")
    if n < 1:
        raise ValueError("n must be positive")
    chi = make_bump(d)
    if h is None:
        h = select_h(n, d, grid_step, chi)
    rho = make_rho(chi, h, n)

    def level(Z):
        # rho is already |x|^2 past radius 2, so the body is bounded by |x| <= 4
        return np.abs(Z[..., -1]) + rho(Z[..., :-1]) - CAP

    body = body_norm(level, d, name=f"kdm:d{d}:n{n}", strict=True,
                     spec={"kind": "kdm", "d": d, "n": n, "h": h})
    p = np.zeros((d - 1, d - 1))
    p[:, 1:] = simplex_points(d - 1, d - 2, CENTER_RADIUS)
    centers = np.zeros((d, d))
    centers[1:, :-1] = p
    centers[1:, -1] = rho(p)
    return LocalModel(d=d, n=n, h=h, chi=chi, rho=rho, body=body, p=p, centers=centers)


def seed_points(model: LocalModel) -> np.ndarray:
    n, d = model.n, model.d
    t = (2 * np.arange(-n, n) + 1) / (2 * n)
    X = np.zeros((2 * n, d))
    X[:, 0] = t
    X[:, -1] = t * t - CAP
    return X


def phi(model: LocalModel, B: NormOracle, x) -> np.ndarray:
    """``(|x + q_j|_B - 1)_j``: zero exactly on all ``d`` translated boundaries."""
    x = np.asarray(x, dtype=float)
    return B.gauge(x[..., None, :] + model.centers) - 1.0


def phi_jacobian(model: LocalModel, B: NormOracle, x, step: float = FD_STEP) -> np.ndarray:
    d = model.d
    E = np.eye(d) * step
    X = np.concatenate([x + E, x - E])
    F = phi(model, B, X)
    return ((F[:d] - F[d:]) / (2 * step)).T


def analytic_normals(model: LocalModel, k: int) -> np.ndarray:
    """Rows ``nu_0..nu_{d-1}`` at the ``k``-th seed, ``-n <= k < n``."""
    n, d = model.n, model.d
    a = (2 * k + 1) / n
    N = np.zeros((d, d))
    N[:, -1] = -1.0
    N[0, 0] = a - (-1) ** k * model.h * math.pi * n
    N[1:, 0] = a
    N[1:, :-1] += 2 * model.p
    return N


def normal_deviation(model: LocalModel, k: int, J: np.ndarray) -> float:
    """Largest angle between Jacobian rows and the positive rays of the analytic normals."""
    N = analytic_normals(model, k)
    cos = np.sum(J * N, axis=1) / (np.linalg.norm(J, axis=1) * np.linalg.norm(N, axis=1))
    return float(np.max(np.arccos(np.clip(cos, -1.0, 1.0))))


def _newton(model, B, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, polish=2):
    x = np.array(x0, dtype=float)
    F = phi(model, B, x)
    extra = 0
    for _ in range(max_iter):
        if np.max(np.abs(F)) <= tol:
            if extra >= polish:
                return x, F
            extra += 1
        J = phi_jacobian(model, B, x)
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None, F
        step = 1.0
        for _ in range(30):
            xn = x + step * dx
            Fn = phi(model, B, xn)
            if np.max(np.abs(Fn)) < np.max(np.abs(F)) or np.max(np.abs(F)) <= tol:
                break
            step *= 0.5
        else:
            return (x, F) if np.max(np.abs(F)) <= tol else (None, F)
        x, F = xn, Fn
    return (x, F) if np.max(np.abs(F)) <= tol else (None, F)


@dataclass
class KdmCertificate:
    d: int
    n: int
    centers: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    jac_dets: np.ndarray
    deviations: np.ndarray = None
    persisted: bool = False
    trials: list = field(default_factory=list)
    norm: str = ""

    @property
    def separation(self) -> float:
        P = self.points
        if len(P) < 2:
            return math.inf
        D = np.linalg.norm(P[:, None] - P[None], axis=-1)
        return float(D[np.triu_indices(len(P), 1)].min())

    @property
    def ok(self) -> bool:
        return bool(len(self.points) == 2 * self.n
                    and np.all(self.residuals <= RESIDUAL_TOL)
                    and np.all(np.abs(self.jac_dets) >= DET_MIN)
                    and self.separation > SEPARATION)

    def to_json(self) -> dict:
        return {
            "schema": "udf/1", "type": "KdmCertificate", "d": self.d, "n": self.n,
            "norm": self.norm,
            "centers": self.centers.tolist(), "partners": (-self.centers).tolist(),
            "points": self.points.tolist(), "residuals": self.residuals.tolist(),
            "jac_dets": self.jac_dets.tolist(),
            "normal_deviation": None if self.deviations is None else self.deviations.tolist(),
            "separation": self.separation, "ok": self.ok,
            "persisted": self.persisted, "trials": self.trials,
        }


def solve_intersections(model: LocalModel, B: Optional[NormOracle] = None,
                        starts=None) -> KdmCertificate:
    """Newton from each seed (or from ``starts``) on the ``d`` translate equations."""
    B = B or model.body
    X0 = seed_points(model) if starts is None else np.asarray(starts, dtype=float)
    pts, res, dets, devs = [], [], [], []
    ks = range(-model.n, model.n)
    for k, x0 in zip(ks, X0):
        x, F = _newton(model, B, x0)
        if x is None:
            raise RootLost(k, f"Newton stalled at residual {np.max(np.abs(F)):.2e}")
        J = phi_jacobian(model, B, x)
        pts.append(x)
        res.append(float(np.max(np.abs(F))))
        dets.append(float(np.linalg.det(J)))
        devs.append(normal_deviation(model, k, J))
    P = np.array(pts)
    for a, b in itertools.combinations(range(len(P)), 2):
        if np.linalg.norm(P[a] - P[b]) <= SEPARATION:
            raise RootLost(ks[b], f"merged with root {ks[a]}")
    return KdmCertificate(d=model.d, n=model.n, centers=model.centers.copy(), points=P,
                          residuals=np.array(res), jac_dets=np.array(dets),
                          deviations=np.array(devs), norm=B.name)


def trial_seeds(seed: int, trials: int) -> list:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def perturb_and_persist(model: LocalModel, delta: float, trials: int = 5, seed: int = 0,
                        cert: Optional[KdmCertificate] = None) -> bool:
    """Do all ``2n`` roots survive every seeded perturbation of size ``delta``?"""
    if not 0 <= delta <= DELTA_MAX:
        raise OutOfRange(f"delta must lie in [0, {DELTA_MAX}], got {delta}")
    base = cert or solve_intersections(model)
    if not base.ok:
        return False
    log = []
    ok = True
    for s in trial_seeds(seed, trials):
        B = multiplicative_perturbation(model.body, delta, s)
        try:
            c = solve_intersections(model, B, starts=base.points)
            good = c.ok and verify_kdm(c, model, B)
            shift = float(np.max(np.linalg.norm(c.points - base.points, axis=1)))
        except RootLost as e:
            good, shift = False, None
            log.append({"seed": s, "delta": delta, "ok": False, "lost": e.k})
            ok = False
            continue
        log.append({"seed": s, "delta": delta, "ok": bool(good), "max_shift": shift,
                    "min_abs_det": float(np.min(np.abs(c.jac_dets)))})
        ok = ok and good
    if cert is not None:
        cert.trials.extend(log)
        if ok:
            cert.persisted = True
    return ok


def largest_persisting_delta(model: LocalModel, deltas=(1e-2, 5e-3, 2e-3, 1e-3, 5e-4),
                             trials: int = 5, seed: int = 0) -> Optional[float]:
    base = solve_intersections(model)
    for delta in sorted(deltas, reverse=True):
        if perturb_and_persist(model, delta, trials, seed, cert=base):
            return delta
    return None


def verify_kdm(cert: KdmCertificate, model: LocalModel, B: Optional[NormOracle] = None) -> bool:
    """Every point at unit distance from every partner, ``2n`` distinct points."""
    B = B or model.body
    P, Q = cert.points, -model.centers
    if len(P) != 2 * model.n or np.any(np.asarray(cert.residuals) > VERIFY_TOL):
        return False
    G = B.gauge(P[:, None, :] - Q[None, :, :])
    if np.max(np.abs(G - 1.0)) > VERIFY_TOL:
        return False
    if np.any(np.abs(cert.jac_dets) < DET_MIN):
        return False
    allpts = np.vstack([P, Q])
    D = np.linalg.norm(allpts[:, None] - allpts[None], axis=-1)
    return bool(D[np.triu_indices(len(allpts), 1)].min() > SEPARATION)
