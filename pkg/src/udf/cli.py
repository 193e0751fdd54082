"""Command-line entry point: ``udf construct | compose | kdm | verify-lemmas | replay``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import tempfile
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .constants import DEFAULT_TOLERANCES
from .errors import NormSpecError, UDFError
from .norms import parse_norm_spec, strict_convexity_probe, to_jsonable

SCHEMA = "udf/1"
SVG_MAX_POINTS = 20000


class UsageError(Exception):
    """Bad input: reported with exit status 2."""


def _dump(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


class Outputs:
    """Writes artifacts and remembers their digests."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.digests = {}

    def write(self, name: str, text: str):
        data = text.encode()
        (self.dir / name).write_bytes(data)
        self.digests[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj):
        self.write(name, _dump(obj))


def _tolerances(args) -> dict:
    return {"tau": args.tol_tau, "eps_bnd": args.tol_eps_bnd,
            "eps_unit": args.tol_eps_unit, "tau_tan": args.tol_tau_tan}


def _norm(args):
    if args.d < 1:
        raise UsageError(f"--d must be positive, got {args.d}")
    try:
        return parse_norm_spec(args.norm, args.d)
    except NormSpecError as exc:
        raise UsageError(f"cannot parse norm spec {args.norm!r}: {exc}") from exc


def _frac(x):
    return None if x is None else {"num": x.numerator, "den": x.denominator, "value": float(x)}


# ---------------------------------------------------------------------------
# SVG

def svg_plot(points: np.ndarray, norm=None, size: int = 480) -> str:
    """Scatter of a planar point set, with the unit sphere drawn around the first point."""
    P = np.asarray(points, dtype=float)
    if len(P) > SVG_MAX_POINTS:
        # diagnostic only: a regular subsample keeps the file small
        P = P[::math.ceil(len(P) / SVG_MAX_POINTS)]
    lo, hi = P.min(axis=0), P.max(axis=0)
    curve = None
    if norm is not None and len(P):
        th = np.linspace(0, 2 * np.pi, 361)
        U = np.stack([np.cos(th), np.sin(th)], axis=1)
        curve = P[0] + U / norm.gauge(U)[:, None]
        lo, hi = np.minimum(lo, curve.min(axis=0)), np.maximum(hi, curve.max(axis=0))
    span = max(float(np.max(hi - lo)), 1e-12)
    pad = 10

    def tx(X):
        X = (X - lo) / span * (size - 2 * pad) + pad
        return np.stack([X[:, 0], size - X[:, 1]], axis=1)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', '<rect width="100%" height="100%" fill="white"/>']
    if curve is not None:
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in tx(curve))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#c33" stroke-width="1"/>')
    r = 1.5 if len(P) < 5000 else 0.6
    for x, y in tx(P):
        out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r}" fill="#124"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# construct

def cmd_construct(args, out: Outputs) -> tuple:
    from .construct import proposition_spec, realize_directions, verify_non_overlapping
    from .construct2d import warmup_gapspec
    from .gap import PAIRWISE_CAP, count_directional, count_pairwise, materialize

    norm = _norm(args)
    if args.d < 2:
        raise UsageError("construct needs --d >= 2")
    if args.m is None or args.m < 1:
        raise UsageError("construct needs --m >= 1")
    tol = _tolerances(args)
    if args.method == "warmup":
        if args.d != 2:
            raise UsageError("the warmup method is planar: use --d 2")
        spec = warmup_gapspec(norm, args.m)
    else:
        spec = proposition_spec(norm, args.m, seed=args.seed, eps_bnd=tol["eps_bnd"],
                                tau_tan=tol["tau_tan"])
    realize_directions(norm, spec, tol["eps_bnd"])
    overlap = verify_non_overlapping(spec)
    ps = materialize(spec, tau=tol["tau"])
    rep = count_directional(ps)
    if args.pairwise and len(ps) <= PAIRWISE_CAP:
        rep.pairwise_total = count_pairwise(ps, norm, tol["eps_unit"])

    m, d = args.m, args.d
    checks = {
        "directions_on_sphere": True,
        "non_overlapping": overlap.ok,
        "size_bound": len(ps) <= 2 ** m * m ** (3 * (d - 1)),
        "grid_bound": rep.total >= math.ceil(rep.lemma_bound),
        "proposition_bound": rep.total >= math.ceil(rep.prop_bound),
    }
    if rep.pairwise_total is not None:
        checks["pairwise_dominates"] = rep.pairwise_total >= rep.total
    report = rep.to_json()
    report.update({"tolerances": tol, "checks": checks, "norm": norm.spec,
                   "overlap": {"ok": overlap.ok, "case": overlap.case}})
    out.json("gapspec.json", spec.to_json())
    out.write("points.csv", ps.to_csv())
    out.json("report.json", report)
    if d == 2 and not args.no_svg:
        out.write("points.svg", svg_plot(ps.points, norm))
    print(f"|S| = {len(ps)}  total = {rep.total}  grid bound = {float(rep.lemma_bound):.1f}  "
          f"d(m-2)|S|/2 = {float(rep.prop_bound):.1f}")
    for k, v in checks.items():
        print(f"  {k}: {'ok' if v else 'FAIL'}")
    return all(checks.values()), {"m": m}


# ---------------------------------------------------------------------------
# compose

def cmd_compose(args, out: Outputs) -> tuple:
    from .composer import (SizeTable, compose_pointset, degenerate_construction,
                           ratio_csv, ratio_json, ratio_report)

    ns = args.n or []
    if not ns or any(n < 1 for n in ns):
        raise UsageError("compose needs --n with positive sizes")
    norm = _norm(args)
    tol = _tolerances(args)
    strict = norm.strict
    verdict = None
    if strict is None:
        verdict = strict_convexity_probe(norm, seed=args.seed)
        strict = verdict.kind != "segment"

    if not strict:
        if verdict is None:
            verdict = strict_convexity_probe(norm, seed=args.seed)
        if verdict.kind != "segment":
            raise UsageError("norm is flagged non-strict but no boundary segment was found")
        rows = []
        ok = True
        for n in ns:
            if n % 2:
                raise UsageError("the segment construction needs even --n")
            ps, count = degenerate_construction(norm, n, verdict, tau=tol["tau"])
            good = count >= n * n // 4
            ok = ok and good
            rows.append({"n": n, "count": count, "quarter_n_squared": n * n // 4, "ok": good})
            out.write(f"points-{n}.csv", ps.to_csv())
            print(f"n = {n}: {count} unit distances (n^2/4 = {n * n // 4})")
        out.json("report.json", {"schema": SCHEMA, "type": "DegenerateReport",
                                 "norm": norm.spec, "tolerances": tol, "rows": rows,
                                 "segment": {"midpoint": verdict.midpoint, "half": verdict.half}})
        return ok, {"n": ns, "route": "degenerate"}

    table = SizeTable(norm, seed=args.seed)
    ok = True
    for n in ns:
        ps, rep = compose_pointset(norm, n, seed=args.seed, table=table, tau=tol["tau"])
        good = len(ps) == n and rep.total >= rep.table_bound
        ok = ok and good
        body = rep.to_json()
        body.pop("per_direction")
        body.update({"tolerances": tol, "norm": norm.spec, "ok": good})
        out.json(f"report-{n}.json", body)
        out.write(f"points-{n}.csv", ps.to_csv())
        if norm.dim == 2 and not args.no_svg:
            out.write(f"points-{n}.svg", svg_plot(ps.points))
    rows = ratio_report(norm, ns, seed=args.seed, table=table)
    out.write("ratio.csv", ratio_csv(rows))
    out.json("ratio.json", ratio_json(rows) | {"tolerances": tol})
    out.json("sizetable.json", table.to_json())
    for r in rows:
        print(f"n = {r.n}: total = {r.total}  ratio = {r.ratio:.4f}  target = {r.target}"
              + ("  (drop)" if r.flagged else ""))
    return ok, {"n": ns, "route": "gap"}


# ---------------------------------------------------------------------------
# kdm

def cmd_kdm(args, out: Outputs) -> tuple:
    from .kdm import (DELTA_MAX, build_model, perturb_and_persist, solve_intersections,
                      trial_seeds, verify_kdm)

    if args.d < 3:
        raise UsageError(f"the local model needs --d >= 3, got {args.d}")
    if args.n is not None:
        n = args.n[0]
    elif args.m is not None:
        n = math.ceil(args.m / 2)
    else:
        raise UsageError("kdm needs --m or --n")
    if n < 1:
        raise UsageError("need a positive size")
    if not 0 <= args.delta <= DELTA_MAX:
        raise UsageError(f"--delta must lie in [0, {DELTA_MAX}]")
    model = build_model(args.d, n)
    cert = solve_intersections(model)
    verified = verify_kdm(cert, model)
    persisted = perturb_and_persist(model, args.delta, args.trials, args.seed, cert=cert)
    body = cert.to_json()
    body.update({"h": model.h, "delta": args.delta, "trial_seeds": trial_seeds(args.seed, args.trials),
                 "verified": verified, "tolerances": _tolerances(args)})
    out.json("kdm.json", body)
    print(f"K_{{{args.d},{2 * n}}}: verified = {verified}, persisted at delta = {args.delta:g}: "
          f"{persisted}, min |det| = {np.min(np.abs(cert.jac_dets)):.3e}")
    return verified and persisted, {"n": n}


# ---------------------------------------------------------------------------
# verify-lemmas

def _sumset_instance(rng):
    d = int(rng.integers(1, 4))
    size = int(rng.integers(1, 51))
    X = sorted({tuple(int(v) for v in rng.integers(-6, 7, size=d)) for _ in range(size)})
    x = tuple(int(v) for v in rng.integers(-3, 4, size=d))
    k = int(rng.integers(2, 13))
    c = int(rng.integers(2, k + 1))
    return {"X": X, "x": x, "k": k, "c": c}


def _sumset_fails(inst) -> bool:
    from .gap import sumset_ratio_check
    return not sumset_ratio_check(inst["X"], inst["x"], inst["k"], inst["c"])


def _grid_instance(rng):
    d = int(rng.integers(1, 4))
    g = int(rng.integers(1, 5))
    gens = [[int(v) for v in rng.integers(-2, 3, size=d)] for _ in range(g)]
    ranges = [int(rng.integers(1, 6)) for _ in range(g)]
    code = [int(rng.integers(0, k + 1)) for k in ranges]
    return {"generators": gens, "ranges": ranges, "code": code}


def _grid_counts(inst):
    """Exact ``(count, bound)`` for one code on an integer GAP."""
    import itertools
    gens, ranges, code = inst["generators"], inst["ranges"], inst["code"]
    d = len(gens[0])
    S = set()
    for a in itertools.product(*[range(k) for k in ranges]):
        S.add(tuple(sum(ai * v[t] for ai, v in zip(a, gens)) for t in range(d)))
    u = tuple(sum(ci * v[t] for ci, v in zip(code, gens)) for t in range(d))
    count = sum(1 for s in S if tuple(si + ui for si, ui in zip(s, u)) in S)
    bound = Fraction(len(S))
    for ci, k in zip(code, ranges):
        bound *= max(Fraction(0), 1 - Fraction(ci, k))
    return count, bound


def _grid_fails(inst) -> bool:
    count, bound = _grid_counts(inst)
    return count < math.ceil(bound)


def _minimize(inst, fails, key):
    """Drop list entries under ``key`` while the instance keeps failing."""
    changed = True
    while changed:
        changed = False
        for i in range(len(inst[key])):
            trial = dict(inst)
            trial[key] = inst[key][:i] + inst[key][i + 1:]
            if trial[key] and fails(trial):
                inst, changed = trial, True
                break
    return inst


def cmd_verify_lemmas(args, out: Outputs) -> tuple:
    if args.budget < 0:
        raise UsageError("--budget must be non-negative")
    cases = ["sumset", "grid"] if args.cases == "all" else [args.cases]
    rng = np.random.default_rng(args.seed)
    results = {}
    bad = []
    for case in cases:
        make, fails, key = ((_sumset_instance, _sumset_fails, "X") if case == "sumset"
                            else (_grid_instance, _grid_fails, None))
        t0 = time.perf_counter()
        passed = 0
        for _ in range(args.budget):
            inst = make(rng)
            if fails(inst):
                if key:
                    inst = _minimize(inst, fails, key)
                bad.append({"case": case, "instance": inst})
            else:
                passed += 1
        results[case] = {"instances": args.budget, "passed": passed,
                         "seconds": round(time.perf_counter() - t0, 3)}
        print(f"{case}: {passed}/{args.budget} instances satisfy the inequality")
    report = {"schema": SCHEMA, "type": "LemmaFuzz", "seed": args.seed,
              "results": {k: {"instances": v["instances"], "passed": v["passed"]}
                          for k, v in results.items()},
              "counterexamples": bad}
    out.json("lemmas.json", report)
    for b in bad:
        print(f"counterexample ({b['case']}): {json.dumps(b['instance'])}")
    return not bad, {"budget": args.budget, "cases": cases}


# ---------------------------------------------------------------------------
# driver

COMMANDS = {
    "construct": cmd_construct,
    "compose": cmd_compose,
    "kdm": cmd_kdm,
    "verify-lemmas": cmd_verify_lemmas,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="udf", description="Unit-distance constructions "
                                 "for normed spaces.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--norm", default="lp:2",
                       help="lp:P, l1, l2, linf, perturbed_lp:P[:DELTA[:SEED]] or JSON")
        p.add_argument("--d", type=int, default=2)
        p.add_argument("--m", type=int)
        p.add_argument("--n", type=int, nargs="+")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--delta", type=float, default=1e-3)
        p.add_argument("--out-dir", default="udf-out")
        p.add_argument("--no-svg", action="store_true")
        p.add_argument("--tol-tau", type=float, default=DEFAULT_TOLERANCES["tau"])
        p.add_argument("--tol-eps-bnd", type=float, default=DEFAULT_TOLERANCES["eps_bnd"])
        p.add_argument("--tol-eps-unit", type=float, default=DEFAULT_TOLERANCES["eps_unit"])
        p.add_argument("--tol-tau-tan", type=float, default=DEFAULT_TOLERANCES["tau_tan"])

    p = sub.add_parser("construct", help="build one certified GAP and count its unit distances")
    common(p)
    p.add_argument("--method", choices=["general", "warmup"], default="general")
    p.add_argument("--pairwise", action="store_true", help="also run the brute-force counter")

    p = sub.add_parser("compose", help="n-point sets from translated blocks")
    common(p)

    p = sub.add_parser("kdm", help="complete bipartite local model (d >= 3)")
    common(p)
    p.set_defaults(d=3)
    p.add_argument("--trials", type=int, default=5)

    p = sub.add_parser("verify-lemmas", help="fuzz the two counting lemmas")
    common(p)
    p.add_argument("--cases", choices=["sumset", "grid", "all"], default="all")
    p.add_argument("--budget", type=int, default=1000)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None)
    return ap


def _run(args, argv) -> int:
    out = Outputs(args.out_dir)
    started = datetime.now(timezone.utc).isoformat()
    try:
        ok, extra = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"udf {args.command}: {exc}", file=sys.stderr)
        return 2
    except (UDFError, ValueError) as exc:
        if isinstance(exc, ValueError) and not isinstance(exc, UDFError):
            print(f"udf {args.command}: {exc}", file=sys.stderr)
            return 2
        print(f"udf {args.command}: certificate failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    manifest = {
        "schema": SCHEMA, "type": "RunManifest", "version": __version__,
        "command": args.command, "argv": list(argv),
        "norm": getattr(args, "norm", None), "d": getattr(args, "d", None),
        "m": getattr(args, "m", None), "n": getattr(args, "n", None), "seed": args.seed,
        "tolerances": _tolerances(args), "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "ok": bool(ok), "outputs": dict(sorted(out.digests.items())), **extra,
    }
    (out.dir / "manifest.json").write_text(_dump(manifest))
    return 0 if ok else 1


def _strip_out_dir(argv):
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out-dir":
            skip = True
            continue
        if a.startswith("--out-dir="):
            continue
        res.append(a)
    return res


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        print(f"udf replay: cannot read manifest: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out_dir or tempfile.mkdtemp(prefix="udf-replay-")
    argv = _strip_out_dir(manifest["argv"]) + ["--out-dir", out_dir]
    code = main(argv)
    fresh = json.loads((Path(out_dir) / "manifest.json").read_text()) if code != 2 else {}
    same = fresh.get("outputs") == manifest["outputs"]
    for name, digest in manifest["outputs"].items():
        now = fresh.get("outputs", {}).get(name)
        print(f"  {name}: {'same' if now == digest else 'DIFFERENT'}")
    print(f"replay into {out_dir}: {'identical' if same else 'outputs differ'}")
    return 0 if same else 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        return cmd_replay(args)
    return _run(args, argv)


if __name__ == "__main__":
    sys.exit(main())
