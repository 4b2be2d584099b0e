"""Command line front end: JSON domain specs in, JSON reports, CSV tables and SVG renders out.

Exit codes: 0 when every check holds (or no violation was found), 2 when a
violation was found, 1 on any error (invalid spec, bad flags, ...).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__, exhaust, probes, shapes
from ._backend import backend_name
from .classify import classify
from .errors import SemitubeLabError, SpecError
from .fields import GridField, QuadraticField, RegularGrid
from .geometry import ImplicitDomain, pseudoconvexity_report
from .render import marching_squares, svg_document
from .semitube import HartogsLaurentDomain, SemitubeDomain, make_semitube, pi_push

log = logging.getLogger("semitube_lab")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def load_schema() -> dict:
    text = resources.files("semitube_lab").joinpath("schemas/domain_spec.schema.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# specs


def _resolve_refs(node, base_dir: Path, stack: tuple[Path, ...]):
    if isinstance(node, dict):
        if set(node) == {"$ref"}:
            path = (base_dir / node["$ref"]).resolve()
            if path in stack:
                raise SpecError(f"cyclic spec reference through {path}")
            child = json.loads(path.read_text())
            return _resolve_refs(child, path.parent, stack + (path,))
        return {k: _resolve_refs(v, base_dir, stack) for k, v in node.items()}
    if isinstance(node, list):
        return [_resolve_refs(v, base_dir, stack) for v in node]
    return node


def validate_spec(spec: dict) -> list[dict]:
    """Schema diagnostics as ``[{"path": [...], "message": ...}]`` (empty when valid)."""
    v = Draft202012Validator(load_schema())
    errs = sorted(v.iter_errors(spec), key=lambda e: list(e.absolute_path))
    return [{"path": list(e.absolute_path), "message": e.message} for e in errs]


def load_spec(source) -> dict:
    """Read, dereference (``{"$ref": "file.json"}`` children) and validate a spec."""
    if isinstance(source, dict):
        spec, base = source, Path.cwd()
        stack: tuple[Path, ...] = ()
    else:
        path = Path(source).resolve()
        try:
            spec = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}", [{"path": [], "message": str(exc)}]) from exc
        base, stack = path.parent, (path,)
    spec = _resolve_refs(spec, base, stack)
    diags = validate_spec(spec)
    if diags:
        raise SpecError("spec does not match the DomainSpec schema", diags)
    return spec


def _grid_from(d: dict) -> RegularGrid:
    return RegularGrid(np.asarray(d["origin"], dtype=np.float64), float(d["spacing"]), tuple(d["shape"]))


def build_domain(spec: dict, base_dir: Path | None = None):
    """ImplicitDomain, boolean GridField, SemitubeDomain or HartogsLaurentDomain for a validated spec."""
    kind = spec["kind"]
    if kind == "quadratic_sublevel":
        if "Q" in spec:
            Q = np.asarray(spec["Q"], dtype=np.float64)
        else:
            Q = np.diag(np.asarray(spec["diagonal"], dtype=np.float64))
        m = Q.shape[0]
        if Q.shape != (m, m):
            raise SpecError("Q must be square")
        b = np.asarray(spec.get("b", np.zeros(m)), dtype=np.float64)
        if b.shape != (m,):
            raise SpecError("b has the wrong length")
        q = QuadraticField(float(spec.get("c", 0.0)), b, Q)
        box = spec.get("box", {"lo": [-3.0] * m, "hi": [3.0] * m})
        return ImplicitDomain(q, box["lo"], box["hi"])
    if kind == "ball":
        return shapes.ball(spec.get("center", (0.0, 0.0, 0.0)), spec.get("radius", 1.0))
    if kind == "box":
        return shapes.box(spec["lo"], spec["hi"], spec.get("sharpness", shapes.DEFAULT_SHARPNESS))
    if kind == "slab_extrusion":
        kw = {k: spec[k] for k in ("interval", "radius", "rect_lo", "rect_hi", "notch", "sharpness") if k in spec}
        return shapes.slab_extrusion(spec.get("profile", "disc"), **kw)
    if kind == "torus":
        return probes.torus_base(spec.get("R_major", 1.0), spec.get("r_minor", 0.4), spec.get("orientation", "vertical"))
    if kind == "grid_mask":
        grid = _grid_from(spec["grid"])
        if "file" in spec:
            vals = np.load((base_dir or Path.cwd()) / spec["file"])
        else:
            vals = np.asarray(spec["values"])
        vals = np.asarray(vals, dtype=bool)
        if vals.shape != grid.shape:
            raise SpecError(f"mask shape {vals.shape} does not match grid shape {grid.shape}")
        return GridField(grid, vals)
    if kind in ("semitube_of", "hl_pushforward_of"):
        child = build_domain(spec["base"], base_dir)
        S = child if isinstance(child, SemitubeDomain) else make_semitube(child)
        if kind == "semitube_of":
            return S
        return pi_push(S, scan=spec.get("scan", 512))
    raise SpecError(f"unknown kind {kind!r}")


def base_of(obj) -> ImplicitDomain | GridField:
    if isinstance(obj, SemitubeDomain):
        return obj.base
    if isinstance(obj, HartogsLaurentDomain):
        raise SpecError("this command needs a base domain or a semitube, not a Hartogs-Laurent domain")
    return obj


def _implicit_base(obj) -> ImplicitDomain:
    B = base_of(obj)
    if not isinstance(B, ImplicitDomain) or B.dim != 3:
        raise SpecError("this command needs an implicit base domain in R^3")
    return B


# ---------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class Report:
    def __init__(self, command: str, args: dict, spec: dict | None, timing: bool):
        self.command = command
        self.args = {k: v for k, v in sorted(args.items())}
        self.spec = spec
        self.timing = timing
        self.checks: list[dict] = []
        self.warnings: list[str] = []
        self._t = time.perf_counter()

    def check(self, name: str, verdict: str, margin=None, witness=None, **extra):
        rec = {"name": name, "verdict": verdict, "margin": margin, "witness": witness}
        rec.update(extra)
        if self.timing:
            now = time.perf_counter()
            rec["runtime"] = now - self._t
            self._t = now
        self.checks.append(rec)

    @property
    def violation(self) -> bool:
        return any(c["verdict"] in ("fails", "found") for c in self.checks)

    def digest(self) -> str:
        payload = json.dumps({"command": self.command, "args": _jsonable(self.args), "spec": self.spec},
                             sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = {
            "tool": {"name": "semitube-lab", "version": __version__},
            "command": {"name": self.command, "args": self.args},
            "input_digest": self.digest(),
            "checks": self.checks,
            "warnings": self.warnings,
            "exit_code": EXIT_VIOLATION if self.violation else EXIT_OK,
        }
        if self.timing:
            d["backend"] = backend_name()
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "verdict", "margin"])
        for c in self.checks:
            m = c.get("margin")
            w.writerow([c["name"], c["verdict"], "" if m is None else repr(float(m))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def _rng(args):
    return np.random.default_rng(args.seed)


def cmd_classify(args, spec, obj, rep: Report):
    if isinstance(obj, HartogsLaurentDomain):
        raise SpecError("classify needs a field; Hartogs-Laurent domains have no defining function here")
    if isinstance(obj, SemitubeDomain):
        field = obj.rho
        D = obj.as_implicit_domain()
    elif isinstance(obj, GridField):
        raise SpecError("classify needs an implicit domain, not a grid mask")
    else:
        field, D = obj.rho, obj
    pts = D.uniform(_rng(args), args.samples)
    r = classify(field, pts, args.cls, tol=args.tol)
    rep.check(f"classify:{args.cls}", r.verdict.value, r.margin, r.to_dict())


def _levi(obj, args, rep: Report):
    rng = _rng(args)
    if isinstance(obj, ImplicitDomain) and obj.dim % 2 == 0:
        pr = pseudoconvexity_report(obj, args.samples, rng, args.tol)
        rep.warnings.extend(pr.warnings)
        rep.check("levi", pr.verdict.value, pr.min_levi, pr.to_dict())
        return
    B = _implicit_base(obj)
    val, pt, n = probes.semitube_levi_report(B, args.samples, rng, args.tol)
    verdict = "inconclusive" if n == 0 else ("fails" if val < -args.tol else "holds")
    rep.check("levi", verdict, val, {"argmin": pt, "n_samples": n, "tolerance": args.tol,
                                      "caveat": "sampling never proves pseudoconvexity"})


def _slices(obj, args, rep: Report):
    B = _implicit_base(obj)
    cmap = probes.slice_count_map(B, args.spacing, scan=args.scan)
    omega = pi_push(make_semitube(B), scan=args.scan)
    z = cmap.points().ravel()
    t = np.array([len(f) for f in omega.fibers(z)])
    s = cmap.counts.ravel()
    agree = bool(np.array_equal(s, t))
    hist = np.bincount(s).tolist()
    rep.check("slices", "holds" if agree else "fails", None,
              {"count_histogram": hist, "nodes": int(s.size), "mismatches": int((s != t).sum())})


def _lsc(obj, args, rep: Report):
    B = _implicit_base(obj)
    out = []
    for h in (args.spacing, args.spacing / 2):
        res = probes.lsc_violations(probes.slice_count_map(B, h, scan=args.scan))
        out.append(res)
    persistent = len(out[0]) > 0 and len(out[1]) > 0
    inconclusive = any(len(r.inconclusive) for r in out)
    verdict = "fails" if persistent else ("inconclusive" if inconclusive else "holds")
    wit = {f"h={r.spacing:g}": {"violations": len(r), "inconclusive": len(r.inconclusive),
                                "candidates": r.n_candidates,
                                "first": r.violations[:10].tolist()} for r in out}
    rep.check("lsc", verdict, None, wit)


def cmd_check_domain(args, spec, obj, rep: Report):
    tests = ["levi", "slices", "lsc"] if args.test == "all" else [args.test]
    for t in tests:
        {"levi": _levi, "slices": _slices, "lsc": _lsc}[t](obj, args, rep)


def _exhaust_grid(spec, B, n: int) -> RegularGrid:
    if "grid" in spec:
        return _grid_from(spec["grid"])
    lo, hi = B.lo, B.hi
    h = float(np.max(hi - lo)) / (n - 1)
    return RegularGrid.covering(lo, hi, h)


def cmd_exhaust(args, spec, obj, rep: Report):
    if isinstance(obj, HartogsLaurentDomain):
        raise SpecError("exhaust needs a semitube or a base domain")
    S = obj if isinstance(obj, SemitubeDomain) else make_semitube(obj)
    B = S.base
    grid = B.grid if isinstance(B, GridField) else _exhaust_grid(spec, B, args.grid)
    if args.basepoint is not None:
        bp = np.asarray(args.basepoint, dtype=np.float64)
    else:
        d = exhaust.distance_from_u(exhaust.build_u(S, grid))
        bp = grid.point(np.unravel_index(int(np.argmax(d.values)), grid.shape))
    with warnings.catch_warnings():
        # the truncation warning is carried in seq.warnings
        warnings.simplefilter("ignore", exhaust.StageTruncationWarning)
        seq = exhaust.build_exhaustion(S, bp, args.stages, grid)
    rep.warnings.extend(seq.warnings)
    rng = _rng(args)
    rows = []
    for k, st in enumerate(seq.stages):
        r = seq.verify(k, samples=args.samples, rng=rng)
        rows.append(r)
        rep.check(f"stage[{k}]", "holds" if r.ok else "fails", r.min_levi_eig - r.kappa, r.to_dict(),
                  nodes=int(st.component.sum()), enforced_nodes=st.enforced_nodes)
    deltas = [s.delta for s in seq.stages]
    dec = all(a > b for a, b in zip(deltas, deltas[1:]))
    rep.check("delta_decreasing", "holds" if dec else "fails", None, {"deltas": deltas})
    rep.check("nesting", "holds" if seq.nested() else "fails", None,
              {"enforced": [s.enforced_nodes for s in seq.stages]})
    if isinstance(B, ImplicitDomain) and seq.stages:
        pts = B.inside_points(rng, args.coverage)
        eligible = seq.distance.value(pts) > seq.coverage_threshold()
        cov = seq.covered(pts[eligible]) if eligible.any() else np.ones(0, dtype=bool)
        rep.check("coverage", "holds" if cov.all() else "fails", float(cov.mean()) if cov.size else None,
                  {"tested": int(eligible.sum()), "drawn": len(pts), "uncovered": int((~cov).sum()),
                   "rule": "points with grid distance > 2 * finest eps + sqrt(3) h / 2",
                   "threshold": seq.coverage_threshold()})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(out / "stages.npz", origin=grid.origin, spacing=grid.spacing,
                            eps=np.array([s.eps for s in seq.stages]),
                            delta=np.array(deltas),
                            components=np.stack([s.component for s in seq.stages]) if seq.stages
                            else np.zeros((0,) + grid.shape, dtype=bool))
        with open(out / "stages.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "eps", "delta", "nodes", "min_levi_eig", "kappa", "containment", "ok"])
            for k, (st, r) in enumerate(zip(seq.stages, rows)):
                w.writerow([k, repr(st.eps), repr(st.delta), int(st.component.sum()),
                            repr(r.min_levi_eig), repr(r.kappa), r.containment, r.ok])


def cmd_orbit(args, spec, obj, rep: Report):
    if isinstance(obj, SemitubeDomain):
        obj = obj.base
    if not isinstance(obj, ImplicitDomain):
        raise SpecError("orbit needs an implicit domain")
    res = probes.orbit_search(obj, args.budget, _rng(args), levi_samples=args.samples, tol=args.tol)
    if res is None:
        rep.check("orbit", "holds", None, {"budget": args.budget, "found": None})
    else:
        rep.check("orbit", "fails", None, res.to_dict(), mechanism=res.mechanism.value)


def cmd_counterexample(args, spec, obj, rep: Report):
    r = probes.counterexample_suite(args.n, args.alpha, args.trials, _rng(args), args.samples, args.tol,
                                    args.oracle_trials)
    d = r.to_dict()
    rep.check("witness", "holds" if r.witness_ok else "fails", None, d["witness"])
    exact = abs(r.msh_margin - r.expected_margin) <= 1e-10
    rep.check("msh_margin", "holds" if exact and r.msh_margin >= 0 else "fails", r.msh_margin,
              {"expected": r.expected_margin, "oracle": r.oracle_margin})
    rep.check("levi_orbit", "holds" if r.all_pseudoconvex else "fails", r.min_levi,
              {"trials": args.trials, "sample_counts": r.sample_counts})
    rep.check("connected", "holds" if r.connected else "fails", None, None)


def _plane_axes(plane: str):
    try:
        name, val = plane.split("=")
        axis = {"x1": 0, "x2": 1, "x3": 2}[name.strip()]
        return axis, float(val)
    except (ValueError, KeyError) as exc:
        raise SpecError(f"bad --plane {plane!r}; use e.g. x3=0.5") from exc


def cmd_render(args, spec, obj, rep: Report):
    axis, val = _plane_axes(args.plane)
    keep = [k for k in range(3) if k != axis]
    layers = []
    if args.stages:
        data = np.load(args.stages)
        origin, h = data["origin"], float(data["spacing"])
        comps = data["components"]
        k = int(round((val - origin[axis]) / h))
        if not 0 <= k < comps.shape[1 + axis]:
            raise SpecError("plane outside the stage grid")
        xs = origin[keep[0]] + h * np.arange(comps.shape[1 + keep[0]])
        ys = origin[keep[1]] + h * np.arange(comps.shape[1 + keep[1]])
        for s in range(comps.shape[0]):
            sl = np.take(comps[s], k, axis=axis).astype(np.float64)
            layers.append((f"stage {s} eps={float(data['eps'][s]):.4g}", marching_squares(0.5 - sl, xs, ys)))
        bounds = (xs[0], xs[-1], ys[0], ys[-1])
    else:
        B = _implicit_base(obj) if not isinstance(obj, ImplicitDomain) or obj.dim != 3 else obj
        if not B.lo[axis] <= val <= B.hi[axis]:
            raise SpecError("plane outside the domain box")
        n = args.resolution
        xs = np.linspace(B.lo[keep[0]], B.hi[keep[0]], n)
        ys = np.linspace(B.lo[keep[1]], B.hi[keep[1]], n)
        P = np.zeros((n, n, 3))
        P[..., keep[0]] = xs[:, None]
        P[..., keep[1]] = ys[None, :]
        P[..., axis] = val
        layers.append(("boundary", marching_squares(B.rho.value(P), xs, ys)))
        bounds = (xs[0], xs[-1], ys[0], ys[-1])
    svg = svg_document(layers, bounds, title=f"slice {args.plane}")
    Path(args.out).write_text(svg)
    rep.check("render", "holds", None, {"out": str(args.out), "segments": [len(s) for _, s in layers]})


COMMANDS = {
    "classify": cmd_classify,
    "check-domain": cmd_check_domain,
    "exhaust": cmd_exhaust,
    "orbit": cmd_orbit,
    "counterexample": cmd_counterexample,
    "render": cmd_render,
}


class UsageError(SemitubeLabError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; 2 is reserved for violations here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semitube-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="rng seed (defaults to the input file's seed, else 0)")
    common.add_argument("--out", help="output path (report JSON; a directory for exhaust artifacts)")
    common.add_argument("--report", help="write the JSON report here instead of stdout")
    common.add_argument("--csv", help="also write the per-check table as CSV")
    common.add_argument("--timing", action="store_true", help="include runtimes (reports stop being byte-stable)")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="test a defining function against a class")
    c.add_argument("spec")
    c.add_argument("--class", dest="cls", required=True, choices=["convex", "subharmonic", "psh", "msh"])
    c.add_argument("--samples", type=int, default=200)

    c = sub.add_parser("check-domain", parents=[common], help="Levi form, slice counts and lsc tests")
    c.add_argument("spec")
    c.add_argument("--test", choices=["levi", "slices", "lsc", "all"], default="all")
    c.add_argument("--samples", type=int, default=500)
    c.add_argument("--spacing", type=float, default=0.05)
    c.add_argument("--scan", type=int, default=256)

    c = sub.add_parser("exhaust", parents=[common], help="build and verify an exhaustion")
    c.add_argument("spec")
    c.add_argument("--stages", type=int, default=4)
    c.add_argument("--grid", type=int, default=64, help="nodes along the longest box side")
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--coverage", type=int, default=1000)
    c.add_argument("--basepoint", type=float, nargs=3, default=None)

    c = sub.add_parser("orbit", parents=[common], help="isometry-orbit falsification search")
    c.add_argument("spec")
    c.add_argument("--budget", type=int, default=100)
    c.add_argument("--samples", type=int, default=500)

    c = sub.add_parser("counterexample", parents=[common], help="quadric counterexample suite")
    c.add_argument("--n", type=int, default=2)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--trials", type=int, default=50)
    c.add_argument("--samples", type=int, default=500)
    c.add_argument("--oracle-trials", type=int, default=100_000)

    c = sub.add_parser("render", parents=[common], help="SVG contour of a planar slice")
    c.add_argument("spec", nargs="?")
    c.add_argument("--plane", default="x3=0")
    c.add_argument("--stages", help="stages.npz written by 'exhaust --out'")
    c.add_argument("--resolution", type=int, default=200)
    return p


_TOL_DEFAULTS = {"classify": None, "check-domain": 1e-7, "orbit": 1e-7, "counterexample": 1e-7}


def run(argv=None) -> tuple[int, Report | None]:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.tol is None:
        args.tol = _TOL_DEFAULTS.get(args.command)
    spec = obj = None
    spec_path = getattr(args, "spec", None)
    if args.command == "render" and spec_path is None and not args.stages:
        raise SpecError("render needs a spec or --stages")
    if args.command == "render" and args.out is None:
        raise SpecError("render needs --out")
    if spec_path:
        spec = load_spec(spec_path)
        obj = build_domain(spec, Path(spec_path).resolve().parent)
    if args.seed is None:
        args.seed = int(spec.get("seed", 0)) if spec else 0
    echo = {k: v for k, v in vars(args).items() if k not in ("verbose", "report", "csv", "timing")}
    rep = Report(args.command, echo, spec, args.timing)
    COMMANDS[args.command](args, spec, obj, rep)
    text = rep.to_json()
    target = args.report or (args.out if args.command in ("classify", "check-domain", "orbit", "counterexample")
                             else None)
    if target:
        Path(target).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return (EXIT_VIOLATION if rep.violation else EXIT_OK), rep


def main(argv=None) -> int:
    try:
        code, _ = run(argv)
    except SpecError as exc:
        diag = {"error": "spec", "message": str(exc), "details": getattr(exc, "details", None) or []}
        sys.stderr.write(json.dumps(_jsonable(diag), sort_keys=True) + "\n")
        return EXIT_ERROR
    except UsageError as exc:
        sys.stderr.write(build_parser().format_usage() + str(exc) + "\n")
        return EXIT_ERROR
    except (SemitubeLabError, OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True) + "\n")
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
