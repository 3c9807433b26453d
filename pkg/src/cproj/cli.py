"""Command-line front end: ``cproj {curvature,metrise,solve-flat,geodesic}``.

Every command writes one JSON report ``{command, input_digest, results,
diagnostics}``.  Exit codes: 0 success, 2 invalid input, 3 evaluation domain
error, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .curvature import VANISH_TOL, classify
from .expr import DomainError, ParseError, parse
from .geodesics import GeodesicDomainError, integrate_geodesic, wedge_residual
from .metrisability import (
    COMPAT_TOL,
    HOLONOMY_TOL,
    HermitianForm3,
    metric_from_h,
    metrise,
    solve_flat,
)
from .prolongation import DEFAULT_STEPS, ChartPath, InvariantBreachError
from .report import dumps
from .structure import (
    KAHLER_TOL,
    DegenerateMetricError,
    HermitianMetricField,
    ProjectiveStructure,
    StructureError,
    default_grid,
    levi_civita,
    project,
)

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN, EXIT_INVARIANT = 0, 2, 3, 4

PI_KEYS = [f"Pi{i}_{j}{k}" for i in (1, 2) for j in (1, 2) for k in (1, 2)]
METRIC_KEYS = ("g11", "g12", "g21", "g22")
TOLERANCE_KEYS = ("vanish", "trace", "kahler", "holonomy", "compatibility")


class InputError(ValueError):
    """Invalid command-line or problem-file input (exit code 2)."""


@dataclass
class Problem:
    kind: str
    pi: ProjectiveStructure
    metric: HermitianMetricField | None
    samples: np.ndarray
    basepoint: np.ndarray | None
    loops: list[ChartPath] | None
    tolerances: dict
    raw: bytes


# ------------------------------------------------------------------ parsing


def _point(values, what: str) -> np.ndarray:
    try:
        vals = [float(x) for x in values]
    except (TypeError, ValueError):
        raise InputError(f"{what}: expected 4 real numbers") from None
    if len(vals) != 4 or not np.isfinite(vals).all():
        raise InputError(f"{what}: expected 4 finite real numbers (Re z1, Im z1, Re z2, Im z2)")
    return np.array([vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]])


def _expressions(block: Any, keys: Sequence[str], what: str, required: Sequence[str]) -> dict:
    if not isinstance(block, dict):
        raise InputError(f"{what}: expected an object")
    unknown = sorted(set(block) - set(keys))
    if unknown:
        raise InputError(f"{what}: unknown entries {unknown}")
    missing = [k for k in required if k not in block]
    if missing:
        raise InputError(f"{what}: missing entries {missing}")
    out = {}
    for key, text in block.items():
        if not isinstance(text, str):
            raise InputError(f"{what}.{key}: expected an expression string")
        try:
            out[key] = parse(text)
        except ParseError as exc:
            raise InputError(f"{what}.{key}: {exc}") from None
    return out


def load_problem(path: str, grid: int, tol: float | None) -> Problem:
    try:
        raw = Path(path).read_bytes() if path != "-" else sys.stdin.buffer.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not a valid UTF-8 JSON document ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    known = {"metric", "pi", "samples", "basepoint", "loops", "tolerances"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise InputError(f"unknown top-level entries {unknown}")
    if ("metric" in doc) == ("pi" in doc):
        raise InputError('exactly one of "metric" and "pi" must be given')

    tols = {"vanish": VANISH_TOL, "trace": 1e-9, "kahler": KAHLER_TOL, "holonomy": HOLONOMY_TOL, "compatibility": COMPAT_TOL}
    overrides = doc.get("tolerances", {})
    if not isinstance(overrides, dict) or set(overrides) - set(TOLERANCE_KEYS):
        raise InputError(f"tolerances: expected an object with keys among {list(TOLERANCE_KEYS)}")
    for key, value in overrides.items():
        if not isinstance(value, (int, float)) or not value > 0:
            raise InputError(f"tolerances.{key}: expected a positive number")
        tols[key] = float(value)
    if tol is not None:
        tols["vanish"] = tol

    if "samples" in doc:
        if not isinstance(doc["samples"], list) or not doc["samples"]:
            raise InputError("samples: expected a non-empty list of 4-real points")
        samples = np.array([_point(p, f"samples[{n}]") for n, p in enumerate(doc["samples"])])
    else:
        samples = default_grid(grid)
    basepoint = _point(doc["basepoint"], "basepoint") if "basepoint" in doc else None
    loops = None
    if "loops" in doc:
        if not isinstance(doc["loops"], list):
            raise InputError("loops: expected a list of point lists")
        loops = []
        for n, lp in enumerate(doc["loops"]):
            if not isinstance(lp, list) or len(lp) < 3:
                raise InputError(f"loops[{n}]: expected at least 3 points")
            pts = [_point(p, f"loops[{n}][{m}]") for m, p in enumerate(lp)]
            try:
                path = ChartPath.polyline(pts)
            except ValueError as exc:
                raise InputError(f"loops[{n}]: {exc}") from None
            if not path.is_closed:
                raise InputError(f"loops[{n}]: first and last points must coincide")
            loops.append(path)

    metric = None
    try:
        if "pi" in doc:
            exprs = _expressions(doc["pi"], PI_KEYS, "pi", [])
            pi = ProjectiveStructure(exprs, samples=samples, tol=tols["trace"])
            kind = "pi"
        else:
            e = _expressions(doc["metric"], METRIC_KEYS, "metric", ["g11", "g12", "g22"])
            metric = HermitianMetricField(e["g11"], e["g12"], e["g22"], e.get("g21"))
            herm = metric.hermiticity_residual(samples)
            if herm > tols["kahler"]:
                raise InputError(f"metric: g21 is not conj(g12) (residual {herm:.3e})")
            pi = project(levi_civita(metric, samples, tols["kahler"]))
            kind = "metric"
    except StructureError as exc:
        raise InputError(f"{'pi' if 'pi' in doc else 'metric'}: {exc}") from None
    return Problem(kind, pi, metric, samples, basepoint, loops, tols, raw)


def _digest(raw: bytes, options: dict) -> str:
    h = hashlib.sha256(raw)
    h.update(b"\0")
    h.update(json.dumps(options, sort_keys=True).encode())
    return h.hexdigest()


# ----------------------------------------------------------------- commands


def _skipped(points) -> list:
    return [list(p) for p in points]


def cmd_curvature(args) -> tuple[dict, dict, str]:
    prob = load_problem(args.file, args.grid, args.tol)
    cls = classify(prob.pi, prob.samples, prob.tolerances["vanish"])
    data = prob.pi.gauge_data(prob.samples)
    ok = data.finite()
    per_point = [
        {"point": data.points[n], "W": data.weyl[n], "K": data.k[n], "L": data.liouville[n]}
        for n in np.flatnonzero(ok)
    ]
    results = {
        "input": prob.kind,
        "classification": {
            "label": cls.label,
            "weyl_flat": cls.weyl_flat,
            "liouville_flat": cls.liouville_flat,
            "flat": cls.flat,
            "weyl_sup": cls.weyl_sup,
            "k_sup": cls.k_sup,
            "liouville_sup": cls.liouville_sup,
            "tol": cls.tol,
        },
        "samples": per_point,
    }
    diagnostics = {"n_samples": cls.n_samples, "skipped": _skipped(cls.skipped)}
    return results, diagnostics, _digest(prob.raw, {"grid": args.grid, "tol": args.tol})


def cmd_metrise(args) -> tuple[dict, dict, str]:
    prob = load_problem(args.file, args.grid, args.tol)
    if prob.basepoint is None:
        raise InputError("basepoint: required for metrise")
    if np.abs(prob.samples - prob.basepoint).max(axis=1).min() > 1e-12:
        raise InputError("basepoint: must be one of the samples")
    t = prob.tolerances
    rep = metrise(
        prob.pi,
        prob.samples,
        prob.basepoint,
        prob.loops,
        tol=t["vanish"],
        holonomy_tol=t["holonomy"],
        compat_tol=t["compatibility"],
        steps=args.steps,
    )
    candidates = []
    for c in rep.candidates:
        entry = {
            "representative": c.representative,
            "degenerate": c.degenerate,
            "hmat": c.state.hmat,
            "hvec": c.state.hvec,
            "hscal": c.state.hscal,
        }
        if c.metric_values is not None:
            entry["compatibility_residual"] = c.compatibility_residual
            entry["kahler_residual"] = c.kahler_residual
            entry["metric"] = c.metric_values
        candidates.append(entry)
    results = {
        "verdict": rep.verdict,
        "stage": rep.stage,
        "message": rep.message,
        "basepoint": rep.basepoint,
        "liouville": {"sup": rep.liouville_sup, "at_basepoint": list(rep.liouville_at_basepoint)},
        "weyl_sup": rep.weyl_sup,
        "algebraic": {
            "dimension": rep.algebraic_dimension,
            "basis": rep.algebraic_basis,
            "failures": _skipped(rep.algebraic_failures),
        },
        "holonomy_defects": rep.holonomy_defects,
        "candidate_dimension": rep.candidate_dimension,
        "candidates": candidates,
        "samples": rep.samples,
    }
    diagnostics = {"skipped": _skipped(rep.skipped), "steps": args.steps, "tolerances": t}
    return results, diagnostics, _digest(prob.raw, {"grid": args.grid, "tol": args.tol, "steps": args.steps})


def _hermitian_from_file(path: str) -> tuple[np.ndarray, bytes]:
    try:
        raw = Path(path).read_bytes()
        doc = json.loads(raw.decode("utf-8"))
        C = np.array([[complex(*entry) for entry in row] for row in doc["C"]])
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f'{path}: expected {{"C": 3x3 array of [re, im] pairs}} ({exc})') from None
    if C.shape != (3, 3):
        raise InputError(f"{path}: C must be 3x3")
    return C, raw


def cmd_solve_flat(args) -> tuple[dict, dict, str]:
    if (args.c is None) == (args.c_file is None):
        raise InputError("give exactly one of --c and --c-file")
    try:
        if args.c is not None:
            form = HermitianForm3.from_reals(args.c)
            raw = json.dumps(args.c).encode()
        else:
            C, raw = _hermitian_from_file(args.c_file)
            form = HermitianForm3(C)
    except ValueError as exc:
        raise InputError(f"C: {exc}") from None
    points = [_point(p, "--point") for p in (args.point or [[0, 0, 0, 0]])]
    per_point = []
    for p in points:
        s = solve_flat(form, p)
        entry = {"point": p, "hmat": s.hmat, "hvec": s.hvec, "hscal": s.hscal, "det": s.det}
        try:
            entry["metric"] = metric_from_h(s.hmat)
            entry["degenerate"] = False
        except DegenerateMetricError:
            entry["metric"] = None
            entry["degenerate"] = True
        per_point.append(entry)
    rank = form.rank
    results = {
        "C": form.C,
        "rank": rank,
        "eigenvalues": form.eigenvalues,
        "metrisable": rank >= 2,
        "points": per_point,
    }
    diagnostics = {"note": "rank below 2 gives degenerate h everywhere" if rank < 2 else ""}
    return results, diagnostics, _digest(raw, {"points": [list(map(float, np.r_[p.real, p.imag])) for p in points]})


def cmd_geodesic(args) -> tuple[dict, dict, str]:
    prob = load_problem(args.file, args.grid, args.tol)
    z0 = _point(args.z0, "--z0")
    v0 = _point(args.v0, "--v0")
    if not np.any(v0 != 0):
        raise InputError("--v0: initial velocity must be nonzero")
    if not (args.T > 0 and np.isfinite(args.T)):
        raise InputError("--T: must be positive")
    if args.steps < 2:
        raise InputError("--steps: need at least 2")
    digest = _digest(prob.raw, {"z0": args.z0, "v0": args.v0, "T": args.T, "steps": args.steps})
    try:
        traj = integrate_geodesic(prob.pi, z0, v0, args.T, args.steps)
    except GeodesicDomainError as exc:
        exc.partial_report = ({"t": exc.trajectory.t, "z": exc.trajectory.z, "zdot": exc.trajectory.zdot}, digest)
        raise
    results = {
        "t": traj.t,
        "z": traj.z,
        "zdot": traj.zdot,
        "wedge_residual": wedge_residual(prob.pi, traj),
    }
    return results, {"steps": args.steps}, digest


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cproj", description="Complex projective structures and Kahler metrisability.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--tol", type=float, default=None, help="vanishing tolerance for curvature tests")
    parser.add_argument("--grid", type=int, default=5, help="default sample grid size per real axis")
    parser.add_argument("--output", default="-", help="report path, '-' for stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", help="Weyl, K and Liouville tensors and classification")
    p.add_argument("file")
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("metrise", help="decide Kahler metrisability at the samples")
    p.add_argument("file")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="RK4 steps per unit length")
    p.set_defaults(func=cmd_metrise)

    p = sub.add_parser("solve-flat", help="closed-form compatible metrics of the flat structure")
    p.add_argument("--c", nargs=9, type=float, metavar="X",
                   help="C11 C22 C33 ReC12 ImC12 ReC13 ImC13 ReC23 ImC23")
    p.add_argument("--c-file", help='JSON file {"C": 3x3 array of [re, im]}')
    p.add_argument("--point", nargs=4, type=float, action="append", metavar=("RE1", "IM1", "RE2", "IM2"))
    p.set_defaults(func=cmd_solve_flat)

    p = sub.add_parser("geodesic", help="integrate a generalised geodesic")
    p.add_argument("file")
    p.add_argument("--z0", nargs=4, type=float, required=True, metavar=("RE1", "IM1", "RE2", "IM2"))
    p.add_argument("--v0", nargs=4, type=float, required=True, metavar=("RE1", "IM1", "RE2", "IM2"))
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(func=cmd_geodesic)
    return parser


def _emit(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.grid < 2:
        print("cproj: error: --grid must be at least 2", file=sys.stderr)
        return EXIT_INPUT
    if args.tol is not None and not args.tol > 0:
        print("cproj: error: --tol must be positive", file=sys.stderr)
        return EXIT_INPUT

    code, error = EXIT_OK, None
    results: dict = {}
    digest = ""
    try:
        results, diagnostics, digest = args.func(args)
    except InputError as exc:
        print(f"cproj: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantBreachError as exc:
        code, error = EXIT_INVARIANT, f"internal invariant breach: {exc}"
    except DomainError as exc:
        code, error = EXIT_DOMAIN, f"evaluation domain error: {exc}"
        partial = getattr(exc, "partial_report", None)
        if partial is not None:
            results, digest = {"partial": True, **partial[0]}, partial[1]
    except (ArithmeticError, np.linalg.LinAlgError, StructureError) as exc:
        code, error = EXIT_DOMAIN, f"evaluation failed: {exc}"
    if error is not None:
        print(f"cproj: {error}", file=sys.stderr)
        diagnostics = {"error": error}
    report = {"command": args.command, "input_digest": digest, "results": results, "diagnostics": diagnostics}
    _emit(dumps(report), args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
