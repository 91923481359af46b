"""Command-line front end: solve, trace, scan, linearize, verify, mesh.

Machine-readable results go to stdout as JSON (or PASS/FAIL lines for
``linearize``); diagnostics go to stderr.  Exit codes: 0 success, 2 no root
found, 3 root found but certification failed, 64 bad usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import geometry, linearization, shooting
from .integrator import IntegratorConfig
from .ode_core import DomainError, Params

EXIT_OK = 0
EXIT_NO_ROOT = 2
EXIT_CERT_FAILED = 3
EXIT_USAGE = 64

RESIDUAL_GATE = 1e-8

# config-file keys and their types; the same names (with dashes) are flags
_KEYS = {
    "n": int,
    "lambda": float,
    "rel_tol": float,
    "abs_tol": float,
    "max_step": float,
    "series_start_step": float,
    "max_arclength": float,
    "event_tol": float,
    "grid_count": int,
    "near_plane": int,
    "min_offset": float,
    "scan_lo": float,
    "scan_hi": float,
    "root_tol": float,
    "out": str,
    "format": str,
    "jobs": int,
    "resolution": int,
}
_DEFAULTS = {
    "grid_count": shooting.DEFAULT_GRID,
    "near_plane": shooting.DEFAULT_NEAR_PLANE,
    "min_offset": shooting.DEFAULT_MIN_OFFSET,
    "root_tol": 1e-8,
    "out": "lamsurf_out",
    "format": "both",
    "resolution": 64,
}
_CFG_FIELDS = ("rel_tol", "abs_tol", "max_step", "series_start_step", "max_arclength", "event_tol")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def read_config(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment.  Unknown keys are an error."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (t.strip() for t in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _KEYS[key](value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


@dataclass
class RunConfig:
    params: Params
    integ: IntegratorConfig
    settings: dict

    def __getattr__(self, name):
        try:
            return self.settings[name]
        except KeyError:
            raise AttributeError(name) from None


def _resolve(args) -> RunConfig:
    merged = dict(_DEFAULTS)
    merged["jobs"] = _available_cores()
    if args.config:
        merged.update(read_config(args.config))
    for key in _KEYS:
        val = getattr(args, key.replace("lambda", "lam"), None)
        if val is not None:
            merged[key] = val
    if "n" not in merged or "lambda" not in merged:
        raise UsageError("--n and --lambda are required (flag or config file)")
    if merged["format"] not in ("csv", "json", "both"):
        raise UsageError(f"format must be csv, json or both, got {merged['format']!r}")
    if merged["jobs"] < 1:
        raise UsageError("jobs must be >= 1")
    try:
        params = Params(merged["n"], merged["lambda"])
        integ = IntegratorConfig(**{k: merged[k] for k in _CFG_FIELDS if k in merged})
    except (DomainError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(params, integ, merged)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1))


def _formats(rc: RunConfig) -> list[str]:
    return ["csv", "json"] if rc.format == "both" else [rc.format]


def _range_note(p: Params) -> None:
    if not p.in_theorem_range:
        _warn(f"outside theorem range: lambda={p.lam!r} is not in "
              f"(-2/sqrt(n+2), 0) = ({p.theorem_lower:.6g}, 0)")


def _store(rc: RunConfig, name: str) -> shooting.ShotStore:
    os.makedirs(rc.out, exist_ok=True)
    return shooting.ShotStore(os.path.join(rc.out, name))


def _scan(rc: RunConfig, args) -> shooting.ScanResult:
    return shooting.scan_roots(
        rc.params, rc.settings.get("scan_lo"), rc.settings.get("scan_hi"), rc.grid_count,
        rc.integ, near_plane=rc.near_plane, min_offset=rc.min_offset, tol=rc.root_tol,
        jobs=rc.jobs, store=_store(rc, "scan.jsonl"), resume=bool(args.resume),
    )


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def run_solve(rc: RunConfig, resume: bool = False, write: bool = True):
    """Scan, bisect every bracket, assemble and certify.

    Returns (summary dict, list of (profile, certificate), exit code).
    """
    p = rc.params
    sc = shooting.scan_roots(
        p, rc.settings.get("scan_lo"), rc.settings.get("scan_hi"), rc.grid_count, rc.integ,
        near_plane=rc.near_plane, min_offset=rc.min_offset, tol=rc.root_tol, jobs=rc.jobs,
        store=_store(rc, "scan.jsonl") if write else None, resume=resume,
    )
    roots, failed, profiles = [], [], []
    R = p.sphere_radius
    for br in sc.brackets:
        try:
            root = shooting.find_root(p, br, rc.root_tol, rc.integ)
            prof = shooting.assemble_closed_profile(p, root, rc.integ)
        except (shooting.BracketLost, shooting.RootFindingError, shooting.AssemblyError,
                ValueError) as exc:
            failed.append({"bracket_offsets": [br.lo, br.hi], "error": str(exc)})
            print(f"bracket {br.x_interval(p)} failed: {exc}", file=sys.stderr)
            continue
        cert = geometry.certify(prof, rc.integ)
        certified = cert.convex and cert.simple and cert.max_residual <= RESIDUAL_GATE
        k = len(roots)
        files = []
        if write:
            for fmt in _formats(rc):
                path = os.path.join(rc.out, f"profile_{k}.{fmt}")
                geometry.export(prof, fmt, path, cert)
                files.append(path)
        roots.append({
            "x_hat": root.x_hat,
            "offset": root.offset,
            "r_hat": root.r_hat,
            "s_hat": root.s_hat,
            "iterations": root.iterations,
            "residual": root.residual,
            "in_interval": bool(root.offset > 0.0 and root.x_hat < R),
            "r_hat_above_sphere_radius": bool(root.r_hat > R),
            "junction_gap": prof.junction_gap,
            "samples": len(prof),
            **cert.to_dict(),
            "certified": bool(certified),
            "files": files,
        })
        profiles.append((prof, cert))
    summary = {
        "params": p.to_dict(),
        "sphere_radius": R,
        "outside_theorem_range": sc.outside_theorem_range,
        "scan": {"shots": len(sc.outcomes), "failed_shots": len(sc.failures),
                 "brackets": len(sc.brackets)},
        "roots": roots,
        "failed_brackets": failed,
    }
    if not roots:
        code = EXIT_NO_ROOT
    elif any(r["certified"] for r in roots):
        code = EXIT_OK
    else:
        code = EXIT_CERT_FAILED
    if write:
        with open(os.path.join(rc.out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1)
            fh.write("\n")
    return summary, profiles, code


def cmd_solve(args) -> int:
    rc = _resolve(args)
    _range_note(rc.params)
    summary, _, code = run_solve(rc, resume=bool(args.resume))
    _emit(summary)
    if code == EXIT_NO_ROOT:
        print("no root found", file=sys.stderr)
    elif code == EXIT_CERT_FAILED:
        print("roots found but none certified convex and embedded", file=sys.stderr)
    return code


def cmd_trace(args) -> int:
    rc = _resolve(args)
    _range_note(rc.params)
    if (args.x0 is None) == (args.offset is None):
        raise UsageError("trace needs exactly one of --x0 and --offset")
    try:
        out, tr = shooting.trace(rc.params, args.x0, rc.integ, offset=args.offset)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(rc.out, exist_ok=True)
    files = []
    for fmt in _formats(rc):
        path = os.path.join(rc.out, f"trace.{fmt}")
        geometry.export_trajectory(tr, fmt, path)
        files.append(path)
    _emit({"params": rc.params.to_dict(), **out.to_dict(), "samples": len(tr), "files": files})
    return EXIT_OK


def cmd_scan(args) -> int:
    rc = _resolve(args)
    _range_note(rc.params)
    sc = _scan(rc, args)
    p = rc.params
    _emit({
        "params": p.to_dict(),
        "outside_theorem_range": sc.outside_theorem_range,
        "shots": len(sc.outcomes),
        "failed_shots": [o.to_dict() for o in sc.failures],
        "brackets": [{"x0": list(b.x_interval(p)), "offsets": [b.lo, b.hi],
                      "x_star": [b.f_lo, b.f_hi]} for b in sc.brackets],
        "store": os.path.join(rc.out, "scan.jsonl"),
    })
    return EXIT_OK if sc.brackets else EXIT_NO_ROOT


def _verdict(label: str, ok: bool) -> str:
    return f"{label}: {'PASS' if ok else 'FAIL'}"


def cmd_linearize(args) -> int:
    rc = _resolve(args)
    p = rc.params
    os.makedirs(rc.out, exist_ok=True)
    sides = ["plane", "sphere"] if args.side == "both" else [args.side]
    lines, ok = [], True
    for side in sides:
        if side == "plane":
            lin = linearization.solve_plane_linearization(p, cfg=rc.integ)
            checks = [
                ("w(sqrt(n)) > 0", lin.w_sqrt_n > 0.0),
                ("w(sqrt(2n)) < 0", lin.w_sqrt_2n < 0.0),
                ("dw/dxi < 0 on samples", bool((lin.dw_dxi < 0.0).all())),
                ("d2w/dxi2 < 0 on samples", bool((lin.d2w_dxi2 < 0.0).all())),
            ]
            values = {"w(sqrt(n))": lin.w_sqrt_n, "w(sqrt(2n))": lin.w_sqrt_2n,
                      "dw/dxi(0)": lin.dw_dxi_0, "d2w/dxi2(0)": lin.d2w_dxi2_0}
        else:
            lin = linearization.solve_sphere_linearization(p, cfg=rc.integ)
            checks = [
                ("w(pi/2) < 0", lin.w_end < 0.0),
                ("w'(pi/2) < 0", lin.wp_end < 0.0),
                ("d2w/dxi2(0) > 0", lin.d2w_dxi2_0 > 0.0),
                ("d3w/dxi3(0) < 0", lin.d3w_dxi3_0 < 0.0),
            ]
            values = {"A": lin.A, "w(pi/2)": lin.w_end, "w'(pi/2)": lin.wp_end}
            if not (p.theorem_lower < p.lam <= 0.0):
                _warn("sign claims for the sphere side cover -2/sqrt(n+2) < lambda <= 0 only")
        linearization.export_csv(lin, os.path.join(rc.out, f"linearization_{side}.csv"))
        for name, val in values.items():
            lines.append(f"{side} {name} = {val:.17g}")
        for label, good in checks:
            lines.append(_verdict(label, good))
            ok = ok and good
        if args.fd_epsilon is not None:
            dev = linearization.finite_difference_check(p, args.fd_epsilon, side, rc.integ)
            lines.append(f"{side} finite-difference deviation = {dev:.6e}")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_CERT_FAILED


def cmd_verify(args) -> int:
    rc = _resolve(args)
    try:
        rep = shooting.verify_bounds(rc.params, args.epsilon, rc.integ)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    d = rep.to_dict()
    d["prop31_note"] = ("reported only: the guarantee needs epsilon far below double range, "
                        "so a failure at this epsilon does not contradict it")
    _emit(d)
    return EXIT_OK


def cmd_mesh(args) -> int:
    rc = _resolve(args)
    if rc.params.n != 2:
        raise UsageError("mesh export needs --n 2")
    if args.profile:
        prof, _ = geometry.load_profile_json(args.profile)
    else:
        _range_note(rc.params)
        _, profiles, code = run_solve(rc, resume=bool(args.resume))
        good = [pr for pr, c in profiles if c.convex and c.simple]
        if not good:
            return code if code != EXIT_OK else EXIT_CERT_FAILED
        prof = good[0]
    mesh = geometry.revolve_mesh(prof, rc.resolution)
    os.makedirs(rc.out, exist_ok=True)
    path = geometry.export(mesh, "obj", os.path.join(rc.out, "surface.obj"))
    _emit({"params": rc.params.to_dict(), "vertices": int(mesh.vertices.shape[0]),
           "faces": int(mesh.faces.shape[0]), "euler_characteristic": mesh.euler_characteristic,
           "file": path})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--max-step", dest="max_step", type=float)
    common.add_argument("--series-start-step", dest="series_start_step", type=float)
    common.add_argument("--max-arclength", dest="max_arclength", type=float)
    common.add_argument("--event-tol", dest="event_tol", type=float)
    common.add_argument("--grid-count", dest="grid_count", type=int)
    common.add_argument("--near-plane", dest="near_plane", type=int,
                        help="log-spaced offsets below the linear scan grid")
    common.add_argument("--min-offset", dest="min_offset", type=float)
    common.add_argument("--lo", dest="scan_lo", type=float, help="scan start (x0)")
    common.add_argument("--hi", dest="scan_hi", type=float, help="scan end (x0)")
    common.add_argument("--root-tol", dest="root_tol", type=float)
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--format", type=str, choices=("csv", "json", "both"))
    common.add_argument("--jobs", type=int, help="parallel scan shots (default: all cores)")
    common.add_argument("--config", type=str, help="flat key = value file")
    common.add_argument("--resume", action="store_true",
                        help="reuse shots already in the scan store")

    parser = _Parser(prog="lamsurf", description="Shooting solver for rotational "
                     "lambda-hypersurfaces.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="find, assemble and certify closed profiles")
    p_trace = sub.add_parser("trace", parents=[common], help="one shot from the axis")
    p_trace.add_argument("--x0", type=float)
    p_trace.add_argument("--offset", type=float, help="x0 + lambda, kept exact")
    sub.add_parser("scan", parents=[common], help="sign changes of the shooting map")
    p_lin = sub.add_parser("linearize", parents=[common], help="linearized equations")
    p_lin.add_argument("--side", choices=("plane", "sphere", "both"), default="both")
    p_lin.add_argument("--fd-epsilon", dest="fd_epsilon", type=float,
                       help="also run the finite-difference check at this epsilon")
    p_ver = sub.add_parser("verify", parents=[common], help="near-plane bounds")
    p_ver.add_argument("--epsilon", type=float, required=True)
    p_mesh = sub.add_parser("mesh", parents=[common], help="OBJ mesh of an n = 2 surface")
    p_mesh.add_argument("--profile", type=str, help="profile JSON written by solve")
    p_mesh.add_argument("--resolution", type=int)
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "trace": cmd_trace,
    "scan": cmd_scan,
    "linearize": cmd_linearize,
    "verify": cmd_verify,
    "mesh": cmd_mesh,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except geometry.Unsupported as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
