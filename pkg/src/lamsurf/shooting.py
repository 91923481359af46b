"""Shooting from the axis, root finding for closed profiles, and bound checks.

A shot leaves the axis perpendicularly at x0 and runs until its tangent
first turns horizontal backwards (theta = pi), at B = (x_star, r_star).  The
profile closes up by reflection exactly when x_star = 0, so the shooting map
is F(x0) = x_star.

Shots are addressed by their offset x0 + lam from the plane datum.  For
|lam| around 0.1 the roots sit at offsets near 1e-57, far below what x0 can
resolve as a double, so scans add a logarithmic grid of offsets below the
linear grid and bisection runs on log(offset) while the bracket is wide.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import HypersurfaceProfile
from .integrator import EventKind, IntegratorConfig, Trajectory, integrate_from_axis
from .ode_core import DomainError, Params

__all__ = [
    "Quadrant",
    "ShotOutcome",
    "NonTerminatingShot",
    "BracketLost",
    "RootFindingError",
    "AssemblyError",
    "Bracket",
    "ScanResult",
    "RootResult",
    "BoundsReport",
    "ShotStore",
    "default_scan_interval",
    "scan_offsets",
    "shoot",
    "scan_roots",
    "find_root",
    "assemble_closed_profile",
    "verify_bounds",
]

ON_AXIS_TOL = 1e-9
DEFAULT_GRID = 128
DEFAULT_NEAR_PLANE = 32
DEFAULT_MIN_OFFSET = 1e-300
EDGE_FRACTION = 1e-2


class Quadrant(str, Enum):
    FIRST = "First"
    SECOND = "Second"
    ON_AXIS = "OnAxis"


class NonTerminatingShot(RuntimeError):
    """A shot ended at MaxLength or StepFailure instead of a turning point."""

    def __init__(self, outcome: "ShotOutcome"):
        super().__init__(f"shot from x0={outcome.x0!r} (offset {outcome.offset!r}) ended with "
                         f"{outcome.terminal.value} at s={outcome.s_star:.6g}")
        self.outcome = outcome


class BracketLost(RuntimeError):
    def __init__(self, message: str, **diagnostics):
        super().__init__(message + "; " + ", ".join(f"{k}={v!r}" for k, v in diagnostics.items()))
        self.diagnostics = diagnostics


class RootFindingError(RuntimeError):
    pass


class AssemblyError(RuntimeError):
    pass


def _quadrant(x_star: float, tol: float) -> Quadrant:
    if abs(x_star) <= tol:
        return Quadrant.ON_AXIS
    return Quadrant.FIRST if x_star > 0 else Quadrant.SECOND


@dataclass(frozen=True)
class ShotOutcome:
    x0: float
    offset: float
    x_star: float
    r_star: float
    s_star: float
    quadrant: Quadrant
    terminal: EventKind

    @property
    def B(self) -> tuple[float, float]:
        return (self.x_star, self.r_star)

    @property
    def ok(self) -> bool:
        return self.terminal is EventKind.TURNING_POINT

    def to_dict(self) -> dict:
        return {"x0": self.x0, "offset": self.offset, "x_star": self.x_star,
                "r_star": self.r_star, "s_star": self.s_star,
                "quadrant": self.quadrant.value, "terminal": self.terminal.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ShotOutcome":
        return cls(float(d["x0"]), float(d["offset"]), float(d["x_star"]), float(d["r_star"]),
                   float(d["s_star"]), Quadrant(d["quadrant"]), EventKind(d["terminal"]))


def _offset_of(p: Params, x0: float | None, offset: float | None) -> float:
    if (x0 is None) == (offset is None):
        raise TypeError("give exactly one of x0 and offset")
    if offset is None:
        return float(x0) + p.lam
    return float(offset)


def _trace(p: Params, offset: float, cfg: IntegratorConfig, events) -> tuple[ShotOutcome, Trajectory]:
    x0 = -p.lam + offset
    if not x0 > 0.0:
        raise DomainError(f"shots start on the positive x-axis, got x0={x0!r}")
    tr = integrate_from_axis(p, offset, cfg, events)
    st = tr.terminal.state
    out = ShotOutcome(x0, offset, st.x, st.r, st.s, _quadrant(st.x, ON_AXIS_TOL), tr.terminal.kind)
    return out, tr


_SHOT_EVENTS = (EventKind.TURNING_POINT, EventKind.AXIS_RETURN)


def shoot(p: Params, x0: float | None = None, cfg: IntegratorConfig | None = None, *,
          offset: float | None = None) -> ShotOutcome:
    """Shoot from (x0, 0), or from x0 = -lam + offset with the offset kept exact.

    A shot that comes back to the axis before turning is returned with
    terminal kind AxisReturn; MaxLength and StepFailure raise
    :class:`NonTerminatingShot`.
    """
    cfg = cfg or IntegratorConfig()
    out, _ = _trace(p, _offset_of(p, x0, offset), cfg, _SHOT_EVENTS)
    if out.terminal in (EventKind.MAX_LENGTH, EventKind.STEP_FAILURE):
        raise NonTerminatingShot(out)
    return out


def trace(p: Params, x0: float | None = None, cfg: IntegratorConfig | None = None, *,
          offset: float | None = None) -> tuple[ShotOutcome, Trajectory]:
    """Like :func:`shoot` but also returns the trajectory and never raises on MaxLength."""
    cfg = cfg or IntegratorConfig()
    return _trace(p, _offset_of(p, x0, offset), cfg, _SHOT_EVENTS)


def _shoot_any(args) -> ShotOutcome:
    p, offset, cfg = args
    out, _ = _trace(p, offset, cfg, _SHOT_EVENTS)
    return out


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------

def default_scan_interval(p: Params) -> tuple[float, float]:
    """Open interval (-lam, R) shrunk by 1% at both ends, as x0 values."""
    R = p.sphere_radius
    if p.lam < 0:
        lo = -p.lam * (1.0 + EDGE_FRACTION)
    else:
        lo = -p.lam + EDGE_FRACTION * (R + p.lam)
    return lo, R * (1.0 - EDGE_FRACTION)


def scan_offsets(p: Params, lo: float, hi: float, grid_count: int = DEFAULT_GRID,
                 near_plane: int = DEFAULT_NEAR_PLANE,
                 min_offset: float = DEFAULT_MIN_OFFSET) -> np.ndarray:
    """Grid of offsets x0 + lam: ``near_plane`` log-spaced values from
    ``min_offset`` up to (not including) lo + lam, then ``grid_count``
    evenly spaced x0 values on [lo, hi].  Sorted ascending."""
    if grid_count < 2:
        raise ValueError("grid_count must be >= 2")
    if not -p.lam < lo < hi:
        raise ValueError(f"need -lambda < lo < hi, got lo={lo!r}, hi={hi!r}")
    linear = np.linspace(lo, hi, grid_count) + p.lam
    parts = []
    if near_plane > 0 and linear[0] > min_offset:
        parts.append(np.logspace(math.log10(min_offset), math.log10(linear[0]),
                                 near_plane + 1)[:-1])
    parts.append(linear)
    return np.concatenate(parts)


@dataclass(frozen=True)
class Bracket:
    """Offsets (lo, hi) with F values at both ends; lo == hi marks a grid zero."""

    lo: float
    hi: float
    f_lo: float
    f_hi: float

    def x_interval(self, p: Params) -> tuple[float, float]:
        return (-p.lam + self.lo, -p.lam + self.hi)


@dataclass
class ScanResult:
    params: Params
    outcomes: list[ShotOutcome]
    brackets: list[Bracket]
    failures: list[ShotOutcome] = field(default_factory=list)

    @property
    def outside_theorem_range(self) -> bool:
        return not self.params.in_theorem_range


def _key(offset: float) -> str:
    return repr(float(offset))


class ShotStore:
    """JSON-lines file of shot outcomes keyed by offset, for resumable scans."""

    def __init__(self, path):
        self.path = os.fspath(path)

    def load(self) -> dict[str, ShotOutcome]:
        found: dict[str, ShotOutcome] = {}
        if not os.path.exists(self.path):
            return found
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    out = ShotOutcome.from_dict(json.loads(line))
                except (ValueError, KeyError):
                    continue  # a torn last line from an interrupted run
                found[_key(out.offset)] = out
        return found

    def append(self, out: ShotOutcome) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps(out.to_dict()) + "\n")
            fh.flush()

    def rewrite(self, outcomes) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            for out in sorted(outcomes, key=lambda o: o.offset):
                fh.write(json.dumps(out.to_dict()) + "\n")
        os.replace(tmp, self.path)


def evaluate_grid(p: Params, offsets, cfg: IntegratorConfig | None = None, *, jobs: int = 1,
                  store: ShotStore | None = None, resume: bool = False) -> list[ShotOutcome]:
    """Shoot at every offset, reusing stored outcomes when ``resume`` is set."""
    cfg = cfg or IntegratorConfig()
    offsets = [float(o) for o in offsets]
    known = store.load() if (store is not None and resume) else {}
    if store is not None and not resume and os.path.exists(store.path):
        os.remove(store.path)
    todo = [o for o in offsets if _key(o) not in known]
    results = dict(known)
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(_shoot_any, [(p, o, cfg) for o in todo], chunksize=1):
                results[_key(out.offset)] = out
                if store is not None:
                    store.append(out)
    else:
        for o in todo:
            out = _shoot_any((p, o, cfg))
            results[_key(o)] = out
            if store is not None:
                store.append(out)
    ordered = [results[_key(o)] for o in offsets]
    if store is not None:
        store.rewrite(ordered)
    return ordered


def scan_roots(p: Params, lo: float | None = None, hi: float | None = None,
               grid_count: int = DEFAULT_GRID, cfg: IntegratorConfig | None = None, *,
               near_plane: int = DEFAULT_NEAR_PLANE, min_offset: float = DEFAULT_MIN_OFFSET,
               tol: float = 1e-8, jobs: int = 1, store: ShotStore | None = None,
               resume: bool = False) -> ScanResult:
    """Sign changes of F over the scan grid.

    Shots without a turning point are left out; the valid shots on either
    side of them are paired directly.  A valid shot with |F| <= tol gives a
    degenerate bracket of its own.
    """
    d_lo, d_hi = default_scan_interval(p)
    lo = d_lo if lo is None else float(lo)
    hi = d_hi if hi is None else float(hi)
    offsets = scan_offsets(p, lo, hi, grid_count, near_plane, min_offset)
    outcomes = evaluate_grid(p, offsets, cfg, jobs=jobs, store=store, resume=resume)
    valid = [o for o in outcomes if o.ok]
    failures = [o for o in outcomes if not o.ok]
    brackets = []
    for i, o in enumerate(valid):
        if abs(o.x_star) <= tol:
            brackets.append(Bracket(o.offset, o.offset, o.x_star, o.x_star))
    for a, b in zip(valid, valid[1:]):
        if abs(a.x_star) <= tol or abs(b.x_star) <= tol:
            continue
        if (a.x_star > 0) != (b.x_star > 0):
            brackets.append(Bracket(a.offset, b.offset, a.x_star, b.x_star))
    brackets.sort(key=lambda br: br.lo)
    return ScanResult(p, outcomes, brackets, failures)


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

@dataclass
class RootResult:
    x_hat: float
    offset: float
    r_hat: float
    s_hat: float
    bracket: tuple[float, float]  # offsets at the end of the bisection
    iterations: int
    residual: float
    tol: float
    widths: list[float] = field(default_factory=list, repr=False)

    def x_bracket(self, p: Params) -> tuple[float, float]:
        return (-p.lam + self.bracket[0], -p.lam + self.bracket[1])


def _result(out: ShotOutcome, lo, hi, it, tol, widths) -> RootResult:
    return RootResult(out.x0, out.offset, out.r_star, out.s_star, (lo, hi), it,
                      abs(out.x_star), tol, widths)


def find_root(p: Params, bracket, tol: float = 1e-8, cfg: IntegratorConfig | None = None,
              max_iter: int = 400) -> RootResult:
    """Bisection on F between two offsets with opposite signs of F.

    ``bracket`` is a :class:`Bracket` or an (lo, hi) pair of offsets.  While
    hi/lo > 2 the midpoint is geometric, so the log-width halves each step;
    after that it is arithmetic and the width halves.  Stops when
    |F(mid)| <= tol.
    """
    cfg = cfg or IntegratorConfig()
    if isinstance(bracket, Bracket):
        lo, hi = bracket.lo, bracket.hi
    else:
        lo, hi = (float(v) for v in bracket)
    if lo > hi:
        lo, hi = hi, lo

    def F(offset) -> ShotOutcome:
        try:
            out = shoot(p, cfg=cfg, offset=offset)
        except NonTerminatingShot as exc:
            out = exc.outcome
        return out

    f_lo = F(lo)
    if lo == hi:
        if f_lo.ok and abs(f_lo.x_star) <= tol:
            return _result(f_lo, lo, hi, 0, tol, [])
        raise ValueError(f"degenerate bracket at offset {lo!r} is not a root (F={f_lo.x_star!r})")
    f_hi = F(hi)
    for end in (f_lo, f_hi):
        if not end.ok:
            raise ValueError(f"no turning point at bracket end offset {end.offset!r}")
        if abs(end.x_star) <= tol:
            return _result(end, lo, hi, 0, tol, [])
    if (f_lo.x_star > 0) == (f_hi.x_star > 0):
        raise ValueError(f"F has the same sign at both ends: {f_lo.x_star!r}, {f_hi.x_star!r}")

    sign_lo = f_lo.x_star > 0
    widths = []
    for it in range(1, max_iter + 1):
        geometric = lo > 0.0 and hi > 2.0 * lo
        mid = math.sqrt(lo) * math.sqrt(hi) if geometric else lo + 0.5 * (hi - lo)
        if not lo < mid < hi:
            break
        out = F(mid)
        if not out.ok or not math.isfinite(out.x_star):
            raise BracketLost("midpoint shot has no turning point", lo=lo, hi=hi, mid=mid,
                              terminal=out.terminal.value, f_lo=f_lo.x_star, f_hi=f_hi.x_star)
        if abs(out.x_star) <= tol:
            widths.append(hi - lo)
            return _result(out, lo, hi, it, tol, widths)
        if (out.x_star > 0) == sign_lo:
            lo, f_lo = mid, out
        else:
            hi, f_hi = mid, out
        widths.append(hi - lo)
    best = min((f_lo, f_hi), key=lambda o: abs(o.x_star))
    raise RootFindingError(
        f"bracket collapsed to [{lo!r}, {hi!r}] with |F| >= {abs(best.x_star):.3g} > tol={tol:g}; "
        "F looks discontinuous here")


# ---------------------------------------------------------------------------
# closed profiles
# ---------------------------------------------------------------------------

def assemble_closed_profile(p: Params, root: RootResult,
                            cfg: IntegratorConfig | None = None) -> HypersurfaceProfile:
    """Shot at the root followed by its mirror image in the r-axis.

    The mirrored half is traversed backwards, so theta maps to 2 pi - theta
    and the curvatures are carried over unchanged.  The junction gap is the
    jump in (x, theta) between the turning point and its mirror.
    """
    cfg = cfg or IntegratorConfig()
    out, tr = _trace(p, root.offset, cfg, _SHOT_EVENTS)
    if not out.ok:
        raise AssemblyError(f"shot at the root ended with {out.terminal.value}")
    gap = 2.0 * max(abs(out.x_star), abs(tr.theta[-1] - math.pi))
    limit = 10.0 * cfg.rel_tol + 2.0 * root.tol
    if gap > limit:
        raise AssemblyError(f"junction gap {gap:.3g} exceeds {limit:.3g}")
    k0 = root.offset / p.n  # theta'(0), also the limit of -cos(theta)/r
    s = np.concatenate([[0.0], tr.s])
    x = np.concatenate([[root.x_hat], tr.x])
    r = np.concatenate([[0.0], tr.r])
    theta = np.concatenate([[0.5 * math.pi], tr.theta])
    dth = np.concatenate([[k0], tr.dtheta])
    krot = np.concatenate([[k0], tr.kappa_rot])
    s_hat = float(s[-1])
    rev = slice(-2, None, -1)
    return HypersurfaceProfile(
        p,
        np.concatenate([s, 2.0 * s_hat - s[rev]]),
        np.concatenate([x, -x[rev]]),
        np.concatenate([r, r[rev]]),
        np.concatenate([theta, 2.0 * math.pi - theta[rev]]),
        np.concatenate([dth, dth[rev]]),
        np.concatenate([krot, krot[rev]]),
        s_hat=s_hat, x_hat=root.x_hat, offset=root.offset, junction_gap=gap,
    )


# ---------------------------------------------------------------------------
# quantitative bounds near the plane
# ---------------------------------------------------------------------------

@dataclass
class BoundsReport:
    n: int
    lam: float
    epsilon: float
    r_star: float
    x_star: float
    lemma31_bound: float
    lemma31_ok: bool
    prop31_x_lower: float
    prop31_ok: bool
    prop31_applicable: bool
    lemma32_crossing: float | None
    lemma32_ok: bool
    lemma33_ok: bool | None  # None when lam is outside the range it covers
    lemma33_applicable: bool
    lemma33_min_phi: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lemma33_range(n: int) -> float:
    return -(25 * n - 6) / (30 * math.sqrt(n))


def prop31_range(n: int) -> float:
    return -min((23 * n + 4) / (28 * math.sqrt(n)), (25 * n - 6) / (30 * math.sqrt(n)))


def verify_bounds(p: Params, epsilon: float, cfg: IntegratorConfig | None = None) -> BoundsReport:
    """Check the near-plane estimates on the shot from x0 = -lam + epsilon.

    * r_star > sqrt(log(1/(sqrt(pi) eps)))
    * h = x + lam first vanishes at some r0 in [sqrt(n), sqrt(2n)]
    * r h / (30 n) - h' > 0 on [r0, r_star), h' = dx/dr
    * -(30n + 4)/sqrt(log(1/(sqrt(pi) eps))) - lam <= x_star < -lam
    """
    cfg = cfg or IntegratorConfig()
    eps = float(epsilon)
    if not (0.0 < eps <= 1.0 / math.sqrt(math.pi)):
        raise DomainError(f"epsilon must lie in (0, 1/sqrt(pi)], got {epsilon!r}")
    if p.lam > 0.0:
        raise DomainError("bounds are stated for lambda <= 0")
    n, lam = p.n, p.lam
    out, tr = _trace(p, eps, cfg, (EventKind.TURNING_POINT, EventKind.AXIS_RETURN,
                                   EventKind.PLANE_CROSSING))
    if not out.ok:
        raise NonTerminatingShot(out)
    L = max(math.log(1.0 / (math.sqrt(math.pi) * eps)), 0.0)
    bound = math.sqrt(L)
    x_lower = -(30 * n + 4) / bound - lam if bound > 0.0 else -math.inf
    r0 = tr.crossings[0].state.r if tr.crossings else None
    lemma32_ok = r0 is not None and math.sqrt(n) <= r0 <= math.sqrt(2 * n)

    l33_app = lemma33_range(n) <= lam < 0.0
    l33_ok, phi_min = None, None
    if l33_app:
        if r0 is None:
            l33_ok = False
        else:
            sel = (tr.r >= r0) & (np.arange(len(tr)) < len(tr) - 1)
            # h' = dx/dr = -tan(tilt)
            phi = tr.r[sel] * tr.h[sel] / (30.0 * n) + np.tan(tr.tilt[sel])
            phi_min = float(phi.min()) if phi.size else None
            l33_ok = bool(phi.size and np.all(phi > 0.0))
    return BoundsReport(
        n=n, lam=lam, epsilon=eps, r_star=out.r_star, x_star=out.x_star,
        lemma31_bound=bound, lemma31_ok=bool(out.r_star > bound),
        prop31_x_lower=x_lower, prop31_ok=bool(x_lower <= out.x_star < -lam),
        prop31_applicable=bool(prop31_range(n) <= lam < 0.0),
        lemma32_crossing=r0, lemma32_ok=bool(lemma32_ok),
        lemma33_ok=l33_ok, lemma33_applicable=bool(l33_app), lemma33_min_phi=phi_min,
    )
