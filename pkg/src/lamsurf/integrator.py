"""Adaptive arc-length integration of profile curves.

Two layers live here.  :func:`dopri5` is a generic Dormand-Prince 5(4)
stepper with the free 4th-order continuous extension, terminal and
recording events located by bisection on that interpolant, exact landing on
requested output points, and a domain guard that rejects steps whose stages
leave the admissible region.

On top of it, profile curves are integrated in a rescaled frame around the
plane x = -lam, theta = pi/2::

    x = -lam + eps * H,     theta = pi/2 + eps * D

which is an exact rewrite of the arc-length system for any eps > 0.  For a
shot started on the axis at x0 we take eps = |x0 + lam|, so H and D are O(1)
at the start however small the offset is.  Offsets far below the spacing of
doubles near -lam (1e-50 and smaller) are needed to see the plane-side
behaviour for small |lam|; in the raw (x, r, theta) variables they would be
rounded away.  General starts use eps = 1, which is the plain system shifted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .ode_core import DomainError, Params, ProfileState

__all__ = [
    "IntegratorConfig",
    "EventKind",
    "EventHit",
    "Trajectory",
    "Event",
    "Solution",
    "dopri5",
    "start_on_axis",
    "integrate_until",
    "integrate_from_axis",
    "frame_rhs",
]

HALF_PI = 0.5 * math.pi

# Dormand & Prince (1980) tableau; dense output coefficients from Shampine (1986).
# The stepper works on plain float lists: for 2- and 3-dimensional systems
# the unrolled list arithmetic is several times faster than small ndarrays.
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (-71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200,
                                -22 / 525, 1 / 40)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_DOMAIN_SHRINK = 0.25
_BISECT_MAX = 60


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.05
    series_start_step: float = 1e-6
    max_arclength: float = 100.0
    event_tol: float = 1e-12

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "series_start_step",
                     "max_arclength", "event_tol"):
            value = getattr(self, name)
            if isinstance(value, bool) or not (isinstance(value, (int, float))
                                               and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if self.series_start_step > self.max_step:
            raise ValueError("series_start_step must not exceed max_step")

    def replace(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


class EventKind(str, Enum):
    TURNING_POINT = "TurningPoint"
    AXIS_RETURN = "AxisReturn"
    PLANE_CROSSING = "PlaneCrossing"
    MAX_LENGTH = "MaxLength"
    STEP_FAILURE = "StepFailure"


# ---------------------------------------------------------------------------
# generic stepper
# ---------------------------------------------------------------------------

@dataclass
class Event:
    """Zero of ``func(s, y)``; ``direction`` +1 rising, -1 falling, 0 either."""

    name: str
    func: Callable[[float, Sequence[float]], float]
    direction: int = 0
    terminal: bool = True


@dataclass
class EventRecord:
    name: str
    s: float
    y: tuple


@dataclass
class Solution:
    s: np.ndarray
    y: np.ndarray
    status: str  # "event", "end", "step_failure"
    terminal: EventRecord | None
    records: list[EventRecord]
    n_accepted: int
    n_rejected: int
    s_eval: np.ndarray = field(default_factory=lambda: np.empty(0))
    y_eval: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))


def _dense(y_old, K, h, tau) -> list[float]:
    t2 = tau * tau
    powers = (tau, t2, t2 * tau, t2 * t2)
    w = [h * sum(c * t for c, t in zip(row, powers)) for row in _P]
    return [y_old[i] + sum(w[j] * K[j][i] for j in range(7)) for i in range(len(y_old))]


def _crossed(g0: float, g1: float, direction: int) -> bool:
    if direction >= 0 and g0 < 0.0 <= g1:
        return True
    if direction <= 0 and g0 > 0.0 >= g1:
        return True
    return False


def _locate(ev: Event, s_old, y_old, K, h, g_old, tol) -> tuple[float, list]:
    # bisection on the continuous extension over the accepted step
    if g_old < 0.0:
        past = lambda g: g >= 0.0  # noqa: E731
    else:
        past = lambda g: g <= 0.0  # noqa: E731
    lo, hi = 0.0, 1.0
    y_hi = None
    for _ in range(_BISECT_MAX):
        mid = 0.5 * (lo + hi)
        y_mid = _dense(y_old, K, h, mid)
        g_mid = ev.func(s_old + mid * h, y_mid)
        if abs(g_mid) <= tol:
            return s_old + mid * h, y_mid
        if past(g_mid):
            hi, y_hi = mid, y_mid
        else:
            lo = mid
    if y_hi is None:
        y_hi = _dense(y_old, K, h, hi)
    return s_old + hi * h, y_hi


def _initial_step(fun, s0, y0, f0, rtol, atol, max_step) -> float:
    scale = [atol + rtol * abs(v) for v in y0]
    d0 = max(abs(v) / sc for v, sc in zip(y0, scale))
    d1 = max(abs(v) / sc for v, sc in zip(f0, scale))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = [v + h0 * df for v, df in zip(y0, f0)]
    try:
        f1 = fun(s0 + h0, y1)
        d2 = max(abs(a - b) / sc for a, b, sc in zip(f1, f0, scale)) / h0
    except (DomainError, ZeroDivisionError, ValueError):
        return h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, max_step)


def _finite(v) -> bool:
    return all(math.isfinite(c) for c in v)


def dopri5(
    fun: Callable[[float, Sequence[float]], Sequence[float]],
    s0: float,
    y0: Sequence[float],
    s_end: float,
    *,
    rtol: float,
    atol: float,
    max_step: float = math.inf,
    events: Iterable[Event] = (),
    event_tol: float = 1e-12,
    s_eval: Sequence[float] = (),
    domain: Callable[[Sequence[float]], bool] | None = None,
    first_step: float | None = None,
) -> Solution:
    """Integrate ``y' = fun(s, y)`` from ``s0`` towards ``s_end``.

    ``fun`` receives the state as a list of floats and returns a sequence of
    floats.  Local error control is componentwise: an accepted step satisfies
    ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)``.  Steps never jump over
    a point of ``s_eval``; those states are reported separately in
    ``y_eval``.  Integration stops at the first terminal event; recording
    events found before it are collected in ``records``.
    """
    events = list(events)
    y = [float(v) for v in y0]
    dim = len(y)
    s = float(s0)
    f = fun(s, y)
    pending = sorted(float(t) for t in s_eval if s0 < t <= s_end)
    eval_s, eval_y = [], []
    ts, ys = [s], [tuple(y)]
    records: list[EventRecord] = []
    g_prev = [ev.func(s, y) for ev in events]

    if first_step is not None:
        h_next = first_step
    else:
        h_next = _initial_step(fun, s, y, f, rtol, atol, max_step)
    n_acc = n_rej = 0
    rejected_last = False
    status, terminal = "end", None
    zero = (0.0,) * dim

    while s < s_end:
        target = pending[0] if pending else s_end
        h = min(h_next, max_step)
        landing = h >= target - s
        if landing:
            h = target - s
        if h <= 1e-14 * max(1.0, abs(s)):
            status = "step_failure"
            break

        k1 = f
        k2 = k3 = k4 = k5 = k6 = zero
        y_new = None
        try:
            ys2 = [a + h * _A21 * p1 for a, p1 in zip(y, k1)]
            if domain is None or domain(ys2):
                k2 = fun(s + _C2 * h, ys2)
                ys3 = [a + h * (_A31 * p1 + _A32 * p2) for a, p1, p2 in zip(y, k1, k2)]
                if domain is None or domain(ys3):
                    k3 = fun(s + _C3 * h, ys3)
                    ys4 = [a + h * (_A41 * p1 + _A42 * p2 + _A43 * p3)
                           for a, p1, p2, p3 in zip(y, k1, k2, k3)]
                    if domain is None or domain(ys4):
                        k4 = fun(s + _C4 * h, ys4)
                        ys5 = [a + h * (_A51 * p1 + _A52 * p2 + _A53 * p3 + _A54 * p4)
                               for a, p1, p2, p3, p4 in zip(y, k1, k2, k3, k4)]
                        if domain is None or domain(ys5):
                            k5 = fun(s + _C5 * h, ys5)
                            ys6 = [a + h * (_A61 * p1 + _A62 * p2 + _A63 * p3 + _A64 * p4
                                            + _A65 * p5)
                                   for a, p1, p2, p3, p4, p5 in zip(y, k1, k2, k3, k4, k5)]
                            if domain is None or domain(ys6):
                                k6 = fun(s + h, ys6)
                                y_new = [a + h * (_B1 * p1 + _B3 * p3 + _B4 * p4 + _B5 * p5
                                                  + _B6 * p6)
                                         for a, p1, p3, p4, p5, p6 in zip(y, k1, k3, k4, k5, k6)]
                                if (domain is not None and not domain(y_new)) or not _finite(y_new):
                                    y_new = None
        except (DomainError, ZeroDivisionError, OverflowError):
            y_new = None
        if y_new is None:
            n_rej += 1
            rejected_last = True
            h_next = h * _DOMAIN_SHRINK
            continue
        f_new = fun(s + h, y_new)
        err = 0.0
        for a, b, p1, p3, p4, p5, p6, p7 in zip(y, y_new, k1, k3, k4, k5, k6, f_new):
            e = abs(h * (_E1 * p1 + _E3 * p3 + _E4 * p4 + _E5 * p5 + _E6 * p6 + _E7 * p7))
            e /= atol + rtol * max(abs(a), abs(b))
            if not e <= err:  # also propagates nan
                err = e
        if not err <= 1.0:
            n_rej += 1
            rejected_last = True
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2) if math.isfinite(err) else _MIN_FACTOR
            h_next = h * factor
            continue

        n_acc += 1
        s_new = target if landing else s + h

        hits = []
        g_new = []
        K = None
        for j, ev in enumerate(events):
            g1 = ev.func(s_new, y_new)
            g_new.append(g1)
            if _crossed(g_prev[j], g1, ev.direction):
                if K is None:
                    K = (k1, zero, k3, k4, k5, k6, f_new)
                s_ev, y_ev = _locate(ev, s, y, K, h, g_prev[j], event_tol)
                hits.append((s_ev, j, y_ev))
        hits.sort(key=lambda t: t[0])
        stop = None
        for s_ev, j, y_ev in hits:
            rec = EventRecord(events[j].name, s_ev, tuple(y_ev))
            if events[j].terminal:
                stop = rec
                break
            records.append(rec)
        if stop is not None:
            ts.append(stop.s)
            ys.append(stop.y)
            status, terminal = "event", stop
            break

        s, y, f = s_new, y_new, f_new
        g_prev = g_new
        ts.append(s)
        ys.append(tuple(y))
        if pending and s == pending[0]:
            pending.pop(0)
            eval_s.append(s)
            eval_y.append(tuple(y))

        factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        if rejected_last:
            factor = min(factor, 1.0)
        rejected_last = False
        if landing and h < h_next:
            # a step shortened to land on a target says little about the next one
            if factor < 1.0:
                h_next = min(h_next, h * factor)
        else:
            h_next = h * factor

    return Solution(
        s=np.array(ts),
        y=np.array(ys),
        status=status,
        terminal=terminal,
        records=records,
        n_accepted=n_acc,
        n_rejected=n_rej,
        s_eval=np.array(eval_s),
        y_eval=np.array(eval_y, dtype=float).reshape(len(eval_y), dim),
    )


# ---------------------------------------------------------------------------
# profile curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventHit:
    kind: EventKind
    state: ProfileState
    dtheta: float


def _sinc(z: float) -> float:
    if abs(z) < 1e-4:
        z2 = z * z
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    return math.sin(z) / z


def frame_rhs(p: Params, eps: float) -> Callable[[float, Sequence[float]], tuple]:
    """Arc-length system for (H, r, D) with x = -lam + eps*H, theta = pi/2 + eps*D."""
    n1, lam = p.n - 1, p.lam

    def rhs(s, y):
        H, r, D = y
        z = eps * D
        sin_over = D * _sinc(z)                                   # sin(z) / eps
        half = 0.5 * z
        one_minus_cos_over = D * math.sin(half) * _sinc(half)     # (1 - cos z) / eps
        cz = math.cos(z)
        dD = -(n1 / r - r) * sin_over + H * cz + lam * one_minus_cos_over
        return (-sin_over, cz, dD)

    return rhs


@dataclass
class Trajectory:
    """Samples of a profile curve.

    ``h`` and ``tilt`` carry x + lam and theta - pi/2 at full relative
    precision; ``x`` and ``theta`` are the same data in absolute terms.
    """

    params: Params
    s: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    h: np.ndarray
    tilt: np.ndarray
    terminal: EventHit
    crossings: list[EventHit]
    n_accepted: int
    n_rejected: int
    offset: float | None = None

    def __len__(self) -> int:
        return self.s.size

    def state(self, i: int) -> ProfileState:
        return ProfileState(float(self.s[i]), float(self.x[i]), float(self.r[i]), float(self.theta[i]))

    @property
    def kappa_rot(self) -> np.ndarray:
        # -cos(theta)/r, written through the tilt so tiny angles keep their sign
        return np.sin(self.tilt) / self.r

    @property
    def kappa_prof(self) -> np.ndarray:
        return self.dtheta

    @property
    def residual(self) -> np.ndarray:
        """H + <X, nu> - lam from the plain (x, r, theta) formula, per sample."""
        n, lam = self.params.n, self.params.lam
        c, sn = np.cos(self.theta), np.sin(self.theta)
        return self.dtheta - (n - 1) * c / self.r + (-self.x * sn + self.r * c) - lam


def _frame_events(kinds, eps, event_tol) -> list[Event]:
    out = []
    for kind in kinds:
        kind = EventKind(kind)
        if kind is EventKind.TURNING_POINT:
            out.append(Event(kind.value, lambda s, y: eps * y[2] - HALF_PI, +1, True))
        elif kind is EventKind.AXIS_RETURN:
            level = 0.5 * event_tol
            out.append(Event(kind.value, lambda s, y: y[1] - level, -1, True))
        elif kind is EventKind.PLANE_CROSSING:
            out.append(Event(kind.value, lambda s, y: y[0], 0, False))
        else:
            raise ValueError(f"{kind.value} is not a locatable event")
    return out


def _run_frame(p: Params, eps: float, s0: float, y0, cfg: IntegratorConfig,
               events, offset) -> Trajectory:
    rhs = frame_rhs(p, eps)
    sol = dopri5(
        rhs, s0, y0, cfg.max_arclength,
        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
        events=_frame_events(events, eps, cfg.event_tol), event_tol=cfg.event_tol,
        domain=lambda y: y[1] > 0.0,
    )
    Y = sol.y
    H, r, D = Y[:, 0], Y[:, 1], Y[:, 2]
    dD = np.array([rhs(0.0, row)[2] for row in sol.y.tolist()])
    h, tilt = eps * H, eps * D
    x = -p.lam + h
    theta = HALF_PI + tilt
    dtheta = eps * dD

    def hit(kind, s_ev, y_ev):
        dd = rhs(0.0, y_ev)[2]
        st = ProfileState(float(s_ev), float(-p.lam + eps * y_ev[0]), float(y_ev[1]),
                          float(HALF_PI + eps * y_ev[2]))
        return EventHit(EventKind(kind), st, float(eps * dd))

    if sol.status == "event":
        terminal = hit(sol.terminal.name, sol.terminal.s, sol.terminal.y)
    else:
        kind = EventKind.MAX_LENGTH if sol.status == "end" else EventKind.STEP_FAILURE
        terminal = hit(kind, sol.s[-1], Y[-1])
    crossings = [hit(rec.name, rec.s, rec.y) for rec in sol.records]
    return Trajectory(p, sol.s, x, r, theta, dtheta, h, tilt, terminal, crossings,
                      sol.n_accepted, sol.n_rejected, offset)


def start_on_axis(p: Params, x0: float, cfg: IntegratorConfig | None = None) -> ProfileState:
    """Series start of the solution leaving the axis perpendicularly at (x0, 0)."""
    cfg = cfg or IntegratorConfig()
    s0 = cfg.series_start_step
    c = (x0 + p.lam) / p.n  # theta'(0)
    return ProfileState(s0, x0 - 0.5 * c * s0 * s0, s0 - c * c * s0 ** 3 / 6.0, HALF_PI + c * s0)


def integrate_until(p: Params, start: ProfileState, cfg: IntegratorConfig | None = None,
                    events: Iterable[EventKind] = (EventKind.TURNING_POINT,)) -> Trajectory:
    """Integrate from an arbitrary off-axis state until the first terminal event."""
    cfg = cfg or IntegratorConfig()
    if not start.r > 0.0:
        raise DomainError("start.r must be positive; use integrate_from_axis on the axis")
    y0 = (start.x + p.lam, start.r, start.theta - HALF_PI)
    return _run_frame(p, 1.0, start.s, y0, cfg, list(events), None)


def integrate_from_axis(p: Params, offset: float, cfg: IntegratorConfig | None = None,
                        events: Iterable[EventKind] = (EventKind.TURNING_POINT,)) -> Trajectory:
    """Integrate the solution leaving the axis at x0 = -lam + offset.

    ``offset`` is carried exactly, so x0 may lie closer to -lam than double
    precision can resolve in x0 itself.
    """
    cfg = cfg or IntegratorConfig()
    offset = float(offset)
    s0 = cfg.series_start_step
    n = p.n
    if offset == 0.0:
        eps, sign = 1.0, 0.0
    else:
        eps, sign = abs(offset), math.copysign(1.0, offset)
    c = sign / n  # D'(0) in the rescaled frame
    y0 = (sign * (1.0 - 0.5 * s0 * s0 / n), s0 - (eps * c) ** 2 * s0 ** 3 / 6.0, c * s0)
    return _run_frame(p, eps, s0, y0, cfg, list(events), offset)
