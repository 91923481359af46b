"""Linearized profile equations around the plane and around the sphere.

Plane side.  Perturbing the hyperplane x = -lam as a graph x = -lam + eps*w(r)
gives

    w'' = (r - (n - 1)/r) w' - w,     w(0) = 1, w'(0) = 0,

a Kummer equation in xi = r^2.  Sphere side.  Perturbing the sphere rho = R in
polar form, rho = R + eps*w(phi), gives

    w'' = -(n - 1) cot(phi) w' - A w,     w(0) = 1, w'(0) = 0,

with A = R sqrt(lam^2 + 4n), a Legendre-type equation in xi = cos(phi).

Both singular starts are replaced by Taylor polynomials at distance 1e-4
from the singular point.  :func:`finite_difference_check` compares w with the
central difference of the nonlinear equations in eps.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .integrator import IntegratorConfig, dopri5
from .ode_core import Params

__all__ = [
    "Side",
    "PlaneLinearization",
    "SphereLinearization",
    "LinearizationError",
    "plane_series",
    "solve_plane_linearization",
    "solve_sphere_linearization",
    "endpoint_derivatives",
    "finite_difference_check",
    "export_csv",
]

SERIES_OFFSET = 1e-4
_PLANE_TERMS = 4
_FIT_CFG = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-15, max_step=0.02, series_start_step=1e-6)


class Side(str, Enum):
    PLANE = "plane"
    SPHERE = "sphere"


class LinearizationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# plane side
# ---------------------------------------------------------------------------

def plane_series(n: int, terms: int = _PLANE_TERMS) -> np.ndarray:
    """Coefficients a_k of w = sum a_k xi^k, xi = r^2, with w(0) = 1.

    Matching powers in 4 xi w_xixi = 2 (xi - n) w_xi - w gives
    a_{k+1} = (2k - 1) a_k / (2 (k + 1)(2k + n)).
    """
    a = np.empty(terms)
    a[0] = 1.0
    for k in range(terms - 1):
        a[k + 1] = (2 * k - 1) * a[k] / (2.0 * (k + 1) * (2 * k + n))
    return a


def _plane_start(n: int, r0: float) -> tuple[float, float, float, float]:
    # (w, w', v, v') at r0, where v = dw/dxi
    a = plane_series(n)
    b = [k * c for k, c in enumerate(a)][1:]  # v = sum b_k xi^k
    xi = r0 * r0
    w = sum(c * xi ** k for k, c in enumerate(a))
    v = sum(c * xi ** k for k, c in enumerate(b))
    v_xi = sum(k * c * xi ** (k - 1) for k, c in enumerate(b) if k)
    return w, 2.0 * r0 * v, v, 2.0 * r0 * v_xi


def _plane_rhs(n: int):
    n1 = n - 1

    def rhs(r, y):
        w, wp = y
        return (wp, (r - n1 / r) * wp - w)

    return rhs


def _plane_pair_rhs(n: int):
    # w together with v = dw/dxi, which solves v'' = (r - (n + 1)/r) v' + v
    n1, n3 = n - 1, n + 1

    def rhs(r, y):
        w, wp, v, vp = y
        return (wp, (r - n1 / r) * wp - w, vp, (r - n3 / r) * vp + v)

    return rhs


@dataclass
class PlaneLinearization:
    """Samples of w and of v = dw/dxi, each from its own equation."""

    n: int
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    v: np.ndarray
    vp: np.ndarray
    w_sqrt_n: float
    w_sqrt_2n: float
    w_n_identity: float  # -4n d2w/dxi2 at xi = n, equal to w there by the equation
    dw_dxi_0: float  # extrapolated from the numerical solution
    d2w_dxi2_0: float

    @property
    def xi(self) -> np.ndarray:
        return self.r ** 2

    @property
    def dw_dxi(self) -> np.ndarray:
        return self.wp / (2.0 * self.r)

    @property
    def d2w_dxi2(self) -> np.ndarray:
        return self.vp / (2.0 * self.r)

    @property
    def sign_ok(self) -> bool:
        return self.w_sqrt_n > 0.0 and self.w_sqrt_2n < 0.0


def _xi_derivatives_at_zero(n: int, degree: int = 10, nodes: int = 24) -> tuple[float, float]:
    # tight re-solve on xi in (0, 1], then a polynomial fit of w_xi = w'/(2r)
    k = np.arange(nodes)
    xi_nodes = np.sort(0.5 * (1.0 - np.cos((2 * k + 1) * np.pi / (2 * nodes))))
    r_nodes = np.sqrt(xi_nodes)
    r0 = SERIES_OFFSET
    sol = dopri5(_plane_rhs(n), r0, _plane_start(n, r0)[:2], float(r_nodes[-1]),
                 rtol=_FIT_CFG.rel_tol, atol=_FIT_CFG.abs_tol, max_step=_FIT_CFG.max_step,
                 s_eval=r_nodes)
    if sol.s_eval.size != nodes:
        raise LinearizationError("plane re-solve did not reach every fit node")
    w_xi = sol.y_eval[:, 1] / (2.0 * sol.s_eval)
    fit = np.polynomial.Polynomial.fit(sol.s_eval ** 2, w_xi, degree, domain=[-1.0, 1.0])
    return float(fit(0.0)), float(fit.deriv()(0.0))


def solve_plane_linearization(p: Params, r_max: float | None = None,
                              cfg: IntegratorConfig | None = None) -> PlaneLinearization:
    """Integrate the plane-side equation in r from a series start at r = 1e-4.

    The solve lands exactly on sqrt(n) and sqrt(2n) for the sign checks.
    """
    cfg = cfg or IntegratorConfig()
    n = p.n
    r_max = math.sqrt(2 * n) if r_max is None else float(r_max)
    if r_max < math.sqrt(2 * n):
        raise ValueError(f"r_max must be >= sqrt(2n) = {math.sqrt(2 * n):.6g}")
    r0 = SERIES_OFFSET
    marks = [math.sqrt(n), math.sqrt(2 * n)]
    sol = dopri5(_plane_pair_rhs(n), r0, _plane_start(n, r0), r_max, rtol=cfg.rel_tol,
                 atol=cfg.abs_tol, max_step=cfg.max_step, s_eval=marks)
    if sol.status != "end":
        raise LinearizationError(f"plane solve stopped early ({sol.status})")
    d1, d2 = _xi_derivatives_at_zero(n)
    return PlaneLinearization(
        n=n, r=sol.s, w=sol.y[:, 0], wp=sol.y[:, 1], v=sol.y[:, 2], vp=sol.y[:, 3],
        w_sqrt_n=float(sol.y_eval[0, 0]), w_sqrt_2n=float(sol.y_eval[1, 0]),
        w_n_identity=float(-4.0 * n * sol.y_eval[0, 3] / (2.0 * marks[0])),
        dw_dxi_0=d1, d2w_dxi2_0=d2,
    )


# ---------------------------------------------------------------------------
# sphere side
# ---------------------------------------------------------------------------

def endpoint_derivatives(p: Params) -> tuple[float, float, float]:
    """(w_xi, w_xixi, w_xixixi) at xi = 1 for the solution with w(1) = 1."""
    n, A = p.n, p.A
    return (
        A / n,
        -(n - A) * A / (n * (n + 2)),
        (2 * n + 2 - A) * (n - A) * A / (n * (n + 2) * (n + 4)),
    )


def _sphere_start(p: Params, phi0: float) -> tuple[float, float]:
    d1, d2, d3 = endpoint_derivatives(p)
    t = -2.0 * math.sin(0.5 * phi0) ** 2  # cos(phi0) - 1 without cancellation
    w = 1.0 + d1 * t + d2 * t * t / 2.0 + d3 * t ** 3 / 6.0
    w_xi = d1 + d2 * t + d3 * t * t / 2.0
    return w, -math.sin(phi0) * w_xi


def _sphere_rhs(p: Params):
    n1, A = p.n - 1, p.A

    def rhs(phi, y):
        w, wp = y
        return (wp, -n1 * math.cos(phi) / math.sin(phi) * wp - A * w)

    return rhs


@dataclass
class SphereLinearization:
    n: int
    lam: float
    A: float
    phi: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    w_end: float  # w(pi/2)
    wp_end: float  # dw/dphi at pi/2
    xi1_derivatives: tuple[float, float, float]

    @property
    def dw_dxi_0(self) -> float:
        # dw/dphi = -sin(phi) dw/dxi
        return -self.wp_end

    @property
    def d2w_dxi2_0(self) -> float:
        # (1 - xi^2) w_xixi = n xi w_xi - A w at xi = 0
        return -self.A * self.w_end

    @property
    def d3w_dxi3_0(self) -> float:
        # (1 - xi^2) w_xixixi = (n + 2) xi w_xixi + (n - A) w_xi at xi = 0
        return (self.n - self.A) * self.dw_dxi_0

    @property
    def sign_ok(self) -> bool:
        return self.w_end < 0.0 and self.wp_end < 0.0


def solve_sphere_linearization(p: Params, cfg: IntegratorConfig | None = None,
                               phi_eval=()) -> SphereLinearization:
    """Integrate the sphere-side equation in phi from 1e-4 to pi/2."""
    cfg = cfg or IntegratorConfig()
    phi0 = SERIES_OFFSET
    sol = dopri5(_sphere_rhs(p), phi0, _sphere_start(p, phi0), 0.5 * math.pi,
                 rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step, s_eval=phi_eval)
    if sol.status != "end":
        raise LinearizationError(f"sphere solve stopped early ({sol.status})")
    return SphereLinearization(
        n=p.n, lam=p.lam, A=p.A, phi=sol.s, w=sol.y[:, 0], wp=sol.y[:, 1],
        w_end=float(sol.y[-1, 0]), wp_end=float(sol.y[-1, 1]),
        xi1_derivatives=endpoint_derivatives(p),
    )


# ---------------------------------------------------------------------------
# finite-difference check against the nonlinear equations
# ---------------------------------------------------------------------------

def _scaled_plane_rhs(p: Params, eps: float):
    # x = f(r) = -lam + eps*H(r); the graph equation divided through by eps
    n1, lam = p.n - 1, p.lam

    def rhs(r, H, Hp):
        q = eps * Hp
        root = math.sqrt(1.0 + q * q)
        return (1.0 + q * q) * ((r - n1 / r) * Hp - H - lam * eps * Hp * Hp / (root + 1.0))

    return rhs


def _scaled_sphere_rhs(p: Params, eps: float):
    # rho = R + eps*P(phi); the polar equation divided through by eps
    n1, lam, R = p.n - 1, p.lam, p.sphere_radius

    def rhs(phi, P, Pp):
        rho = R + eps * P
        a = rho * rho + (eps * Pp) ** 2
        grow = 2.0 * R * P + eps * P * P
        q = (-grow - lam * (grow + eps * Pp * Pp) / (math.sqrt(a) + R)
             - n1 * (Pp / rho) * math.cos(phi) / math.sin(phi))
        return (eps * Pp * Pp + a * q) / rho

    return rhs


def finite_difference_check(p: Params, epsilon: float = 1e-5, side: Side | str = Side.PLANE,
                            cfg: IntegratorConfig | None = None) -> float:
    """max |(u(+eps) - u(-eps)) / (2 eps) - w| over the shared grid.

    u is the nonlinear solution (x = f(r) on the plane side over
    [0, sqrt(2n)], rho(phi) on the sphere side over [0, pi/2]) with initial
    value moved by +-eps.  Each nonlinear solution is carried in scaled form
    u = u_0 + eps*U, so the central difference is (U(+eps) + U(-eps))/2 with
    no cancellation.  Both U and w are integrated as one system, which puts
    them on the same step sequence.
    """
    cfg = cfg or IntegratorConfig()
    side = Side(side)
    eps = float(epsilon)
    if not eps > 0.0:
        raise ValueError("epsilon must be positive")
    x0 = SERIES_OFFSET
    if side is Side.PLANE:
        lin, plus, minus = _plane_rhs(p.n), _scaled_plane_rhs(p, eps), _scaled_plane_rhs(p, -eps)
        w0, wp0 = _plane_start(p.n, x0)[:2]
        # all three curves have second derivative -1/n at the axis
        starts = [(w0, wp0), (w0, wp0)]
        end = math.sqrt(2 * p.n)
    else:
        lin = _sphere_rhs(p)
        plus, minus = _scaled_sphere_rhs(p, eps), _scaled_sphere_rhs(p, -eps)
        w0, wp0 = _sphere_start(p, x0)
        R = p.sphere_radius
        starts = []
        for e in (eps, -eps):
            c = -(R + e) * (2.0 * R + p.lam + e) / p.n  # P''(0)
            starts.append((1.0 + 0.5 * c * x0 * x0, c * x0))
        end = 0.5 * math.pi

    def rhs(t, y):
        dw = lin(t, y[:2])
        return (dw[0], dw[1], y[3], plus(t, y[2], y[3]), y[5], minus(t, y[4], y[5]))

    y0 = (w0, wp0) + starts[0] + starts[1]
    sol = dopri5(rhs, x0, y0, end, rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
    if sol.status != "end":
        raise LinearizationError(f"nonlinear {side.value} solve failed before {end:.6g} "
                                 f"({sol.status} at {sol.s[-1]:.6g})")
    Y = sol.y
    central = 0.5 * (Y[:, 2] + Y[:, 4])
    return float(np.max(np.abs(central - Y[:, 0])))


def export_csv(lin: PlaneLinearization | SphereLinearization, path) -> str:
    """Samples as CSV with columns (r or phi), w, w_prime."""
    path = os.fspath(path)
    if isinstance(lin, PlaneLinearization):
        var, head = lin.r, "r"
    else:
        var, head = lin.phi, "phi"
    try:
        with open(path, "w") as fh:
            fh.write(f"{head},w,w_prime\n")
            for t, w, wp in zip(var, lin.w, lin.wp):
                fh.write("%.17g,%.17g,%.17g\n" % (t, w, wp))
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path
