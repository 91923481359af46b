"""Right-hand sides of the rotational lambda-hypersurface equations.

A hypersurface of revolution about the x-axis in R^{n+1} is generated by a
profile curve (x(s), r(s)) in the half-plane r >= 0, parametrized by arc
length with tangent angle theta.  The condition H + <X, nu> = lambda (inward
normal) turns into

    x' = cos(theta)
    r' = sin(theta)
    theta' = ((n - 1)/r - r) cos(theta) + x sin(theta) + lambda

Locally the same curve can be written as a graph u(x), a graph f(r), or in
polar form rho(phi); each has its own second-order equation and all of them
are evaluated here as pure functions.  Singular loci (r = 0, u = 0, phi = 0)
raise :class:`DomainError`; series starts live in :mod:`lamsurf.integrator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "Params",
    "ProfileState",
    "GraphOverR",
    "PolarState",
    "rhs_arclength",
    "rhs_graph_over_r",
    "rhs_graph_over_x",
    "rhs_polar",
    "principal_curvatures",
    "mean_curvature",
    "lambda_residual",
]


class DomainError(ValueError):
    """Raised when an equation is evaluated on (or past) a singular locus."""


def _positive_root(lam: float, c: float) -> float:
    # (-lam + sqrt(lam^2 + 4c)) / 2 without cancellation for lam > 0
    disc = math.sqrt(lam * lam + 4.0 * c)
    if lam > 0.0:
        return 2.0 * c / (lam + disc)
    return 0.5 * (disc - lam)


@dataclass(frozen=True)
class Params:
    """Dimension ``n`` of the hypersurface and the constant ``lam``."""

    n: int
    lam: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise DomainError(f"n must be an integer, got {self.n!r}")
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if not math.isfinite(self.lam):
            raise DomainError(f"lambda must be finite, got {self.lam!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def sphere_radius(self) -> float:
        return _positive_root(self.lam, self.n)

    @property
    def cylinder_radius(self) -> float:
        return _positive_root(self.lam, self.n - 1)

    @property
    def A(self) -> float:
        """Zeroth-order coefficient of the linearization about the sphere."""
        return self.sphere_radius * math.sqrt(self.lam ** 2 + 4.0 * self.n)

    @property
    def theorem_lower(self) -> float:
        return -2.0 / math.sqrt(self.n + 2)

    @property
    def in_theorem_range(self) -> bool:
        return self.theorem_lower < self.lam < 0.0

    def to_dict(self) -> dict:
        return {"n": self.n, "lambda": self.lam}


@dataclass(frozen=True)
class ProfileState:
    s: float
    x: float
    r: float
    theta: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.s, self.x, self.r, self.theta)


@dataclass(frozen=True)
class GraphOverR:
    r: float
    f: float
    fp: float


@dataclass(frozen=True)
class PolarState:
    phi: float
    rho: float
    rhop: float


def rhs_arclength(p: Params, st: ProfileState) -> tuple[float, float, float]:
    if not st.r > 0.0:
        raise DomainError(f"r must be positive off the axis, got r={st.r!r}")
    c, s = math.cos(st.theta), math.sin(st.theta)
    dtheta = ((p.n - 1) / st.r - st.r) * c + st.x * s + p.lam
    return c, s, dtheta


def rhs_graph_over_r(p: Params, g: GraphOverR) -> float:
    """f'' for a profile written as x = f(r)."""
    if not g.r > 0.0:
        raise DomainError(f"r must be positive, got r={g.r!r}")
    q = 1.0 + g.fp * g.fp
    return q * ((g.r - (p.n - 1) / g.r) * g.fp - g.f - p.lam * math.sqrt(q))


def rhs_graph_over_x(p: Params, x: float, u: float, up: float) -> float:
    """u'' for a profile written as r = u(x)."""
    if not u > 0.0:
        raise DomainError(f"u must be positive, got u={u!r}")
    q = 1.0 + up * up
    return q * (x * up - u + (p.n - 1) / u + p.lam * math.sqrt(q))


def rhs_polar(p: Params, st: PolarState) -> float:
    """rho'' for a profile written in polar form rho(phi), phi = atan2(r, x)."""
    if not st.phi > 0.0:
        raise DomainError(f"phi must be positive, got phi={st.phi!r}")
    if not st.rho > 0.0:
        raise DomainError(f"rho must be positive, got rho={st.rho!r}")
    rho, rp = st.rho, st.rhop
    q = rho * rho + rp * rp
    cot = math.cos(st.phi) / math.sin(st.phi)
    bracket = p.n - rho * rho - (p.n - 1) * (rp / rho) * cot - p.lam * math.sqrt(q)
    return (rp * rp + q * bracket) / rho


def principal_curvatures(p: Params, st: ProfileState, dtheta: float) -> np.ndarray:
    """Principal curvatures w.r.t. the inward normal (-sin theta, cos theta alpha).

    The first n - 1 entries are the rotational curvature -cos(theta)/r, the
    last one is the profile curvature, equal to theta' in arc length.
    """
    if not st.r > 0.0:
        raise DomainError(f"r must be positive, got r={st.r!r}")
    kappa = np.full(p.n, -math.cos(st.theta) / st.r)
    kappa[-1] = dtheta
    return kappa


def mean_curvature(p: Params, st: ProfileState, dtheta: float) -> float:
    return math.fsum(principal_curvatures(p, st, dtheta))


def lambda_residual(p: Params, st: ProfileState, dtheta: float) -> float:
    """H + <X, nu> - lambda at a profile point with curvature ``dtheta``."""
    c, s = math.cos(st.theta), math.sin(st.theta)
    support = -st.x * s + st.r * c
    return mean_curvature(p, st, dtheta) + support - p.lam
