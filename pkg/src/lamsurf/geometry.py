"""Closed profile curves, their certificates, and file export.

A closed profile runs from the axis point (x_hat, 0) over the turning point
to the mirror point (-x_hat, 0).  The rotational curvature is stored as its
own array rather than recomputed from theta: near the plane x = -lam the tilt
theta - pi/2 can be 1e-50 or smaller, and -cos(theta)/r evaluated on the
rounded angle would lose its sign.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .integrator import IntegratorConfig, Trajectory, integrate_from_axis
from .ode_core import Params

__all__ = [
    "Unsupported",
    "HypersurfaceProfile",
    "Certificate",
    "TriangleMesh",
    "certify",
    "is_simple_polyline",
    "revolve_mesh",
    "export",
    "export_trajectory",
    "load_profile_json",
]

CSV_COLUMNS = ("s", "x", "r", "theta", "dtheta", "kappa_1", "kappa_n", "residual")
REFINE_BELOW = 1e-3


class Unsupported(ValueError):
    """Operation not available for these parameters."""


@dataclass
class HypersurfaceProfile:
    """Samples (s, x, r, theta, dtheta) of a closed profile on [0, 2 s_hat].

    ``kappa_rot`` holds -cos(theta)/r, including its limit dtheta(0) at the
    two axis points.  ``offset`` is x_hat + lam when the profile came from a
    shot off the axis; it lets :func:`certify` re-integrate the first half.
    """

    params: Params
    s: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    kappa_rot: np.ndarray
    s_hat: float
    x_hat: float
    offset: float | None = None
    junction_gap: float = 0.0

    def __len__(self) -> int:
        return self.s.size

    @property
    def kappa(self) -> np.ndarray:
        """(samples, n) array of principal curvatures."""
        n = self.params.n
        out = np.repeat(self.kappa_rot[:, None], n, axis=1)
        out[:, -1] = self.dtheta
        return out

    @property
    def residual(self) -> np.ndarray:
        # H + <X, nu> - lam; at r = 0 the rotational terms use their limit
        n, lam = self.params.n, self.params.lam
        c, sn = np.cos(self.theta), np.sin(self.theta)
        on_axis = self.r <= 0.0
        r_safe = np.where(on_axis, 1.0, self.r)
        k_rot = np.where(on_axis, self.kappa_rot, -c / r_safe)
        return self.dtheta + (n - 1) * k_rot + (-self.x * sn + self.r * c) - lam

    @property
    def min_curvature(self) -> float:
        return float(min(self.kappa_rot.min(), self.dtheta.min()))

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def flipped(self) -> "HypersurfaceProfile":
        """Same curve with the opposite normal, so every curvature changes sign."""
        return HypersurfaceProfile(self.params, self.s, self.x, self.r, self.theta + math.pi,
                                   -self.dtheta, -self.kappa_rot, self.s_hat, self.x_hat,
                                   None, self.junction_gap)


@dataclass
class Certificate:
    convex: bool
    min_curvature: float
    max_residual: float
    simple: bool
    refined: bool = False
    refined_min_curvature: float | None = None

    def to_dict(self) -> dict:
        return {
            "convex": self.convex,
            "min_curvature": self.min_curvature,
            "max_residual": self.max_residual,
            "simple": self.simple,
            "refined": self.refined,
            "refined_min_curvature": self.refined_min_curvature,
        }


# ---------------------------------------------------------------------------
# simplicity
# ---------------------------------------------------------------------------

def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_segment(ax, ay, bx, by, cx, cy):
    # c collinear with ab: is it inside the bounding box of ab?
    return ((np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx))
            & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by)))


def is_simple_polyline(x, y) -> bool:
    """True when no two non-adjacent segments of the polyline meet and no
    segment folds back onto its predecessor.

    Sort-and-sweep on the x extent of the segments; candidate pairs are
    screened by y extent and then decided with orientation signs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.size - 1
    if m < 2:
        return True
    x0, y0, x1, y1 = x[:-1], y[:-1], x[1:], y[1:]
    # adjacent segments share a vertex; they overlap only by folding straight back
    ex, ey = np.diff(x), np.diff(y)
    fold = (ex[:-1] * ey[1:] - ey[:-1] * ex[1:] == 0) & (ex[:-1] * ex[1:] + ey[:-1] * ey[1:] < 0)
    if np.any(fold):
        return False
    xlo, xhi = np.minimum(x0, x1), np.maximum(x0, x1)
    ylo, yhi = np.minimum(y0, y1), np.maximum(y0, y1)
    order = np.argsort(xlo, kind="stable")
    xlo_sorted = xlo[order]
    for pos in range(m):
        i = order[pos]
        stop = np.searchsorted(xlo_sorted, xhi[i], side="right")
        cand = order[pos + 1:stop]
        if cand.size == 0:
            continue
        cand = cand[(np.abs(cand - i) > 1) & (ylo[cand] <= yhi[i]) & (yhi[cand] >= ylo[i])]
        if cand.size == 0:
            continue
        ax, ay, bx, by = x0[i], y0[i], x1[i], y1[i]
        cx, cy, dx, dy = x0[cand], y0[cand], x1[cand], y1[cand]
        o1 = _orient(ax, ay, bx, by, cx, cy)
        o2 = _orient(ax, ay, bx, by, dx, dy)
        o3 = _orient(cx, cy, dx, dy, ax, ay)
        o4 = _orient(cx, cy, dx, dy, bx, by)
        proper = (o1 * o2 < 0) & (o3 * o4 < 0)
        touch = (((o1 == 0) & _on_segment(ax, ay, bx, by, cx, cy))
                 | ((o2 == 0) & _on_segment(ax, ay, bx, by, dx, dy))
                 | ((o3 == 0) & _on_segment(cx, cy, dx, dy, ax, ay))
                 | ((o4 == 0) & _on_segment(cx, cy, dx, dy, bx, by)))
        if np.any(proper | touch):
            return False
    return True


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def certify(profile: HypersurfaceProfile, cfg: IntegratorConfig | None = None) -> Certificate:
    """Convexity, residual and embeddedness of a closed profile.

    When the smallest sampled curvature is below 1e-3 the first half is
    integrated again with a step cap of a quarter of the widest sample gap,
    and convexity must hold on that finer grid as well.
    """
    cfg = cfg or IntegratorConfig()
    kmin = profile.min_curvature
    convex = bool(kmin > 0.0)
    simple = is_simple_polyline(profile.x, profile.r)
    cert = Certificate(convex, kmin, profile.max_residual, simple)
    if kmin < REFINE_BELOW and profile.offset is not None:
        gap = float(np.max(np.diff(profile.s)))
        fine_cfg = cfg.replace(max_step=0.25 * gap,
                               series_start_step=min(cfg.series_start_step, 0.25 * gap))
        tr = integrate_from_axis(profile.params, profile.offset, fine_cfg)
        fine_min = float(min(tr.kappa_rot.min(), tr.dtheta.min()))
        cert.refined = True
        cert.refined_min_curvature = fine_min
        cert.convex = convex and fine_min > 0.0
    return cert


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) zero-based

    @property
    def euler_characteristic(self) -> int:
        edges = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                                        self.faces[:, [2, 0]]]), axis=1)
        n_edges = np.unique(edges, axis=0).shape[0]
        return int(self.vertices.shape[0] - n_edges + self.faces.shape[0])

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def revolve_mesh(profile: HypersurfaceProfile, azimuthal_resolution: int = 64) -> TriangleMesh:
    """Triangulate the n = 2 surface swept by the profile around the x-axis.

    The first and last samples must lie on the axis; they become single pole
    vertices joined to the neighbouring ring by triangle fans.  Faces are
    wound so that their normals point out of the enclosed body.
    """
    if profile.params.n != 2:
        raise Unsupported("mesh export needs n = 2; use the profile CSV for higher n")
    m = int(azimuthal_resolution)
    if m < 3:
        raise ValueError(f"azimuthal_resolution must be >= 3, got {azimuthal_resolution}")
    N = len(profile)
    if N < 3:
        raise ValueError("profile needs at least one sample off the axis")
    alpha = 2.0 * math.pi * np.arange(m) / m
    xs, rs = profile.x[1:-1], profile.r[1:-1]
    ring = np.stack([np.repeat(xs, m), np.outer(rs, np.cos(alpha)).ravel(),
                     np.outer(rs, np.sin(alpha)).ravel()], axis=1)
    verts = np.vstack([[profile.x[0], 0.0, 0.0], ring, [profile.x[-1], 0.0, 0.0]])
    top = verts.shape[0] - 1
    rings = N - 2

    j = np.arange(m)
    jn = (j + 1) % m
    faces = [np.stack([np.zeros(m, dtype=int), 1 + jn, 1 + j], axis=1)]
    for k in range(rings - 1):
        a = 1 + k * m + j
        b = 1 + k * m + jn
        c = 1 + (k + 1) * m + j
        d = 1 + (k + 1) * m + jn
        faces.append(np.stack([a, b, d], axis=1))
        faces.append(np.stack([a, d, c], axis=1))
    last = 1 + (rings - 1) * m
    faces.append(np.stack([last + j, last + jn, np.full(m, top)], axis=1))
    mesh = TriangleMesh(verts, np.concatenate(faces).astype(np.int64))
    if mesh.signed_volume() < 0.0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def _profile_dict(profile: HypersurfaceProfile, certificate: Certificate | None) -> dict:
    return {
        "params": profile.params.to_dict(),
        "s_hat": profile.s_hat,
        "x_hat": profile.x_hat,
        "offset": profile.offset,
        "junction_gap": profile.junction_gap,
        "samples": {
            "s": profile.s.tolist(),
            "x": profile.x.tolist(),
            "r": profile.r.tolist(),
            "theta": profile.theta.tolist(),
            "dtheta": profile.dtheta.tolist(),
            "kappa_rot": profile.kappa_rot.tolist(),
        },
        "min_curvature": profile.min_curvature,
        "max_residual": profile.max_residual,
        "certificate": None if certificate is None else certificate.to_dict(),
    }


def export(obj, fmt: str, path, certificate: Certificate | None = None) -> str:
    """Write a profile (csv, json) or a mesh (obj) to ``path``; returns the path."""
    path = os.fspath(path)
    fmt = fmt.lower()
    try:
        if isinstance(obj, TriangleMesh):
            if fmt != "obj":
                raise ValueError(f"meshes export as obj, not {fmt!r}")
            with open(path, "w") as fh:
                for v in obj.vertices:
                    fh.write("v %s %s %s\n" % (_fmt(v[0]), _fmt(v[1]), _fmt(v[2])))
                for f in obj.faces + 1:
                    fh.write("f %d %d %d\n" % (f[0], f[1], f[2]))
        elif isinstance(obj, HypersurfaceProfile):
            if fmt == "csv":
                res = obj.residual
                with open(path, "w") as fh:
                    fh.write(",".join(CSV_COLUMNS) + "\n")
                    for i in range(len(obj)):
                        row = (obj.s[i], obj.x[i], obj.r[i], obj.theta[i], obj.dtheta[i],
                               obj.kappa_rot[i], obj.dtheta[i], res[i])
                        fh.write(",".join(_fmt(v) for v in row) + "\n")
            elif fmt == "json":
                with open(path, "w") as fh:
                    json.dump(_profile_dict(obj, certificate), fh, indent=1)
                    fh.write("\n")
            else:
                raise ValueError(f"profiles export as csv or json, not {fmt!r}")
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path


def load_profile_json(path) -> tuple[HypersurfaceProfile, Certificate | None]:
    with open(os.fspath(path)) as fh:
        d = json.load(fh)
    smp = d["samples"]
    params = Params(d["params"]["n"], d["params"]["lambda"])
    prof = HypersurfaceProfile(
        params,
        *(np.array(smp[k], dtype=float) for k in ("s", "x", "r", "theta", "dtheta", "kappa_rot")),
        s_hat=d["s_hat"], x_hat=d["x_hat"], offset=d["offset"], junction_gap=d["junction_gap"],
    )
    cert = None if d["certificate"] is None else Certificate(**d["certificate"])
    return prof, cert


def export_trajectory(tr: Trajectory, fmt: str, path) -> str:
    """Write a single shot (csv or json), same columns as a closed profile."""
    path = os.fspath(path)
    fmt = fmt.lower()
    res = tr.residual
    cols = (tr.s, tr.x, tr.r, tr.theta, tr.dtheta, tr.kappa_rot, tr.dtheta, res)
    try:
        if fmt == "csv":
            with open(path, "w") as fh:
                fh.write(",".join(CSV_COLUMNS) + "\n")
                for row in zip(*cols):
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
        elif fmt == "json":
            st = tr.terminal.state
            doc = {
                "params": tr.params.to_dict(),
                "offset": tr.offset,
                "terminal": {"kind": tr.terminal.kind.value, "s": st.s, "x": st.x, "r": st.r,
                             "theta": st.theta, "dtheta": tr.terminal.dtheta},
                "n_accepted": tr.n_accepted,
                "n_rejected": tr.n_rejected,
                "samples": {k: c.tolist() for k, c in zip(CSV_COLUMNS, cols)},
            }
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
        else:
            raise ValueError(f"trajectories export as csv or json, not {fmt!r}")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    return path
