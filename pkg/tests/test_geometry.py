import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

import oracles
from lamsurf.geometry import (
    CSV_COLUMNS, HypersurfaceProfile, TriangleMesh, Unsupported, certify, export,
    is_simple_polyline, load_profile_json, revolve_mesh,
)
from lamsurf.ode_core import Params
from lamsurf.shooting import RootResult, assemble_closed_profile, find_root, shoot


def _sphere_profile(n=2, lam=-1.0):
    p = Params(n, lam)
    R = p.sphere_radius
    out = shoot(p, offset=R + lam)
    root = RootResult(R, R + lam, out.r_star, out.s_star, (R + lam, R + lam), 0,
                      abs(out.x_star), 1e-8)
    return assemble_closed_profile(p, root)


@pytest.fixture(scope="module")
def sphere():
    return _sphere_profile()


@pytest.fixture(scope="module")
def figure_profile():
    p = Params(2, -1.0)
    return assemble_closed_profile(p, find_root(p, (0.2, 0.4)))


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def test_sphere_certificate(sphere):
    cert = certify(sphere)
    assert cert.convex and cert.simple
    assert cert.min_curvature == pytest.approx(0.5, abs=1e-8)
    assert cert.max_residual <= 1e-8
    assert not cert.refined
    assert np.allclose(sphere.kappa, 0.5, atol=1e-8)


def test_flipped_profile_is_not_convex(sphere):
    cert = certify(sphere.flipped())
    assert not cert.convex
    assert cert.min_curvature == pytest.approx(-0.5, abs=1e-8)
    # the flipped curve solves the equation for -lam, not lam
    assert cert.max_residual > 1.0


def test_figure_profile_is_certified(figure_profile):
    cert = certify(figure_profile)
    assert cert.convex and cert.simple
    assert cert.max_residual <= 1e-8
    kap = figure_profile.kappa
    assert np.array_equal(kap, kap[::-1])


def test_deep_root_triggers_refinement():
    p = Params(2, -0.1)
    prof = assemble_closed_profile(p, find_root(p, (1e-300, 0.5)))
    cert = certify(prof)
    assert cert.refined and cert.refined_min_curvature > 0
    assert cert.convex and cert.simple and cert.max_residual <= 1e-8
    assert prof.x_hat < p.sphere_radius and prof.offset > 0


def test_residual_uses_the_axis_limit(sphere):
    res = sphere.residual
    assert abs(res[0]) <= 1e-10 and abs(res[-1]) <= 1e-8


# ---------------------------------------------------------------------------
# simplicity
# ---------------------------------------------------------------------------

def test_simple_examples():
    t = np.linspace(0, math.pi, 200)
    assert is_simple_polyline(np.cos(t), np.sin(t))
    # figure eight through the origin at s = pi and s = 2 pi
    s = np.linspace(0.2, 2 * math.pi + 0.4, 400)
    assert not is_simple_polyline(np.sin(s), np.sin(2 * s))
    assert not oracles.brute_force_simple(np.sin(s), np.sin(2 * s))
    assert not is_simple_polyline([0, 2, 1], [0, 0, 0])       # folds back on itself
    assert not is_simple_polyline([0, 1, 1, 0.5, 0.5], [0, 0, 1, 1, -1])
    assert is_simple_polyline([0, 1], [0, 0])


coords = st.integers(-4, 4)


@given(st.lists(st.tuples(coords, coords), min_size=2, max_size=9))
def test_simplicity_matches_exact_brute_force(pts):
    assume(all(a != b for a, b in zip(pts, pts[1:])))
    x = [float(a) for a, _ in pts]
    y = [float(b) for _, b in pts]
    assert is_simple_polyline(x, y) == oracles.brute_force_simple(x, y)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=30))
def test_simplicity_matches_brute_force_on_random_floats(pts):
    assume(all(a != b for a, b in zip(pts, pts[1:])))
    x, y = zip(*pts)
    assert is_simple_polyline(x, y) == oracles.brute_force_simple(x, y)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def test_sphere_mesh(sphere):
    R = 2.0
    mesh = revolve_mesh(sphere, 64)
    assert np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - R)) <= 1e-8
    assert mesh.euler_characteristic == 2
    assert mesh.signed_volume() > 0
    assert mesh.signed_volume() == pytest.approx(4 / 3 * math.pi * R ** 3, rel=1e-2)
    # every face normal points away from the centre
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    normals = np.cross(b - a, c - a)
    assert np.all(np.einsum("ij,ij->i", normals, (a + b + c) / 3) > 0)


def _toy_profile(N):
    s = np.linspace(0, math.pi, N)
    p = Params(2, 0.0)
    ones = np.ones(N)
    return HypersurfaceProfile(p, s, np.cos(s), np.sin(s) * (np.arange(N) % (N - 1) != 0),
                               s + math.pi / 2, ones, ones, math.pi / 2, 0.0)


@pytest.mark.parametrize("N,m", [(4, 3), (5, 8), (12, 5)])
def test_mesh_counts_by_hand(N, m):
    mesh = revolve_mesh(_toy_profile(N), m)
    # 2 poles + m per interior sample; fans of m at each pole and two
    # triangles per quad between consecutive rings
    assert mesh.vertices.shape[0] == 2 + m * (N - 2)
    assert mesh.faces.shape[0] == 2 * m + 2 * m * (N - 3) == 2 * m * (N - 2)
    assert mesh.euler_characteristic == 2
    # closed and consistently oriented: every directed edge appears once and
    # its reverse once
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    as_set = {tuple(e) for e in directed.tolist()}
    assert len(as_set) == directed.shape[0]
    assert all((b, a) in as_set for a, b in as_set)


def test_mesh_refuses_other_dimensions():
    with pytest.raises(Unsupported):
        revolve_mesh(_sphere_profile(3, -0.5))
    with pytest.raises(ValueError):
        revolve_mesh(_toy_profile(5), 2)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def test_csv_export(figure_profile, tmp_path):
    path = export(figure_profile, "csv", tmp_path / "p.csv")
    lines = open(path).read().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == len(figure_profile) + 1
    row = [float(v) for v in lines[5].split(",")]
    assert row[:5] == [figure_profile.s[4], figure_profile.x[4], figure_profile.r[4],
                       figure_profile.theta[4], figure_profile.dtheta[4]]


def test_json_round_trip(figure_profile, tmp_path):
    cert = certify(figure_profile)
    path = export(figure_profile, "json", tmp_path / "p.json", cert)
    prof, cert2 = load_profile_json(path)
    for name in ("s", "x", "r", "theta", "dtheta", "kappa_rot"):
        assert np.array_equal(getattr(prof, name), getattr(figure_profile, name))
    assert prof.params == figure_profile.params
    assert (prof.s_hat, prof.x_hat, prof.offset) == (figure_profile.s_hat, figure_profile.x_hat,
                                                     figure_profile.offset)
    assert cert2 == cert
    doc = json.load(open(path))
    assert doc["params"] == {"n": 2, "lambda": -1.0}


def test_obj_export(sphere, tmp_path):
    mesh = revolve_mesh(sphere, 16)
    path = export(mesh, "obj", tmp_path / "s.obj")
    lines = open(path).read().splitlines()
    v = [l for l in lines if l.startswith("v ")]
    f = [l for l in lines if l.startswith("f ")]
    assert len(v) == mesh.vertices.shape[0] and len(f) == mesh.faces.shape[0]
    back = np.array([[float(t) for t in l.split()[1:]] for l in v])
    assert np.array_equal(back, mesh.vertices)
    idx = np.array([[int(t) for t in l.split()[1:]] for l in f])
    assert idx.min() == 1 and idx.max() == mesh.vertices.shape[0]


def test_export_errors(sphere, tmp_path):
    with pytest.raises(ValueError):
        export(sphere, "obj", tmp_path / "x.obj")
    with pytest.raises(ValueError):
        export(revolve_mesh(sphere, 8), "csv", tmp_path / "x.csv")
    with pytest.raises(TypeError):
        export(object(), "csv", tmp_path / "x.csv")
    with pytest.raises(OSError, match="could not write"):
        export(sphere, "csv", tmp_path / "missing" / "x.csv")
