import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

import oracles
from lamsurf.linearization import (
    Side, endpoint_derivatives, export_csv, finite_difference_check, plane_series,
    solve_plane_linearization, solve_sphere_linearization,
)
from lamsurf.ode_core import Params


# ---------------------------------------------------------------------------
# plane side
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(2, 9))
def test_plane_series_matches_kummer_coefficients(n):
    # w = M(-1/2, n/2, xi/2): a_k = (-1/2)_k / ((n/2)_k k!) 2^-k
    k = np.arange(6)
    want = special.poch(-0.5, k) / (special.poch(0.5 * n, k) * special.factorial(k)) * 0.5 ** k
    assert np.allclose(plane_series(n, 6), want, rtol=1e-15, atol=0)


@pytest.mark.parametrize("n", range(2, 9))
def test_plane_solution_matches_kummer_function(n):
    lin = solve_plane_linearization(Params(n, -0.5))
    assert np.max(np.abs(lin.w - oracles.plane_w(n, lin.r))) <= 1e-9
    assert lin.w_sqrt_n == pytest.approx(float(oracles.plane_w(n, math.sqrt(n))), abs=1e-9)
    assert lin.w_sqrt_2n == pytest.approx(float(oracles.plane_w(n, math.sqrt(2 * n))), abs=1e-9)


@pytest.mark.parametrize("n", range(2, 9))
def test_plane_signs_and_axis_derivatives(n):
    lin = solve_plane_linearization(Params(n, -0.3))
    assert lin.w_sqrt_n > 0 > lin.w_sqrt_2n
    assert lin.sign_ok
    assert lin.dw_dxi_0 == pytest.approx(-1 / (2 * n), abs=1e-8)
    assert lin.d2w_dxi2_0 == pytest.approx(-1 / (4 * n * (n + 2)), abs=1e-8)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_plane_monotone_and_concave_in_xi(n):
    lin = solve_plane_linearization(Params(n, -0.3))
    assert np.all(lin.dw_dxi <= -1 / (2 * n) * (1 - 1e-9))
    assert np.all(lin.d2w_dxi2 < 0)
    assert np.all(np.diff(lin.w) < 0)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_plane_identity_at_xi_equal_n(n):
    # at xi = n the equation 4 xi w'' = 2 (xi - n) w' - w reduces to w = -4 n w''
    lin = solve_plane_linearization(Params(n, -0.3))
    assert lin.w_n_identity == pytest.approx(lin.w_sqrt_n, abs=1e-8)
    assert lin.w_n_identity > 0


def test_plane_derivative_routes_agree():
    # v = dw/dxi from its own equation vs w'/(2r) from w's
    lin = solve_plane_linearization(Params(4, -0.3))
    assert np.max(np.abs(lin.v - lin.dw_dxi)) <= 1e-9


def test_plane_rejects_short_interval():
    with pytest.raises(ValueError):
        solve_plane_linearization(Params(2, -0.3), r_max=1.5)


# ---------------------------------------------------------------------------
# sphere side
# ---------------------------------------------------------------------------

def _lam_grid(n):
    # 20 points in (lower, 0]: lower * k/20, k = 0..19
    return [-2 / math.sqrt(n + 2) * k / 20 for k in range(20)]


@pytest.mark.parametrize("n", range(2, 9))
def test_sphere_solution_matches_hypergeometric(n):
    for lam in _lam_grid(n)[::6]:
        p = Params(n, lam)
        lin = solve_sphere_linearization(p)
        assert np.max(np.abs(lin.w - oracles.sphere_w(n, p.A, lin.phi))) <= 1e-9
        assert np.max(np.abs(lin.wp - oracles.sphere_w_prime(n, p.A, lin.phi))) <= 1e-8


@pytest.mark.parametrize("n", range(2, 9))
def test_sphere_signs_on_lambda_grid(n):
    for lam in _lam_grid(n):
        lin = solve_sphere_linearization(Params(n, lam))
        assert lin.w_end < 0 and lin.wp_end < 0, lam
        assert lin.d2w_dxi2_0 > 0 and lin.d3w_dxi3_0 < 0, lam


def test_sphere_xi_derivatives_at_the_equator():
    p = Params(3, -0.4)
    lin = solve_sphere_linearization(p)
    A = p.A
    # w(xi) = 2F1(a, b; n/2; (1 - xi)/2) differentiated at xi = 0 (z = 1/2)
    a, b = oracles.sphere_ab(3, A)
    d1 = -0.5 * a * b / 1.5 * special.hyp2f1(a + 1, b + 1, 2.5, 0.5)
    d2 = 0.25 * a * (a + 1) * b * (b + 1) / (1.5 * 2.5) * special.hyp2f1(a + 2, b + 2, 3.5, 0.5)
    assert lin.dw_dxi_0 == pytest.approx(d1, abs=1e-8)
    assert lin.d2w_dxi2_0 == pytest.approx(d2, abs=1e-8)


# ---------------------------------------------------------------------------
# endpoint derivatives
# ---------------------------------------------------------------------------

def test_endpoint_derivatives_example():
    # n = 2, lam = 0: A = 4
    d = endpoint_derivatives(Params(2, 0.0))
    assert d == pytest.approx((2.0, 1.0, -1.0 / 3.0), abs=1e-15)


def test_endpoint_third_derivative_vanishes_at_boundary_case():
    # n = 2, lam = -1: A = 2 * 3 = 6 = 2n + 2
    assert endpoint_derivatives(Params(2, -1.0))[2] == 0.0


@pytest.mark.parametrize("n", range(2, 9))
def test_endpoint_derivatives_match_hypergeometric_taylor(n):
    for lam in (-0.9, -0.3, 0.0, 0.4):
        p = Params(n, lam)
        got = endpoint_derivatives(p)
        for k in (1, 2, 3):
            assert got[k - 1] == pytest.approx(oracles.xi_derivatives_at_one(n, p.A, k),
                                               rel=1e-12, abs=1e-14)


@given(st.integers(2, 8), st.integers(1, 1000))
def test_endpoint_formulas_exact_in_rationals(n, num):
    # with A rational the three formulas are exact rationals; compare in Fraction
    A = Fraction(num, 100)
    want = (A / n, -(n - A) * A / (n * (n + 2)),
            (2 * n + 2 - A) * (n - A) * A / (n * (n + 2) * (n + 4)))

    class Fixed(Params):
        @property
        def A(self):
            return float(A)

    got = endpoint_derivatives(Fixed(n, 0.0))
    for g, w in zip(got, want):
        assert abs(g - float(w)) <= 1e-14 * max(1.0, abs(float(w)))


@settings(max_examples=30)
@given(st.integers(2, 8), st.floats(0.0, 0.999))
def test_endpoint_signs_in_theorem_range(n, frac):
    p = Params(n, -frac * 2 / math.sqrt(n + 2))
    d1, d2, d3 = endpoint_derivatives(p)
    assert d1 > 0 and d2 > 0 and d3 < 0


def test_A_positive_and_decreasing_in_lambda():
    for n in range(2, 9):
        A = np.array([Params(n, l).A for l in np.linspace(-2.0, 0.0, 41)])
        assert np.all(A > 0)
        assert np.all(np.diff(A) < 0)
        assert all(Params(n, l).A > 0 for l in np.linspace(0.0, 2.0, 21))


# ---------------------------------------------------------------------------
# finite-difference check
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("side", [Side.PLANE, Side.SPHERE])
@pytest.mark.parametrize("n", [2, 3])
def test_finite_difference_is_second_order(side, n):
    p = Params(n, -0.5)
    d1 = finite_difference_check(p, 1e-5, side)
    d2 = finite_difference_check(p, 5e-6, side)
    assert d1 <= 1e-6
    # Richardson: an O(eps^2) deviation drops by 4 when eps halves
    assert 3.5 <= d1 / d2 <= 4.5
    # extrapolated deviation is far below either
    assert abs(4 * d2 - d1) / 3 <= 0.1 * d2


def test_finite_difference_example_values():
    assert finite_difference_check(Params(2, -0.5), 1e-5, "plane") <= 1e-6
    assert finite_difference_check(Params(2, 0.0), 1e-5, "sphere") <= 1e-6


def test_finite_difference_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        finite_difference_check(Params(2, -0.5), 0.0)


def test_export_csv(tmp_path):
    lin = solve_sphere_linearization(Params(2, -0.3))
    path = export_csv(lin, tmp_path / "sphere.csv")
    lines = open(path).read().splitlines()
    assert lines[0] == "phi,w,w_prime"
    assert len(lines) == lin.phi.size + 1
    row = [float(v) for v in lines[-1].split(",")]
    assert row == [lin.phi[-1], lin.w[-1], lin.wp[-1]]
