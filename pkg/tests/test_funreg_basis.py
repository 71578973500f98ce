import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import cox_de_boor, cox_de_boor_deriv, open_uniform_knots, penalty_by_quadrature

from gaitprint.exceptions import ConfigError
from gaitprint.funreg.basis import BSplineBasis, bspline_derivative, bspline_eval, penalty_matrix


def test_knots_match_oracle():
    np.testing.assert_allclose(BSplineBasis(0, 3, 8, 3).knots, open_uniform_knots(0, 3, 8, 3), atol=1e-15)


@given(st.floats(0.0, 3.0))
def test_partition_of_unity(t):
    assert bspline_eval(BSplineBasis(0, 3), t).sum() == pytest.approx(1.0, abs=1e-12)


def test_left_boundary_interpolates():
    B = bspline_eval(BSplineBasis(0, 3), 0.0)
    assert B[0] == 1.0 and np.all(B[1:] == 0)
    B = bspline_eval(BSplineBasis(0, 3), 3.0)
    assert B[-1] == 1.0 and np.all(B[:-1] == 0)


@pytest.mark.parametrize("lo,hi,K,p", [(0.0, 3.0, 8, 3), (1.0, 99.0, 8, 3), (0.0, 3.0, 5, 2), (1.0, 3.0, 2, 1)])
def test_matches_cox_de_boor(lo, hi, K, p):
    rng = np.random.default_rng(K + p)
    t = np.r_[rng.uniform(lo, hi, 1000), lo, hi, np.linspace(lo, hi, 7)]
    B = bspline_eval(BSplineBasis(lo, hi, K, p), t)
    knots = open_uniform_knots(lo, hi, K, p)
    ref = np.array([[cox_de_boor(x, knots, i, p) for i in range(K)] for x in t])
    assert np.max(np.abs(B - ref)) <= 1e-12


def test_derivatives_match_oracle():
    basis = BSplineBasis(0, 3, 8, 3)
    knots = open_uniform_knots(0, 3, 8, 3)
    t = np.random.default_rng(1).uniform(0.01, 2.99, 200)
    for r in (1, 2):
        D = bspline_derivative(basis, t, r)
        ref = np.array([[cox_de_boor_deriv(x, knots, i, 3, r) for i in range(8)] for x in t])
        np.testing.assert_allclose(D, ref, atol=1e-10)


def test_out_of_domain_clamped():
    b = BSplineBasis(0, 3)
    np.testing.assert_array_equal(bspline_eval(b, [-1.0, 4.0]), bspline_eval(b, [0.0, 3.0]))


def test_shape_contract():
    assert bspline_eval(BSplineBasis(0, 3), np.zeros((4, 5))).shape == (4, 5, 8)


def test_invalid_basis():
    with pytest.raises(ConfigError):
        BSplineBasis(1, 1)
    with pytest.raises(ConfigError):
        BSplineBasis(0, 1, K=3, degree=3)


# -- penalty ---------------------------------------------------------------------

def test_penalty_matches_quadrature_oracle():
    P = penalty_matrix(BSplineBasis(0, 3, 8, 3))
    ref = penalty_by_quadrature(0, 3, 8, 3)
    np.testing.assert_allclose(P, ref, rtol=1e-9, atol=1e-10 * np.abs(ref).max())


def test_penalty_null_space_is_linear():
    basis = BSplineBasis(0, 3, 8, 3)
    P = penalty_matrix(basis)
    g = basis.greville()
    for c in (np.ones(8), g, 2.5 - 0.7 * g):
        assert abs(c @ P @ c) <= 1e-10 * np.abs(P).max()
    # a quadratic has positive roughness
    grid = np.linspace(0, 3, 50)
    c_quad = np.linalg.lstsq(bspline_eval(basis, grid), grid ** 2, rcond=None)[0]
    assert c_quad @ P @ c_quad > 1e-3


@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8))
@settings(max_examples=50)
def test_penalty_psd(c):
    c = np.asarray(c)
    P = penalty_matrix(BSplineBasis(0, 3, 8, 3))
    assert c @ P @ c >= -1e-9 * (1 + c @ c)


def test_linear_basis_has_zero_second_derivative_penalty():
    assert np.all(penalty_matrix(BSplineBasis(1, 3, 2, 1)) == 0)
