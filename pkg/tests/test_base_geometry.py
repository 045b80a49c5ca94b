import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from lorbundle.base import (OneForm, ProductBase, ScalarField, TorusCircle, TwoForm, WarpedLine, base_frame,
                            calculus, christoffel_h, eta_is_recurrent, metricity_residual, nabla_eta,
                            psi_endomorphism)
from lorbundle.errors import DomainError
from lorbundle.ricci_flat import TorusGridField

angles = st.floats(0.0, 2 * np.pi, allow_nan=False)


def flat_t2():
    return ProductBase([TorusCircle("x"), TorusCircle("y")])


def test_flat_torus_christoffels_vanish():
    assert np.all(christoffel_h(flat_t2(), [0.3, 1.0, 2.0]) == 0)


def test_exponential_warp_christoffel():
    base = ProductBase([WarpedLine("y", "exp(y)")])
    gam = christoffel_h(base, [0.0, 0.0])
    assert gam[1, 1, 1] == pytest.approx(1.0, abs=1e-14)


def test_mixed_base_has_no_cross_terms():
    base = ProductBase([WarpedLine("y", "exp(y)"), TorusCircle("x")])
    gam = christoffel_h(base, [0.1, 0.4, 1.3])
    assert gam[1, 2, 2] == 0.0
    assert gam[2, 1, 2] == 0.0


def test_vanishing_warp_is_a_domain_error():
    base = ProductBase([WarpedLine("y", "y")])
    with pytest.raises(DomainError):
        christoffel_h(base, [0.0, 0.0])


def test_laplacian_of_cos_matches_spectral_oracle():
    base = ProductBase([TorusCircle("x")])
    u, x = base.coords
    f = ScalarField(sp.cos(x), base.coords)
    grid = TorusGridField.from_function(np.cos, 1, 64)
    for xx in (0.0, 0.7, 2.5):
        res = calculus(base, f, [0.2, xx])
        assert res.laplacian == pytest.approx(float(grid.laplacian_at(np.array([[xx]]))[0]), abs=1e-12)


def test_divergence_of_cos_dx_matches_spectral_oracle():
    base = flat_t2()
    u, x, y = base.coords
    alpha = OneForm([0, sp.cos(x), 0], base.coords)
    grid = TorusGridField.from_function(lambda X, Y: np.cos(X), 2, 32)
    d_grid = np.real(np.fft.ifftn(1j * np.fft.fftfreq(32, 1 / 32)[:, None] * np.fft.fftn(grid.values)))
    for i in (0, 5, 11):
        xx = 2 * np.pi * i / 32
        assert calculus(base, alpha, [0.0, xx, 1.0]).div == pytest.approx(d_grid[i, 0], abs=1e-12)
        assert calculus(base, alpha, [0.0, xx, 1.0]).div == pytest.approx(-np.sin(xx), abs=1e-12)


def test_constant_field_has_zero_gradient_and_laplacian():
    base = flat_t2()
    res = calculus(base, ScalarField(sp.Integer(3), base.coords), [0.1, 0.2, 0.3])
    assert np.all(res.grad == 0) and res.laplacian == 0


WARPED = ProductBase([WarpedLine("y", "exp(y/2)"), TorusCircle("x")])
_u, _y, _x = WARPED.coords
WARPED_F = ScalarField(sp.sin(_x) * _y**2 + sp.cos(_u), WARPED.coords)
WARPED_DF = OneForm([sp.diff(WARPED_F.expr, s) for s in WARPED.coords], WARPED.coords)


@given(y=st.floats(-2, 2), x=angles)
def test_warped_calculus_consistency(y, x):
    base, f, df = WARPED, WARPED_F, WARPED_DF
    p = [0.3, y, x]
    res = calculus(base, f, p)
    assert np.allclose(res.hessian, res.hessian.T, atol=1e-12)
    # div(grad f) computed as the divergence of the one-form df
    assert calculus(base, df, p).div == pytest.approx(res.laplacian, rel=1e-10, abs=1e-10)
    numeric = ScalarField(func=lambda q: np.sin(q[2]) * q[1] ** 2 + np.cos(q[0]))
    assert np.allclose(numeric.partials(p), f.partials(p), rtol=1e-6, atol=1e-8)
    assert metricity_residual(base, p) <= 1e-12


def test_nabla_eta_for_du_vanishes():
    assert np.all(nabla_eta(flat_t2(), [0.5, 0.1, 0.2]) == 0)


def test_nabla_eta_for_rho_du():
    base = ProductBase([TorusCircle("x")], rho="2 + cos(u)")
    assert nabla_eta(base, [0.0, 0.3])[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert nabla_eta(base, [1.1, 0.3])[0, 0] == pytest.approx(-np.sin(1.1), abs=1e-14)
    assert eta_is_recurrent(base, [1.1, 0.3])


def test_base_frame_invariants():
    base = ProductBase([WarpedLine("y", "1 + y**2"), TorusCircle("x")], rho="2 + cos(u)")
    p = np.array([0.4, 0.7, 1.0])
    fr = base_frame(base, p)
    h = base.metric(p)
    assert np.allclose(fr.E @ h @ fr.E.T, np.eye(2), atol=1e-10)
    eta = np.array([2 + np.cos(0.4), 0, 0])
    assert np.allclose(fr.E @ eta, 0, atol=1e-10)
    assert eta @ fr.E_eta == pytest.approx(1.0, abs=1e-10)


def test_psi_for_constant_torus_form():
    base = flat_t2()
    c = 0.7
    psi = TwoForm([[0, 0, 0], [0, 0, c], [0, -c, 0]], base.coords)
    M = psi_endomorphism(base, psi, [0.0, 0.0, 0.0]).matrix[1:, 1:]
    # h(psi X, Y) = Psi(X, Y) in the basis (d_x, d_y)
    assert np.allclose(M, [[0, -c], [c, 0]], atol=1e-15)
    e_x, e_y = np.eye(2)
    assert e_y @ M @ e_x == pytest.approx(c)


def test_psi_zero():
    base = flat_t2()
    assert np.all(psi_endomorphism(base, TwoForm(sp.zeros(3, 3), base.coords), [0, 0, 0]).matrix == 0)


def test_two_form_must_be_antisymmetric():
    base = flat_t2()
    with pytest.raises(ValueError):
        TwoForm([[0, 1, 0], [1, 0, 0], [0, 0, 0]], base.coords)


BASE3 = ProductBase([WarpedLine("y", "exp(y)"), TorusCircle("x"), TorusCircle("z")])


@given(vals=st.lists(st.floats(-3, 3), min_size=6, max_size=6), y=st.floats(-1.5, 1.5))
def test_psi_is_antisymmetric_with_even_rank(vals, y):
    base = BASE3
    A = np.zeros((4, 4))
    A[np.triu_indices(4, 1)] = vals
    A = A - A.T
    psi = TwoForm(func=lambda q: A)
    p = [0.2, y, 1.0, 2.0]
    M = psi_endomorphism(base, psi, p).matrix
    h = base.metric(p)
    assert np.allclose(h @ M, -(h @ M).T, atol=1e-10 * max(1.0, np.abs(h @ M).max()))
    assert np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) % 2 == 0
