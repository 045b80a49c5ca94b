import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from lorbundle.curvature import ricci_brute_force, ricci_flat_residual
from lorbundle.errors import ConfigurationError, SolvabilityError
from lorbundle.presets import build_preset
from lorbundle.ricci_flat import (TorusGridField, build_ricci_flat_config, chart_metric_gap, gauge_shift,
                                  poisson_solve)

x, y = sp.symbols("x y", real=True)


def test_poisson_single_mode():
    rhs = TorusGridField.from_expr(-sp.cos(x), [x], 32)
    sol = poisson_solve(rhs)
    grid = 2 * np.pi * np.arange(32) / 32
    assert np.max(np.abs(sol.values - np.cos(grid))) <= 1e-13


def test_poisson_two_dimensional():
    rhs = TorusGridField.from_expr(-5 * sp.sin(x + 2 * y), [x, y], 32)
    sol = poisson_solve(rhs)
    assert np.max(np.abs(sol.evaluate(np.array([[0.3, 1.1]])) - np.sin(0.3 + 2.2))) <= 1e-12
    assert abs(sol.mean()) <= 1e-14


def test_poisson_solvability():
    with pytest.raises(SolvabilityError):
        poisson_solve(TorusGridField.from_expr(1 + sp.cos(x), [x], 16))


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGridField(np.zeros(7))


@settings(max_examples=15)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_laplacian_is_self_adjoint(c):
    u = TorusGridField.from_expr(c[0] * sp.cos(x) + c[1] * sp.sin(2 * y) + c[2] * sp.cos(x - y), [x, y], 16)
    w = TorusGridField.from_expr(c[3] * sp.sin(x + y) + c[4] * sp.cos(2 * x) + c[5] * sp.sin(y), [x, y], 16)
    lhs = np.sum(u.laplacian().values * w.values)
    rhs = np.sum(u.values * w.laplacian().values)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=15)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_solve_then_laplacian_round_trip(c):
    u = TorusGridField.from_expr(c[0] * sp.cos(x) + c[1] * sp.sin(3 * x) + c[2] * sp.cos(5 * x) + c[3] * sp.sin(x),
                                 [x], 32)
    back = poisson_solve(u.laplacian())
    assert np.max(np.abs(back.values - u.values)) <= 1e-12


def test_spectral_convergence_for_smooth_data():
    # exp(cos x) is analytic; the residual of the recovered Laplacian must decay geometrically
    errs = []
    for n in (8, 16, 32):
        u = TorusGridField.from_expr(sp.exp(sp.cos(x)), [x], n)
        lap = u.laplacian_at(np.array([[0.37]]))[0]
        exact = float((sp.diff(sp.exp(sp.cos(x)), x, 2)).subs(x, 0.37))
        errs.append(abs(lap - exact))
    assert errs[2] <= 1e-12
    assert errs[1] < errs[0] * 1e-3


def test_csv_round_trip(tmp_path):
    g = TorusGridField.from_expr(sp.sin(x) * sp.cos(y), [x, y], 16)
    g.to_csv(tmp_path / "f.csv")
    back = TorusGridField.from_csv(tmp_path / "f.csv")
    assert np.array_equal(back.values, g.values)
    assert g.round_trip_error() <= 1e-14


def test_harmonic_alpha_gives_zero_potential():
    build = build_ricci_flat_config(["x"], ["1/(2*pi)"])
    assert build.method == "harmonic" and build.f_B == 0
    assert ricci_flat_residual(build.config) == 0.0


def test_exact_part_gives_cosine_potential():
    build = build_ricci_flat_config(["x"], ["1/(2*pi) - sin(x)"])
    xs = build.config.base.base_symbols[0]
    assert sp.simplify(build.f_B - (-4 * sp.cos(xs))) == 0
    assert build.residual <= 1e-12


def test_spectral_and_exact_shortcut_agree():
    exact = build_ricci_flat_config(["x", "y"], ["-sin(x)*cos(y)", "-cos(x)*sin(y)"], method="exact")
    spectral = build_ricci_flat_config(["x", "y"], ["-sin(x)*cos(y)", "-cos(x)*sin(y)"], method="spectral")
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(2, 20))
    syms = exact.config.base.base_symbols
    fe = sp.lambdify(syms, exact.f_B)(*pts)
    fs = sp.lambdify(syms, spectral.f_B)(*pts)
    assert np.max(np.abs(fe - fs)) <= 1e-10
    assert ricci_flat_residual(spectral.config) <= 1e-10


def test_builder_output_is_ricci_flat_by_brute_force():
    cfg = build_preset("ricci-flat-t2")
    for p in cfg.sample_points(4, np.random.default_rng(3)):
        assert np.max(np.abs(ricci_brute_force(cfg, p))) <= 1e-8


def test_builder_rejects_bad_alpha():
    with pytest.raises(ConfigurationError):
        build_ricci_flat_config(["x"], ["0.3"])  # not integral
    with pytest.raises(ConfigurationError):
        build_ricci_flat_config(["x", "y"], ["y", "0"])  # not closed
    with pytest.raises(ConfigurationError):
        build_ricci_flat_config(["x"], ["1/(2*pi)"], method="exact")


@pytest.mark.parametrize("phi", ["sin(x)", "cos(x + u)*0.3", "0.5*sin(u)"])
def test_gauge_shift_preserves_metric(phi):
    cfg = build_preset("ricci-flat-torus")
    shifted = gauge_shift(cfg, phi)
    assert chart_metric_gap(cfg, shifted) <= 1e-12
