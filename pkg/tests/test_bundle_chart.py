import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from lorbundle.base import ProductBase, TorusCircle, WarpedLine
from lorbundle.bundle import (BundleConfig, TorusBlock, christoffel_g_numeric, connection_discrepancy,
                              cov_deriv_closed_form, exterior_d_sym, flux_number, frame_at, gauge_potential,
                              psi_alpha_wedge_eta, psi_torus_blocks, screen_integrability)
from lorbundle.errors import ConfigurationError, GaugeError
from lorbundle.presets import build_preset, config_from_dict

PRESET_SAMPLE = ["flat", "ricci-flat-torus", "type4-complete", "torus-non-integrable-screen", "einstein"]
CONFIGS = {name: build_preset(name) for name in PRESET_SAMPLE}


def t2_config(psi=None, f="0", P=None):
    data = {"base": {"factors": [{"kind": "torus", "name": "x"}, {"kind": "torus", "name": "y"}]},
            "psi": psi or {"kind": "torus_blocks", "blocks": []}, "f": f}
    return config_from_dict(data)


def test_zero_psi_admits_zero_potential():
    cfg = t2_config()
    assert all(p == 0 for p in cfg.P)


def test_alpha_wedge_du_potential():
    base = ProductBase([TorusCircle("s")])
    u, s = base.coords
    alpha = [0, 1]
    P = gauge_potential(base, "alpha_wedge_eta", alpha=alpha)
    assert sp.simplify(P[1] + 2 * u) == 0 and P[0] == 0
    dP = exterior_d_sym(P, base.coords)
    assert dP[1, 0] == 2  # dP = -2 du^ds = 2 ds^du
    assert sp.simplify(dP - 2 * psi_alpha_wedge_eta(base, alpha)) == sp.zeros(2, 2)


def test_sin_sin_block_potential():
    base = ProductBase([TorusCircle("x1"), TorusCircle("x2")])
    u, x1, x2 = base.coords
    blocks = [TorusBlock("x1", "x2", "sin(x1)*sin(x2)")]
    P = gauge_potential(base, "torus_blocks", blocks=blocks)
    assert sp.simplify(P[2] + 2 * sp.cos(x1) * sp.sin(x2)) == 0
    dP = exterior_d_sym(P, base.coords)
    assert sp.simplify(dP[1, 2] - 2 * sp.sin(x1) * sp.sin(x2)) == 0
    assert sp.simplify(dP - 2 * psi_torus_blocks(base, blocks)) == sp.zeros(3, 3)


def test_wrong_potential_is_a_gauge_error():
    base = ProductBase([TorusCircle("x"), TorusCircle("y")])
    Psi = psi_torus_blocks(base, [TorusBlock("x", "y", "0", 1)])
    with pytest.raises(GaugeError):
        BundleConfig(base, Psi, [0, 0, base.coords[1]], 0)


def test_non_closed_psi_is_rejected():
    base = ProductBase([TorusCircle("x"), TorusCircle("y"), TorusCircle("z")])
    x = base.coords[1]
    Psi = sp.zeros(4, 4)
    Psi[2, 3], Psi[3, 2] = sp.sin(x), -sp.sin(x)  # d(sin x dy^dz) = cos x dx^dy^dz
    with pytest.raises((ConfigurationError, GaugeError)):
        BundleConfig(base, Psi, [0, 0, 0, 0], 0)


def test_flat_walker_metric():
    g = CONFIGS["flat"].chart_metric.g([0.1, 0.2, 0.3, 0.4])
    want = np.eye(4)
    want[0, 1] = want[1, 0] = 1.0
    want[1, 1] = 0.0
    assert np.array_equal(g, want)


def test_ricci_flat_guu():
    cfg = CONFIGS["ricci-flat-torus"]
    for x in (0.0, 1.0, 2.5):
        assert cfg.chart_metric.g([0.0, 0.3, x])[0, 0] == pytest.approx(1 - 4 * np.cos(x), abs=1e-12)


def test_type4_base_block_is_identity():
    cfg = CONFIGS["type4-complete"]
    p = cfg.sample_points(1, np.random.default_rng(1))[0]
    g = cfg.chart_metric.g(p)
    assert np.allclose(g[2:, 2:], np.eye(5), atol=0)


def test_frame_with_constant_potential():
    base = ProductBase([TorusCircle("x")])
    cfg = BundleConfig(base, sp.zeros(2, 2), [sp.Float(0.3), 0], "0.8")
    fr = frame_at(cfg, [0.0, 0.0, 0.0])
    assert np.allclose(fr.e_plus, [1.0, -0.7, 0.0], atol=1e-15)
    assert fr.e_plus @ fr.g @ fr.e_plus == pytest.approx(1.0, abs=1e-12)


def test_frame_flat():
    fr = frame_at(CONFIGS["flat"], [0.0, 0.0, 0.0, 0.0])
    assert np.array_equal(fr.e_plus, [1.0, 0, 0, 0])
    assert np.array_equal(fr.xi, [0, -1.0, 0, 0])


def test_h_for_general_rho():
    base = ProductBase([TorusCircle("x")], rho="2 + cos(u)")
    cfg = BundleConfig(base, sp.zeros(2, 2), [0, 0], "cos(x)")
    u, f = 0.7, np.cos(1.1)
    fr = frame_at(cfg, [u, 0.2, 1.1])
    assert fr.H == pytest.approx(f + 1 / (2 + np.cos(u)) ** 2 - 1, abs=1e-14)


@pytest.mark.parametrize("name", PRESET_SAMPLE)
def test_frame_invariants_and_signature(name):
    cfg = CONFIGS[name]
    for p in cfg.sample_points(10, np.random.default_rng(3)):
        fr = frame_at(cfg, p)
        assert max(fr.invariant_residuals().values()) <= 1e-10
        assert np.sum(np.linalg.eigvalsh(fr.g) < 0) == 1
        eta = np.zeros(cfg.dim)
        eta[0] = 1.0
        assert np.allclose(-fr.g @ fr.xi, eta, atol=1e-12)


def test_flat_connection_vanishes():
    cfg = CONFIGS["flat"]
    for X in (0, 1, "+", "xi"):
        for Y in (0, 1, "+", "xi"):
            assert np.all(cov_deriv_closed_form(cfg, X, Y, [0.1, 0.2, 0.3, 0.4]) == 0)


def test_xi_parallel_for_fibre_constant_f():
    cfg = CONFIGS["ricci-flat-torus"]
    for X in (0, "+", "xi"):
        assert np.allclose(cov_deriv_closed_form(cfg, X, "xi", [0.3, 0.1, 1.2]), 0, atol=1e-14)


def test_flux_term_of_connection():
    c = 0.25
    cfg = t2_config({"kind": "torus_blocks", "blocks": [{"a": "x", "b": "y", "chi": "0", "c": str(c)}]})
    p = np.array([0.1, 0.2, 0.3, 0.4])
    B = frame_at(cfg, p).basis()
    # brute force: e_x(e_y) + Gamma(e_x, e_y), with e_y = d_y - P_y d_v and P_y = 2 c x
    gam = christoffel_g_numeric(cfg, p)
    e_x, e_y = B[:, 0], B[:, 1]
    brute = np.einsum("abc,b,c->a", gam, e_x, e_y) + np.array([0.0, -2 * c, 0.0, 0.0])
    assert np.linalg.solve(B, brute)[-1] == pytest.approx(c, abs=1e-14)
    assert np.linalg.solve(B, cov_deriv_closed_form(cfg, 0, 1, p))[-1] == pytest.approx(c, abs=1e-14)


@pytest.mark.parametrize("name", PRESET_SAMPLE)
def test_closed_form_connection_matches_koszul(name):
    cfg = CONFIGS[name]
    for p in cfg.sample_points(5, np.random.default_rng(11)):
        gap, where = connection_discrepancy(cfg, p)
        assert gap <= 1e-6, where


def test_christoffel_numeric_derivatives_agree():
    cfg = CONFIGS["type4-complete"]
    p = cfg.sample_points(1, np.random.default_rng(5))[0]
    a = christoffel_g_numeric(cfg, p)
    b = christoffel_g_numeric(cfg, p, derivatives="numeric")
    assert np.allclose(a, b, atol=1e-8)
    assert np.allclose(a, a.transpose(0, 2, 1), atol=0)


def test_warped_christoffel_embeds_base():
    base = ProductBase([WarpedLine("y", "exp(y)"), TorusCircle("x")])
    cfg = BundleConfig(base, sp.zeros(3, 3), [0, 0, 0], 0)
    gam = christoffel_g_numeric(cfg, [0.0, 0.0, 0.4, 0.2])
    assert gam[2, 2, 2] == pytest.approx(1.0, abs=1e-14)


def test_screen_integrability():
    assert screen_integrability(CONFIGS["ricci-flat-torus"]).integrable
    assert screen_integrability(CONFIGS["flat"]).integrable
    rep = screen_integrability(CONFIGS["torus-non-integrable-screen"])
    assert not rep.integrable and rep.max_eta_wedge_psi > 1e-3


def test_flux_numbers_are_integral():
    assert flux_number(CONFIGS["type4-complete"], "x1", "x2") == pytest.approx(1.0, abs=1e-12)
    assert flux_number(CONFIGS["type4-complete"], "x3", "x4") == pytest.approx(1.0, abs=1e-12)
    assert flux_number(CONFIGS["torus-non-integrable-screen"], "x", "y") == pytest.approx(1.0, abs=1e-12)
    assert flux_number(CONFIGS["ricci-flat-torus"], "u", "x") == pytest.approx(-2.0, abs=1e-12)


@given(p=st.lists(st.floats(0, 2 * np.pi), min_size=7, max_size=7), y=st.floats(-2, 2))
def test_frame_invariants_hold_everywhere(p, y):
    cfg = CONFIGS["type4-complete"]
    q = np.array(p)
    q[2] = y
    fr = frame_at(cfg, q, check=False)
    assert max(fr.invariant_residuals().values()) <= 1e-10
