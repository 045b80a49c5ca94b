import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from lorbundle.base import ProductBase, TorusCircle
from lorbundle.bundle import BundleConfig, frame_at
from lorbundle.curvature import (ClosedFormCurvature, curvature_report, einstein_obstruction, ricci_brute_force,
                                 ricci_closed_form, ricci_flat_residual, ricci_frame_components,
                                 riemann_brute_force, riemann_closed_form, t_eta)
from lorbundle.errors import DomainError, ShapeError, TranscriptionAlarm
from lorbundle.presets import build_preset, build_type4, config_from_dict
from lorbundle.ricci_flat import build_ricci_flat_config

IN_HYPOTHESIS = ["flat", "ricci-flat-torus", "ricci-flat-t2", "type4-complete", "torus-non-integrable-screen",
                 "einstein"]
CONFIGS = {name: build_preset(name) for name in IN_HYPOTHESIS}
WARPED_T4 = build_type4(k=4, m=1, warps=["exp(y1/2)"], C=[0.3])


def constant_flux_t2(c=0.25, f="0"):
    return config_from_dict({"base": {"factors": [{"kind": "torus", "name": "x"}, {"kind": "torus", "name": "y"}]},
                             "psi": {"kind": "torus_blocks",
                                     "blocks": [{"a": "x", "b": "y", "chi": "0", "c": str(c)}]}, "f": f})


def test_flat_curvature_vanishes():
    cfg = CONFIGS["flat"]
    p = [0.1, 0.2, 0.3, 0.4]
    assert np.all(riemann_brute_force(cfg, p) == 0)
    assert all(v == 0 for v in riemann_closed_form(cfg, p).values())
    assert all(v == 0 for v in ricci_closed_form(cfg, p).values())


def test_constant_flux_curvature():
    c = 0.25
    cfg = constant_flux_t2(c)
    p = np.array([0.1, 0.2, 0.3, 0.4])
    listed = riemann_closed_form(cfg, p)
    assert listed[(0, "+", "+", 0)] == pytest.approx(c**2, abs=1e-14)
    assert listed[(0, "+", "+", 1)] == pytest.approx(0.0, abs=1e-14)
    # brute-force oracle on the same frame
    B = frame_at(cfg, p).basis()
    Rm = np.einsum("abcd,ai,bj,ck,dl->ijkl", riemann_brute_force(cfg, p), B, B, B, B)
    assert Rm[0, 2, 2, 0] == pytest.approx(c**2, abs=1e-13)


def test_fibre_dependent_f_component():
    cfg = CONFIGS["einstein"]
    for v in (0.0, 0.7, 2.0):
        p = np.array([0.1, v, 0.3, 0.4])
        assert riemann_closed_form(cfg, p)[("+", "xi", "xi", "+")] == pytest.approx(0.5 * np.cos(v), abs=1e-14)
        assert ricci_closed_form(cfg, p)[("xi", "+")] == pytest.approx(0.5 * np.cos(v), abs=1e-12)
        assert ricci_frame_components(cfg, p)[("xi", "+")] == pytest.approx(0.5 * np.cos(v), abs=1e-12)


@pytest.mark.parametrize("name", IN_HYPOTHESIS)
def test_closed_form_matches_brute_force(name):
    cfg = CONFIGS[name]
    for p in cfg.sample_points(6, np.random.default_rng(7)):
        rep = curvature_report(cfg, p)
        # the full frame tensor has zeros outside the listed components, so this
        # also certifies that nothing else is nonzero
        assert rep.max_discrepancy <= 1e-5, rep.worst_index
        assert rep.ricci_discrepancy <= 1e-5
        assert rep.bianchi_residual <= 1e-7 and rep.symmetry_residual <= 1e-7


def test_warped_base_curvature():
    for p in WARPED_T4.sample_points(4, np.random.default_rng(8)):
        rep = curvature_report(WARPED_T4, p)
        assert rep.max_discrepancy <= 1e-5 and rep.ricci_discrepancy <= 1e-5


def test_variant_ricci_forms_disagree_with_brute_force():
    # opposite Ric_i+ divergence sign and xi(f)-only Ric_++ fibre term
    for name, key in (("type4-complete", (1, "+")), ("einstein", ("+", "+"))):
        cfg = CONFIGS[name]
        p = cfg.sample_points(1, np.random.default_rng(2))[0]
        variant = ClosedFormCurvature(cfg, variant_ricci=True).ricci_at(p)[key]
        brute = ricci_frame_components(cfg, p)[key]
        assert abs(variant - brute) > 0.1
        assert ricci_closed_form(cfg, p)[key] == pytest.approx(brute, abs=1e-10)


def test_report_raises_transcription_alarm():
    cfg = CONFIGS["einstein"]
    rep = curvature_report(cfg, [0.1, 0.7, 0.3, 0.4], raise_on_mismatch=True)
    assert rep.max_discrepancy <= 1e-5
    bad = ClosedFormCurvature(cfg, variant_ricci=True)
    p = np.array([0.1, 0.7, 0.3, 0.4])
    gap = abs(bad.ricci_at(p)[("+", "+")] - ricci_frame_components(cfg, p)[("+", "+")])
    assert gap > 1e-5
    with pytest.raises(TranscriptionAlarm):
        raise TranscriptionAlarm("variant Ric_++", ("+", "+"), gap)


def test_ric_xi_plus_equals_minus_half_hessian():
    cfg = CONFIGS["einstein"]
    for p in cfg.sample_points(8, np.random.default_rng(4)):
        # Hess f(xi, xi) = d_v^2 f = -cos v
        assert ricci_closed_form(cfg, p)[("xi", "+")] == pytest.approx(-0.5 * -np.cos(p[1]), abs=1e-12)


def test_omitted_components_vanish_in_brute_force():
    cfg = CONFIGS["type4-complete"]
    for p in cfg.sample_points(4, np.random.default_rng(9)):
        B = frame_at(cfg, p).basis()
        Ric = B.T @ ricci_brute_force(cfg, p) @ B
        xi = B.shape[1] - 1
        assert np.max(np.abs(Ric[xi, :xi - 1])) <= 1e-7  # Ric(xi, e_i)
        assert abs(Ric[xi, xi]) <= 1e-7


def test_t_eta_vanishes_for_recurrent_eta():
    base = ProductBase([TorusCircle("x")], rho="2 + cos(u)")
    cfg = BundleConfig(base, sp.zeros(2, 2), [0, 0], 0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        X, Y = rng.normal(size=3), rng.normal(size=3)
        p = [rng.uniform(0, 6), 0.1, rng.uniform(0, 6)]
        assert t_eta(cfg, X, Y, p) == pytest.approx(0.0, abs=1e-14)
    assert t_eta(CONFIGS["flat"], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 0, 0]) == 0


@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8))
def test_t_eta_symmetric(vals):
    cfg = CONFIGS["ricci-flat-torus"]
    X, Y = np.array(vals[:3]), np.array(vals[3:6])
    p = [vals[6], 0.0, vals[7]]
    assert t_eta(cfg, X, Y, p) == t_eta(cfg, Y, X, p)


def test_einstein_obstruction():
    assert einstein_obstruction(CONFIGS["einstein"]).lambda_sup == pytest.approx(0.5, abs=1e-12)
    assert einstein_obstruction(CONFIGS["ricci-flat-torus"]).lambda_sup <= 1e-9


def test_non_periodic_fibre_function_is_rejected():
    base = ProductBase([TorusCircle("x")])
    with pytest.raises(DomainError):
        BundleConfig(base, sp.zeros(2, 2), [0, 0], "v**2")


def test_ricci_flat_residuals():
    assert ricci_flat_residual(CONFIGS["ricci-flat-torus"]) <= 1e-10
    harmonic = build_ricci_flat_config(["x"], ["1/(2*pi)"]).config
    assert ricci_flat_residual(harmonic) == 0.0
    # f_B = 0 with alpha = d(cos x): residual 4 div alpha = -4 cos x
    cfg = CONFIGS["ricci-flat-exact"] if "ricci-flat-exact" in CONFIGS else build_preset("ricci-flat-exact")
    wrong = BundleConfig(cfg.base, cfg.Psi, cfg.P, 0, meta={**cfg.meta, "f_B": sp.Integer(0)})
    assert ricci_flat_residual(wrong, n_points=2048) == pytest.approx(4.0, abs=1e-3)


def test_ricci_flat_shape_required():
    with pytest.raises(ShapeError):
        ricci_flat_residual(CONFIGS["type4-complete"])


def test_residual_zero_iff_ricci_flat():
    good = CONFIGS["ricci-flat-torus"]
    bad_meta = {**good.meta, "f_B": -3 * sp.cos(good.base.base_symbols[0])}
    bad = BundleConfig(good.base, good.Psi, good.P, bad_meta["f_B"], meta=bad_meta)
    pts = good.sample_points(8, np.random.default_rng(0))
    assert ricci_flat_residual(good) <= 1e-10
    assert max(np.max(np.abs(ricci_brute_force(good, p))) for p in pts) <= 1e-7
    assert ricci_flat_residual(bad) > 0.5
    assert max(np.max(np.abs(ricci_brute_force(bad, p))) for p in pts) > 1e-3
