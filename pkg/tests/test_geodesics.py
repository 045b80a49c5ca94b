import numpy as np
import pytest

from lorbundle.errors import ShapeError
from lorbundle.geodesics import (KillingMonitor, alpha_pullback_monitor, chart_wrap, completeness_probe,
                                 geodesic_residual, growth_exponent, integrate_batch, integrate_geodesic,
                                 killing_identity_residual, probe_initial_data, structured_geodesic,
                                 trajectory_gap)
from lorbundle.bundle import estimate_killing_constant
from lorbundle.presets import build_preset, build_type4

FLAT = build_preset("flat")
TYPE4 = build_preset("type4-complete")
D4 = TYPE4.dim


def test_flat_geodesics_are_straight_lines():
    x0 = np.array([0.1, 0.2, 0.3, 0.4])
    v0 = np.array([0.5, -0.3, 0.2, 0.1])
    tr = integrate_geodesic(FLAT, x0, v0, 10.0, wrap=False)
    expected = x0 + np.outer(tr.t, v0)
    assert np.max(np.abs(tr.position - expected)) <= 1e-10


def test_fibre_direction_is_null_geodesic():
    tr = integrate_geodesic(TYPE4, np.linspace(0.1, 0.7, D4), np.eye(D4)[1], 5.0)
    assert np.max(np.abs(tr.energy)) <= 1e-14
    assert np.max(np.abs(tr.velocity - np.eye(D4)[1])) <= 1e-10


def test_energy_conserved_over_long_horizon():
    rng = np.random.default_rng(5)
    x0, v0 = probe_initial_data(TYPE4, 1, rng, u_scale=0.1)
    x0, v0 = x0[0], v0[0]
    tr = integrate_geodesic(TYPE4, x0, v0, 100.0, rtol=1e-12, atol=1e-14)
    assert tr.t_final == 100.0 and not tr.underflow
    assert tr.energy_drift <= 1e-7
    assert geodesic_residual(TYPE4, tr) <= 1e-6
    # u is affine on the type-4 family
    assert np.max(np.abs(tr.position[:, 0] - (x0[0] + v0[0] * tr.t))) <= 1e-9


@pytest.mark.parametrize("u1", [0.0, 0.3])
def test_structured_matches_generic_short_horizon(u1):
    rng = np.random.default_rng(11)
    x0 = TYPE4.sample_points(1, rng)[0]
    v0 = rng.normal(size=D4)
    v0[0] = u1
    s = structured_geodesic(TYPE4, x0, v0, 10.0, rtol=1e-12, atol=1e-13)
    g = integrate_geodesic(TYPE4, x0, v0, 10.0, rtol=1e-12, atol=1e-13)
    assert trajectory_gap(s, g) <= 1e-6


def test_structured_without_flux_is_base_geodesic():
    cfg = build_type4(chi=["0", "0"], c=0)
    x0 = np.array([0.0, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    v0 = np.array([0.7, 0.0, 0.2, -0.1, 0.3, 0.05, -0.2])
    s = structured_geodesic(cfg, x0, v0, 5.0)
    # flat torus base, no force: straight line in the base
    assert np.max(np.abs(s.position[:, 2:] - (x0[2:] + np.outer(s.t, v0[2:])))) <= 1e-10


def test_structured_shape_required():
    with pytest.raises(ShapeError):
        structured_geodesic(build_preset("einstein"), [0, 0, 0, 0], [0, 1, 0, 0], 1.0)


def test_batch_matches_single():
    rng = np.random.default_rng(2)
    x0 = TYPE4.sample_points(3, rng)
    v0 = rng.normal(size=x0.shape)
    batch = integrate_batch(TYPE4, x0, v0, 5.0)
    for k in range(3):
        single = integrate_geodesic(TYPE4, x0[k], v0[k], 5.0)
        assert trajectory_gap(batch[k], single) <= 1e-7


def test_chart_wrap_is_an_isometry():
    for name in ("type4-complete", "ricci-flat-torus", "torus-non-integrable-screen"):
        cfg = build_preset(name)
        cw = chart_wrap(cfg)
        assert cw is not None
        rng = np.random.default_rng(0)
        for c in cw.axes:
            x = cfg.sample_points(1, rng)[0]
            x[c] += 2 * np.pi
            J = np.eye(cfg.dim)
            J[1] = cw._dv_row(c, x)
            y = x.copy()
            y[c] -= 2 * np.pi
            y[1] += cw._shift[c](x)
            assert np.max(np.abs(cfg.chart_metric.g(x) - J.T @ cfg.chart_metric.g(y) @ J)) <= 1e-10


def test_wrapped_and_unwrapped_integration_agree():
    rng = np.random.default_rng(3)
    x0 = TYPE4.sample_points(1, rng)[0]
    v0 = rng.normal(size=D4) * 2
    a = integrate_geodesic(TYPE4, x0, v0, 8.0, rtol=1e-11, atol=1e-13, wrap=True)
    b = integrate_geodesic(TYPE4, x0, v0, 8.0, rtol=1e-11, atol=1e-13, wrap=False)
    assert np.any(np.abs(a.position[-1, 3:] - x0[3:]) > 2 * np.pi)  # actually wrapped
    assert np.max(np.abs(a.position[:, 2:] - b.position[:, 2:])) <= 1e-7
    assert abs(a.energy_drift - b.energy_drift) <= 1e-8


def test_killing_identity_along_geodesic():
    cfg = build_preset("ricci-flat-torus")
    mon = KillingMonitor(cfg, estimate_killing_constant(cfg))
    rng = np.random.default_rng(4)
    x0 = cfg.sample_points(1, rng)[0]
    v0 = rng.normal(size=cfg.dim) * 0.3
    tr = integrate_geodesic(cfg, x0, v0, 20.0, wrap=False)
    assert killing_identity_residual(mon, cfg, tr) <= 1e-6


def test_alpha_pullback_bound():
    cfg = build_preset("ricci-flat-exact")
    rng = np.random.default_rng(6)
    x0 = cfg.sample_points(1, rng)[0]
    v0 = rng.normal(size=cfg.dim)
    v0[0] = 0.0
    tr = integrate_geodesic(cfg, x0, v0, 20.0)
    observed, bound = alpha_pullback_monitor(cfg, tr)
    assert observed <= bound * (1 + 1e-6)


def test_growth_exponent():
    t = np.linspace(0, 100, 101)
    assert growth_exponent(t, np.ones_like(t)) == 0.0
    assert growth_exponent(t, 1 + t) == pytest.approx(1.0, abs=0.05)
    assert growth_exponent(t, np.where(t > 50, np.inf, 1.0)) == float("inf")


def test_probe_on_flat_is_complete():
    rep = completeness_probe(FLAT, n_geodesics=5, T=50.0, seed=0)
    assert rep.complete and rep.all_reached and not rep.underflow
    assert rep.to_dict()["complete"] is True


def test_finite_time_blowup_is_detected():
    cfg = build_preset("einstein")
    rng = np.random.default_rng(0)
    x0 = cfg.sample_points(1, rng)[0]
    v0 = rng.normal(size=cfg.dim)
    for wrap in (False, True):
        tr = integrate_geodesic(cfg, x0, v0, 100.0, wrap=wrap)
        assert tr.blowup and not tr.underflow
        assert 5.0 < tr.t_final < 6.0
        assert "velocity exceeded" in tr.message
        assert tr.energy_drift <= 1e-7
