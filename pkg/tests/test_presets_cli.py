import json

import numpy as np
import pytest

from lorbundle.cli import dumps, main
from lorbundle.errors import ConfigurationError
from lorbundle.geodesics import completeness_probe
from lorbundle.holonomy import sample_holonomy_algebra
from lorbundle.presets import PRESETS, build_preset, build_type4, config_from_dict, load_config, preset_names


def run(tmp_path, *argv):
    out = tmp_path / argv[0]
    code = main(list(argv) + ["--out", str(out)])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, summary, out


def test_every_preset_builds_and_names_expectations():
    assert set(preset_names()) == set(PRESETS)
    for name in preset_names():
        cfg = build_preset(name)
        assert cfg.name.startswith(name.split("-")[0])
        assert {"screen_integrable", "ricci_flat", "holonomy_type"} <= set(PRESETS[name].expected)


def test_expected_outcome_table(tmp_path):
    code, summary, out = run(tmp_path, "report", "--points", "3")
    assert code == 0, summary["violations"]
    assert set(summary["presets"]) == set(preset_names())
    rows = (out / "outcomes.csv").read_text().splitlines()
    assert rows[0] == "preset,quantity,expected,observed,ok"
    assert all(r.endswith("true") for r in rows[1:])


def test_orthogonal_dimension_expectation():
    want = PRESETS["type4-complete"].expected["orthogonal_dim"]
    assert sample_holonomy_algebra(build_preset("type4-complete"), n_points=3).orthogonal_dim == want


@pytest.mark.parametrize("name", ["flat", "ricci-flat-exact", "torus-non-integrable-screen"])
def test_short_probe_expectation(name):
    # the full T = 1000 probes of ricci-flat-torus and type4-complete run in the acceptance suite
    assert PRESETS[name].expected["probe_complete"]
    rep = completeness_probe(build_preset(name), n_geodesics=5, T=50.0, seed=1, **PRESETS[name].probe)
    assert rep.complete


def test_type4_formula_for_unit_warp():
    cfg = build_type4(k=4, m=1, C=[0.5])
    y1, x1, x2 = (s for s in cfg.base.base_symbols[:3])
    # f = -2 Psi_12(x) (y + C)
    assert (cfg.f + 2 * cfg.Psi[2, 3] * (y1 + 0.5)).simplify() == 0


@pytest.mark.parametrize("params,needle", [({"k": 1}, "k >= 2"), ({"m": 0}, "m > 0"), ({"k": 3, "m": 4}, "k(k-1)/2")])
def test_parameter_range_errors(params, needle):
    with pytest.raises(ConfigurationError, match=needle.replace("(", r"\(").replace(")", r"\)")):
        build_preset("type4", params)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        build_preset("sphere")


def test_config_errors_name_the_key_path(tmp_path):
    bad = {"base": {"factors": [{"kind": "torus", "name": "x"}, {"kind": "disk", "name": "y"}]},
           "psi": {"kind": "torus_blocks", "blocks": []}}
    with pytest.raises(ConfigurationError, match=r"config\.base\.factors\[1\]\.kind"):
        config_from_dict(bad)
    bad = {"base": {"factors": [{"kind": "torus", "name": "x"}]},
           "psi": {"kind": "alpha_wedge_eta", "alpha": {"x": "sin(x"}}}
    with pytest.raises(ConfigurationError, match=r"config\.psi\.alpha\.x"):
        config_from_dict(bad)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, summary, _ = run(tmp_path, "check-curvature", "--config", str(path))
    assert code == 1 and summary is None


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "type4", "params": {"k": 6, "m": 1}}))
    cfg = load_config(path)
    assert cfg.base.n == 7


def test_check_curvature_flat_is_all_zero(tmp_path):
    code, summary, out = run(tmp_path, "check-curvature", "--preset", "flat", "--points", "50")
    assert code == 0
    assert summary["all_zero"] is True
    assert (out / "curvature_points.csv").exists()


def test_ricci_flat_command(tmp_path):
    code, summary, out = run(tmp_path, "ricci-flat", "--preset", "ricci-flat-torus", "--resolution", "128")
    assert code == 0
    assert summary["residual_sup"] <= 1e-8
    rows = (out / "residual.csv").read_text().splitlines()
    assert rows[0] == "x,residual" and len(rows) == 129
    assert max(abs(float(r.split(",")[1])) for r in rows[1:]) <= 1e-8


def test_probe_command_json(tmp_path):
    code, summary, out = run(tmp_path, "probe", "--preset", "type4-complete", "--T", "50", "--n", "10",
                             "--seed", "7")
    assert code == 0
    assert summary["no_underflow"] is True and summary["complete"] is True
    assert (out / "probe.csv").exists()


def test_holonomy_and_classify_commands(tmp_path):
    code, summary, _ = run(tmp_path, "holonomy", "--preset", "type4-complete", "--loop", "rectangle(u,x1,0.3)")
    assert code == 0
    code, summary, out = run(tmp_path, "classify", "--preset", "torus-non-integrable-screen", "--points", "3")
    assert code == 0 and summary["holonomy"]["holonomy_type"] == "2"
    assert (out / "algebra_basis.csv").exists()


def test_geodesic_command(tmp_path):
    code, summary, out = run(tmp_path, "geodesic", "--preset", "flat", "--T", "20")
    assert code == 0 and summary["energy_drift"] <= 1e-7
    header = (out / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "u", "v"] and header[-1] == "energy"


def test_tolerance_violation_exits_2(tmp_path):
    code, summary, _ = run(tmp_path, "geodesic", "--preset", "flat", "--T", "5", "--energy-tol", "-1")
    assert code == 2
    assert summary["ok"] is False
    assert summary["violations"][0]["check"] == "energy drift"


def test_summaries_are_byte_identical(tmp_path):
    argv = ["check-curvature", "--preset", "einstein", "--points", "5", "--seed", "3"]
    main(argv + ["--out", str(tmp_path / "a")])
    main(argv + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    assert a == (tmp_path / "a" / "summary.json").read_bytes()


def test_dumps_uses_17_digits():
    text = dumps({"b": 0.1, "a": [np.float64(1 / 3), float("nan")], "c": True})
    assert text.index('"a"') < text.index('"b"')
    assert "0.33333333333333331" in text and "0.10000000000000001" in text
    assert '"nan"' in text.lower()
