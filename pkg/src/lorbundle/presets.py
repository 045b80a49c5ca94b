"""Named example configurations and JSON config ingestion.

Raw config schema (all expressions use the grammar of :mod:`lorbundle.expr`)::

    {
      "name": "my-config",
      "base": {"factors": [{"kind": "line", "name": "y", "warp": "exp(y)"},
                           {"kind": "torus", "name": "x"}],
               "rho": "1"},
      "psi": {"kind": "alpha_wedge_eta", "alpha": {"x": "1/(2*pi) - sin(x)"}}
           | {"kind": "torus_blocks",
              "blocks": [{"a": "x1", "b": "x2", "chi": "sin(x1)*sin(x2)", "c": "1/(4*pi)"}]}
           | {"kind": "explicit", "components": {"x,y": "..."}, "potential": {"y": "..."}},
      "f": "cos(v)"
    }

or ``{"preset": "<name>", "params": {...}}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import sympy as sp

from .base import ProductBase, TorusCircle, WarpedLine
from .bundle import BundleConfig, TorusBlock, gauge_potential, psi_alpha_wedge_eta, psi_torus_blocks
from .errors import ConfigurationError
from .expr import ExpressionError, parse_expr
from .ricci_flat import build_ricci_flat_config

INTEGRAL_BLOCK_CONSTANT = "1/(4*pi)"


@dataclass
class PresetDescriptor:
    name: str
    params: dict
    construction: str
    expected: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)  # keyword overrides for completeness_probe


# ------------------------------------------------------------ type-4 family


def lambda_index(i: int, j: int) -> int:
    """``(j - 2)(j - 1)/2 + i`` for ``1 <= i < j`` (1-based)."""
    return (j - 2) * (j - 1) // 2 + i


def lambda_set(k: int, m: int) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``1 <= i < j <= k``, with ``lambda_index <= m``, sorted by index."""
    pairs = [(i, j) for j in range(2, k + 1) for i in range(1, j) if lambda_index(i, j) <= m]
    return sorted(pairs, key=lambda p: lambda_index(*p))


def check_type4_params(k: int, m: int, l: int) -> None:
    if k < 2:
        raise ConfigurationError(f"type-4 needs k >= 2 (got k={k})")
    if not m > 0:
        raise ConfigurationError(f"type-4 needs m > 0 (got m={m})")
    if not k * (k - 1) // 2 >= m:
        raise ConfigurationError(f"type-4 needs k(k-1)/2 >= m (got k={k}, m={m})")
    if not 1 <= l <= k // 2:
        raise ConfigurationError(f"type-4 needs 1 <= l <= floor(k/2) (got l={l}, k={k})")


def build_type4(k: int = 4, m: int = 1, l: int | None = None, chi=None, c=INTEGRAL_BLOCK_CONSTANT,
                warps=None, C=None, name: str | None = None) -> BundleConfig:
    """Block 2-form on ``T^k`` over ``B = R^m x T^k`` with
    ``f = -2 sum_{(i,j) in Lambda} Psi_ij(x) Phi_lambda(y_lambda)``.

    Blocks ``(chi_b + c) dx_{2b-1} ^ dx_{2b}`` for ``b = 1..l``; default
    ``chi_b = sin(x_{2b-1}) sin(x_{2b})`` and ``c = 1/(4 pi)`` (one flux
    quantum of the chart normalization).  ``Phi_i(y) = int_0^y warp_i + C_i``.
    """
    l = k // 2 if l is None else l
    check_type4_params(k, m, l)
    warps = list(warps) if warps is not None else ["1"] * m
    C = list(C) if C is not None else [0] * m
    if len(warps) != m or len(C) != m:
        raise ConfigurationError("warps and C need m entries")
    ys = [f"y{i + 1}" for i in range(m)]
    xs = [f"x{i + 1}" for i in range(k)]
    base = ProductBase([WarpedLine(y, w) for y, w in zip(ys, warps)] + [TorusCircle(x) for x in xs])
    if chi is None:
        chi = [f"sin({xs[2 * b]})*sin({xs[2 * b + 1]})" for b in range(l)]
    chi = list(chi)
    if len(chi) != l:
        raise ConfigurationError(f"chi needs l={l} entries")
    blocks = [TorusBlock(xs[2 * b], xs[2 * b + 1], chi[b], c) for b in range(l)]
    Psi = psi_torus_blocks(base, blocks)
    P = gauge_potential(base, "torus_blocks", blocks=blocks)
    names = [s.name for s in base.coords]
    ysym = base.base_symbols[:m]
    f = sp.Integer(0)
    Lam = lambda_set(k, m)
    for i, j in Lam:
        lam = lambda_index(i, j)
        y = ysym[lam - 1]
        Phi = sp.integrate(base.warps[lam - 1], (y, 0, y)) + sp.sympify(C[lam - 1])
        f += -2 * Psi[names.index(xs[i - 1]), names.index(xs[j - 1])] * Phi
    meta = {"type4": {"k": k, "m": m, "l": l, "Lambda": Lam, "C": C, "warps": warps,
                      "x_names": xs, "y_names": ys}}
    return BundleConfig(base, Psi, P, f, name=name or f"type4-k{k}-l{l}-m{m}", meta=meta)


# ------------------------------------------------------------ other presets


def build_flat(n: int = 2) -> BundleConfig:
    base = ProductBase([TorusCircle(x) for x in ["x", "y", "z", "w"][:n]])
    return BundleConfig(base, sp.zeros(base.dim, base.dim), [0] * base.dim, 0, name="flat")


def build_torus_non_integrable(c=INTEGRAL_BLOCK_CONSTANT, f="0") -> BundleConfig:
    """Constant ``c dx ^ dy`` on ``T^2`` with ``eta = du``: a non-zero integral class."""
    base = ProductBase([TorusCircle("x"), TorusCircle("y")])
    blocks = [TorusBlock("x", "y", "0", c)]
    return BundleConfig(base, psi_torus_blocks(base, blocks), gauge_potential(base, "torus_blocks", blocks=blocks),
                        f, name="torus-non-integrable-screen")


def build_einstein(f="cos(v)") -> BundleConfig:
    base = ProductBase([TorusCircle("x"), TorusCircle("y")])
    return BundleConfig(base, sp.zeros(base.dim, base.dim), [0] * base.dim, f, name="einstein")


def build_ricci_flat(alpha, names, name, resolution=64):
    return build_ricci_flat_config(names, alpha, resolution=resolution, name=name).config


PRESETS: dict[str, PresetDescriptor] = {
    "flat": PresetDescriptor(
        "flat", {"n": 2}, "flat torus base, Psi = 0, f = 0",
        {"screen_integrable": True, "ricci_flat": True, "holonomy_type": "trivial", "probe_complete": True}),
    "ricci-flat-torus": PresetDescriptor(
        "ricci-flat-torus", {}, "T^1 x S^1 base, alpha = dx/(2 pi) + d(cos x), f = -4 cos x",
        {"screen_integrable": True, "ricci_flat": True, "holonomy_type": "trivial", "probe_complete": True},
        {"u_scale": 0.1}),
    "ricci-flat-exact": PresetDescriptor(
        "ricci-flat-exact", {}, "T^1 x S^1 base, alpha = d(cos x) (exact class), f = -4 cos x",
        {"screen_integrable": True, "ricci_flat": True, "holonomy_type": "trivial", "probe_complete": True},
        {"u_scale": 0.1}),
    "ricci-flat-t2": PresetDescriptor(
        "ricci-flat-t2", {}, "T^2 x S^1 base, alpha = dx/(2 pi) + d(sin x sin y), f_B from the Poisson solver",
        {"screen_integrable": True, "ricci_flat": True, "holonomy_type": "trivial", "probe_complete": True},
        {"u_scale": 0.1}),
    "type4-complete": PresetDescriptor(
        "type4-complete", {"k": 4, "m": 1}, "R^1 x T^4 base, two sin-sin blocks plus one flux quantum",
        {"screen_integrable": False, "ricci_flat": False, "holonomy_type": "4", "probe_complete": True,
         "orthogonal_dim": 2},
        {"u_scale": 0.01}),
    "type4": PresetDescriptor(
        "type4", {"k": 4, "l": 2, "m": 1}, "type-4 family over R^m x T^k with l blocks",
        {"screen_integrable": False, "ricci_flat": False, "holonomy_type": "4"},
        {"u_scale": 0.01}),
    "torus-non-integrable-screen": PresetDescriptor(
        "torus-non-integrable-screen", {}, "T^2 base, constant integral Psi = dx ^ dy/(4 pi), f = 0",
        {"screen_integrable": False, "ricci_flat": False, "holonomy_type": "2", "probe_complete": True}),
    "einstein": PresetDescriptor(
        "einstein", {}, "flat T^2 base, Psi = 0, f = cos v (fibre dependent)",
        {"screen_integrable": True, "ricci_flat": False, "holonomy_type": "decomposable", "einstein_sup": 0.5}),
}


def build_preset(name: str, params: dict | None = None) -> BundleConfig:
    params = dict(params or {})
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if name == "flat":
        return build_flat(**params)
    if name == "ricci-flat-torus":
        return build_ricci_flat(["1/(2*pi) - sin(x)"], ["x"], name, **params)
    if name == "ricci-flat-exact":
        return build_ricci_flat(["-sin(x)"], ["x"], name, **params)
    if name == "ricci-flat-t2":
        return build_ricci_flat(["1/(2*pi) + cos(x)*sin(y)", "sin(x)*cos(y)"], ["x", "y"], name, **params)
    if name == "type4-complete":
        p = {"k": 4, "m": 1}
        p.update(params)
        return build_type4(name="type4-complete", **p)
    if name == "type4":
        p = {"k": 4, "l": 2, "m": 1}
        p.update(params)
        return build_type4(**p)
    if name == "torus-non-integrable-screen":
        return build_torus_non_integrable(**params)
    if name == "einstein":
        return build_einstein(**params)
    raise AssertionError(name)


# ------------------------------------------------------------ JSON configs


def _expr(text, syms, path):
    try:
        return parse_expr(text, syms)
    except ExpressionError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _require(d, key, path):
    if not isinstance(d, dict) or key not in d:
        raise ConfigurationError(f"{path}.{key}: missing")
    return d[key]


def config_from_dict(data: dict) -> BundleConfig:
    """Build a config from the JSON schema in the module docstring."""
    if not isinstance(data, dict):
        raise ConfigurationError("config: expected a JSON object")
    if "preset" in data:
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigurationError("config.params: expected an object")
        return build_preset(data["preset"], params)
    name = data.get("name", "custom")
    bdata = _require(data, "base", "config")
    factors = []
    for i, fd in enumerate(_require(bdata, "factors", "config.base")):
        path = f"config.base.factors[{i}]"
        kind = _require(fd, "kind", path)
        fname = _require(fd, "name", path)
        if kind == "line":
            factors.append(WarpedLine(fname, str(fd.get("warp", "1"))))
        elif kind == "torus":
            factors.append(TorusCircle(fname))
        else:
            raise ConfigurationError(f"{path}.kind: expected 'line' or 'torus', got {kind!r}")
    try:
        base = ProductBase(factors, rho=str(bdata.get("rho", "1")))
    except (ValueError, ExpressionError) as exc:
        raise ConfigurationError(f"config.base: {exc}") from None
    names = [s.name for s in base.coords]
    pdata = _require(data, "psi", "config")
    kind = _require(pdata, "kind", "config.psi")
    if kind == "alpha_wedge_eta":
        comp = _require(pdata, "alpha", "config.psi")
        alpha = [sp.Integer(0)] * base.dim
        for key, val in comp.items():
            if key not in names[1:]:
                raise ConfigurationError(f"config.psi.alpha.{key}: unknown base coordinate")
            alpha[names.index(key)] = _expr(val, base.coords, f"config.psi.alpha.{key}")
        Psi = psi_alpha_wedge_eta(base, alpha)
        P = gauge_potential(base, "alpha_wedge_eta", alpha=alpha)
    elif kind == "torus_blocks":
        blocks = []
        for i, bd in enumerate(_require(pdata, "blocks", "config.psi")):
            path = f"config.psi.blocks[{i}]"
            a, b = _require(bd, "a", path), _require(bd, "b", path)
            for key, nm in (("a", a), ("b", b)):
                if nm not in names:
                    raise ConfigurationError(f"{path}.{key}: unknown coordinate {nm!r}")
            chi = str(bd.get("chi", "0"))
            _expr(chi, base.coords, f"{path}.chi")
            blocks.append(TorusBlock(a, b, chi, bd.get("c", 0)))
        Psi = psi_torus_blocks(base, blocks)
        P = gauge_potential(base, "torus_blocks", blocks=blocks)
    elif kind == "explicit":
        Psi = sp.zeros(base.dim, base.dim)
        for key, val in _require(pdata, "components", "config.psi").items():
            try:
                a, b = (names.index(s.strip()) for s in key.split(","))
            except ValueError:
                raise ConfigurationError(f"config.psi.components.{key}: expected 'a,b' coordinate names") from None
            e = _expr(val, base.coords, f"config.psi.components.{key}")
            Psi[a, b] += e
            Psi[b, a] -= e
        P = [sp.Integer(0)] * base.dim
        for key, val in _require(pdata, "potential", "config.psi").items():
            if key not in names:
                raise ConfigurationError(f"config.psi.potential.{key}: unknown coordinate")
            P[names.index(key)] = _expr(val, base.coords, f"config.psi.potential.{key}")
    else:
        raise ConfigurationError(f"config.psi.kind: unknown {kind!r}")
    f = _expr(str(data.get("f", "0")), base.coords[:1] + [sp.Symbol("v", real=True)] + base.coords[1:], "config.f")
    return BundleConfig(base, Psi, P, f, name=name)


def load_config(path) -> BundleConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def preset_names() -> list[str]:
    return sorted(PRESETS)


def flux_quantum() -> float:
    """The block constant giving one unit of flux in the chart normalization."""
    return 1 / (4 * math.pi)
