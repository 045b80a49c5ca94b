"""Lorentzian circle-bundle metrics in an explicit chart ``(u, v, b_1..b_n)``.

With ``i A = dv + P`` for a chart-local potential ``P`` (``dP = 2 Psi``),
``eta = rho(u) du`` and the half-normalised symmetric product, the metric is

    g_uv = rho,  g_uu = f rho^2 + 1 + 2 rho P_u,  g_ub = rho P_b,  g_bc = (h_B)_bc,

and ``g_vv = g_vb = 0``.  The fundamental field is ``xi = -d_v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy as sp

from .base import TWO_PI, ProductBase
from .errors import ConfigurationError, ConsistencyError, DomainError, GaugeError
from .expr import compile_array, compile_scalar, jacobian_array, parse_expr

FRAME_TOL = 1e-10


# ------------------------------------------------------------ 2-form helpers


def wedge_1_1(a: Sequence, b: Sequence) -> sp.Matrix:
    """Components of ``a ^ b`` (``(a^b)_ij = a_i b_j - a_j b_i``)."""
    d = len(a)
    return sp.Matrix(d, d, lambda i, j: a[i] * b[j] - a[j] * b[i])


def exterior_d_sym(P: Sequence, symbols) -> sp.Matrix:
    d = len(P)
    return sp.Matrix(d, d, lambda i, j: sp.diff(P[j], symbols[i]) - sp.diff(P[i], symbols[j]))


def psi_alpha_wedge_eta(base: ProductBase, alpha: Sequence) -> sp.Matrix:
    """``Psi = alpha ^ eta`` for a 1-form alpha on N (components in N coords)."""
    return wedge_1_1(list(alpha), base.eta)


@dataclass(frozen=True)
class TorusBlock:
    """One 2x2 block ``(chi + c) dx_a ^ dx_b`` of a block-diagonal Psi."""

    a: str
    b: str
    chi: str
    c: float | str = 0.0


def _block_constant(c) -> sp.Expr:
    if isinstance(c, str):
        return parse_expr(c, [])
    if isinstance(c, sp.Basic):
        return c
    return sp.nsimplify(c)


def psi_torus_blocks(base: ProductBase, blocks: Sequence[TorusBlock]) -> sp.Matrix:
    names = [s.name for s in base.coords]
    Psi = sp.zeros(base.dim, base.dim)
    for blk in blocks:
        ia, ib = names.index(blk.a), names.index(blk.b)
        val = parse_expr(blk.chi, base.coords) + _block_constant(blk.c)
        Psi[ia, ib] += val
        Psi[ib, ia] -= val
    return Psi


def gauge_potential(base: ProductBase, strategy: str, *, alpha=None, blocks=None, P=None) -> list:
    """A chart-local 1-form ``P`` on N with ``dP = 2 Psi``.

    ``alpha_wedge_eta``: ``P = -2 R(u) alpha`` with ``R' = rho``, ``R(0) = 0``;
    for ``rho = 1`` this is ``-2 u alpha``.

    ``torus_blocks``: ``P_b = 2 (int chi dx_a + c x_a)`` for every block, with
    the indefinite antiderivative from sympy.  Not periodic in ``x_a`` when
    ``c != 0``.

    ``explicit``: ``P`` as given.
    """
    X = base.coords
    if strategy == "alpha_wedge_eta":
        R = sp.integrate(base.rho, (base.u, 0, base.u))
        return [sp.expand(-2 * R * a) for a in alpha]
    if strategy == "torus_blocks":
        names = [s.name for s in X]
        out = [sp.Integer(0)] * base.dim
        for blk in blocks:
            ia, ib = names.index(blk.a), names.index(blk.b)
            chi = parse_expr(blk.chi, X)
            out[ib] += 2 * sp.integrate(chi, X[ia]) + 2 * _block_constant(blk.c) * X[ia]
        return out
    if strategy == "explicit":
        return [parse_expr(p, X) if isinstance(p, (str, int, float)) else sp.sympify(p) for p in P]
    raise ValueError(f"unknown gauge strategy {strategy!r}")


# ---------------------------------------------------------------- config


class BundleConfig:
    """Data ``(Psi, P, eta, f)`` over a product base, ready for evaluation.

    ``Psi`` is an antisymmetric matrix over the N coordinates ``(u, b)``,
    ``P`` a list over the same coordinates, ``f`` an expression over the
    chart coordinates ``(u, v, b)``.  ``meta`` carries preset-specific shape
    information (e.g. the Ricci-flat or type-4 data).
    """

    def __init__(self, base: ProductBase, Psi, P, f, name: str = "custom",
                 meta: dict | None = None, validate: bool = True):
        self.base = base
        self.name = name
        self.meta = dict(meta or {})
        self.v = sp.Symbol("v", real=True)
        self.coords = [base.u, self.v] + base.base_symbols
        self.dim = base.dim + 1
        self.Psi = sp.Matrix(Psi)
        if self.Psi.shape != (base.dim, base.dim):
            raise ConfigurationError(f"Psi must be {base.dim}x{base.dim}")
        if self.Psi != -self.Psi.T:
            raise ConfigurationError("Psi must be antisymmetric")
        self.P = [sp.sympify(p) for p in P]
        if len(self.P) != base.dim:
            raise ConfigurationError(f"P must have {base.dim} components")
        self.f = parse_expr(f, self.coords) if isinstance(f, (str, int, float)) else sp.sympify(f)
        extra = self.f.free_symbols - set(self.coords)
        if extra:
            raise ConfigurationError(f"f depends on unknown symbols {sorted(map(str, extra))}")
        for p in self.P:
            if p.free_symbols - set(base.coords):
                raise ConfigurationError("P may only depend on the base coordinates (u, b)")
        if validate:
            self.validate()

    # ---- basic symbolic data
    @property
    def fiber_constant(self) -> bool:
        return sp.diff(self.f, self.v) == 0

    @cached_property
    def rho(self):
        return self.base.rho

    @cached_property
    def metric_sym(self) -> sp.Matrix:
        n, rho, P = self.base.n, self.rho, self.P
        G = sp.zeros(n + 2, n + 2)
        G[0, 0] = self.f * rho**2 + 1 + 2 * rho * P[0]
        G[0, 1] = G[1, 0] = rho
        for b in range(n):
            G[0, b + 2] = G[b + 2, 0] = rho * P[b + 1]
            G[b + 2, b + 2] = self.base.h[b + 1, b + 1]
        return G

    @cached_property
    def metric_inv_sym(self) -> sp.Matrix:
        n, rho = self.base.n, self.rho
        G = self.metric_sym
        hinv = [1 / G[b + 2, b + 2] for b in range(n)]
        w = [G[0, b + 2] for b in range(n)]
        Gi = sp.zeros(n + 2, n + 2)
        Gi[0, 1] = Gi[1, 0] = 1 / rho
        Gi[1, 1] = (-G[0, 0] + sum(w[b] ** 2 * hinv[b] for b in range(n))) / rho**2
        for b in range(n):
            Gi[1, b + 2] = Gi[b + 2, 1] = -hinv[b] * w[b] / rho
            Gi[b + 2, b + 2] = hinv[b]
        return Gi

    @cached_property
    def chart_metric(self) -> "ChartMetric":
        return ChartMetric(self)

    # ---- symbolic frame
    def lift_sym(self, X: Sequence) -> list:
        """Horizontal lift of an N-vector ``(X^u, X^b)`` to a chart vector."""
        Pd = sum(p * x for p, x in zip(self.P, X))
        return [X[0], -Pd] + list(X[1:])

    @cached_property
    def frame_sym(self) -> dict:
        E, E_eta = self.base.frame_sym()
        xi = [sp.Integer(0), sp.Integer(-1)] + [sp.Integer(0)] * self.base.n
        zeta = self.lift_sym(E_eta)
        H = self.f + 1 / self.rho**2 - 1
        e_plus = [z + H / 2 * x for z, x in zip(zeta, xi)]
        e_minus = [a + b for a, b in zip(e_plus, xi)]
        Z = [x / 2 - m for x, m in zip(xi, e_minus)]
        e = [self.lift_sym(Ei) for Ei in E]
        return {"xi": xi, "zeta": zeta, "e_plus": e_plus, "e_minus": e_minus, "Z": Z, "e": e, "H": H,
                "E": E, "E_eta": E_eta}

    @cached_property
    def _frame_fn(self):
        fs = self.frame_sym
        rows = [fs["xi"], fs["zeta"], fs["e_plus"], fs["e_minus"], fs["Z"]] + fs["e"]
        return compile_array(rows, self.coords), compile_scalar(fs["H"], self.coords)

    @cached_property
    def _f_fn(self):
        return compile_scalar(self.f, self.coords)

    @cached_property
    def _df_fn(self):
        return compile_array([sp.diff(self.f, s) for s in self.coords], self.coords)

    # ---- validation
    def sample_points(self, n_points: int, rng: np.random.Generator, line_range: float = 2.0) -> np.ndarray:
        """Random chart points; periodic coordinates in [0, 2 pi)."""
        nb = self.base.sample_points(n_points, rng, line_range)
        v = rng.uniform(0, TWO_PI, n_points)
        return np.column_stack([nb[:, 0], v, nb[:, 1:]])

    def validate(self, n_points: int = 32, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        pts = self.sample_points(n_points, rng)
        self.base.validate(rng)
        # dP = 2 Psi
        res = gauge_residual(self, pts)
        if res > 1e-8:
            raise GaugeError(f"dP - 2 Psi = {res:.3e} exceeds 1e-8")
        # Psi closed
        dpsi = closedness_residual(self, pts)
        if dpsi > 1e-9:
            raise ConfigurationError(f"Psi is not closed: |dPsi| = {dpsi:.3e}")
        # f periodic along the circle fibre
        shift = np.zeros(self.dim)
        shift[1] = TWO_PI
        fv = max(abs(self._f_fn(p + shift) - self._f_fn(p)) for p in pts)
        if not np.isfinite(fv) or fv > 1e-9:
            raise DomainError(f"f is not 2 pi-periodic in the fibre coordinate v (jump {fv:.3e})")
        # Lorentzian signature
        cm = self.chart_metric
        for p in pts:
            ev = np.linalg.eigvalsh(cm.g(p))
            if not np.all(np.isfinite(ev)) or np.sum(ev < 0) != 1 or np.any(ev == 0):
                raise ConfigurationError(f"signature violation at {p}: eigenvalues {ev}")

    def with_changes(self, **kw) -> "BundleConfig":
        args = dict(base=self.base, Psi=self.Psi, P=self.P, f=self.f, name=self.name, meta=self.meta)
        args.update(kw)
        return BundleConfig(**args)

    def __repr__(self):
        return f"BundleConfig({self.name!r}, n={self.base.n})"


def _n_point(config: BundleConfig, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.concatenate([p[:1], p[2:]])


def gauge_residual(config: BundleConfig, points) -> float:
    dP = exterior_d_sym(config.P, config.base.coords)
    fn = compile_array(dP - 2 * config.Psi, config.base.coords)
    return max(float(np.max(np.abs(fn(_n_point(config, p))))) for p in points)


def closedness_residual(config: BundleConfig, points) -> float:
    X = config.base.coords
    d = config.base.dim
    Psi = config.Psi
    arr = np.empty((d, d, d), dtype=object)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                arr[i, j, k] = sp.diff(Psi[j, k], X[i]) + sp.diff(Psi[k, i], X[j]) + sp.diff(Psi[i, j], X[k])
    fn = compile_array(arr, X)
    return max(float(np.max(np.abs(fn(_n_point(config, p))))) for p in points)


def flux_number(config: BundleConfig, a, b, point=None, resolution: int = 64) -> float:
    """``(1 / 2 pi) * integral of dP = 2 Psi`` over the torus in the periodic
    coordinates ``a, b`` through ``point``.

    A 2 pi-periodic fibre closes up consistently around that torus exactly
    when this number is an integer.
    """
    base = config.base
    names = [s.name for s in base.coords]
    ia, ib = (names.index(c) if isinstance(c, str) else int(c) for c in (a, b))
    if not (base.periodic[ia] and base.periodic[ib]) or ia == ib:
        raise ConfigurationError("flux_number needs two different periodic coordinates")
    p = np.zeros(base.dim) if point is None else _n_point(config, point)
    t = np.arange(resolution) * TWO_PI / resolution
    A, B = np.meshgrid(t, t, indexing="ij")
    pts = np.repeat(p[:, None], A.size, axis=1)
    pts[ia], pts[ib] = A.ravel(), B.ravel()
    vals = np.broadcast_to(compile_scalar(config.Psi[ia, ib], base.coords)(pts), (A.size,))
    # periodic trapezoid rule: integral = mean * (2 pi)^2
    return float(2 * np.mean(vals) * TWO_PI)


# ------------------------------------------------------------ chart metric


class ChartMetric:
    """Numeric access to ``g_ab``, its inverse and partial derivatives."""

    def __init__(self, config: BundleConfig):
        self.config = config
        X = config.coords
        G = config.metric_sym
        self._g = compile_array(G, X)
        self._ginv = compile_array(config.metric_inv_sym, X)
        self.dG_sym = jacobian_array(G, X)  # [a, b, c] = d_c g_ab
        self._dg = compile_array(self.dG_sym, X)

    @cached_property
    def _ddg(self):
        return compile_array(jacobian_array(self.dG_sym, self.config.coords), self.config.coords)

    def g(self, p) -> np.ndarray:
        return self._g(p)

    def inverse(self, p) -> np.ndarray:
        return self._ginv(p)

    def dg(self, p) -> np.ndarray:
        """``dg[a, b, c] = d_c g_ab``."""
        return self._dg(p)

    def ddg(self, p) -> np.ndarray:
        """``ddg[a, b, c, d] = d_d d_c g_ab``."""
        return self._ddg(p)


def chart_metric(config: BundleConfig) -> ChartMetric:
    return config.chart_metric


# ------------------------------------------------------------ adapted frame


@dataclass
class AdaptedFrame:
    point: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    e_plus: np.ndarray
    e_minus: np.ndarray
    Z: np.ndarray
    e: np.ndarray  # (n, n+2)
    H: float
    g: np.ndarray = field(repr=False)

    def basis(self) -> np.ndarray:
        """Columns ``(e_1..e_n, e_+, xi)``: a basis of the tangent space."""
        return np.column_stack(list(self.e) + [self.e_plus, self.xi])

    def invariant_residuals(self) -> dict:
        g = self.g
        ip = lambda a, b: float(a @ g @ b)
        n = len(self.e)
        gram = np.array([[ip(a, b) for b in self.e] for a in self.e]) if n else np.zeros((0, 0))
        return {
            "g(xi,xi)": abs(ip(self.xi, self.xi)),
            "g(xi,zeta)+1": abs(ip(self.xi, self.zeta) + 1),
            "g(e+,e+)-1": abs(ip(self.e_plus, self.e_plus) - 1),
            "g(e-,e-)+1": abs(ip(self.e_minus, self.e_minus) + 1),
            "g(e_i,e_j)-delta": float(np.max(np.abs(gram - np.eye(n)))) if n else 0.0,
            "g(e_i,e+-)": max([abs(ip(a, self.e_plus)) for a in self.e]
                              + [abs(ip(a, self.e_minus)) for a in self.e] + [0.0]),
            "g(xi,Z)-1": abs(ip(self.xi, self.Z) - 1),
            "g(Z,Z)": abs(ip(self.Z, self.Z)),
        }


def frame_at(config: BundleConfig, point, check: bool = True) -> AdaptedFrame:
    p = np.asarray(point, dtype=float)
    rows, Hfn = config._frame_fn
    R = rows(p)
    n = config.base.n
    fr = AdaptedFrame(p, R[0], R[1], R[2], R[3], R[4], R[5:5 + n], float(Hfn(p)), config.chart_metric.g(p))
    if check:
        worst = max(fr.invariant_residuals().items(), key=lambda kv: kv[1])
        if worst[1] > FRAME_TOL:
            raise ConsistencyError(f"frame invariant {worst[0]} violated by {worst[1]:.3e} at {p}")
    return fr


def eta_pullback(config: BundleConfig, point) -> np.ndarray:
    """``pi^* eta`` as a chart covector."""
    p = np.asarray(point, dtype=float)
    out = np.zeros(config.dim)
    out[0] = config.base._rho(_n_point(config, p))
    return out


# --------------------------------------------------------- brute-force Koszul


def christoffel_g_numeric(config: BundleConfig, point, derivatives: str = "analytic") -> np.ndarray:
    """``Gamma[a, b, c]`` of ``g`` from the Koszul formula.

    ``derivatives='numeric'`` differentiates the metric components with
    fourth-order central differences instead of the analytic partials.
    """
    from .base import fd_gradient

    p = np.asarray(point, dtype=float)
    cm = config.chart_metric
    g = cm.g(p)
    if not np.all(np.isfinite(g)) or abs(np.linalg.det(g)) < 1e-14:
        raise DomainError(f"singular or non-finite metric at {p}")
    ginv = np.linalg.inv(g)
    dg = cm.dg(p) if derivatives == "analytic" else fd_gradient(cm.g, p)
    # Gamma_{d,bc} = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
    low = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    return np.einsum("ad,dbc->abc", ginv, low)


def christoffel_g_derivative(config: BundleConfig, point) -> np.ndarray:
    """``dGamma[a, b, c, e] = d_e Gamma^a_bc`` from analytic second partials."""
    p = np.asarray(point, dtype=float)
    cm = config.chart_metric
    ginv = np.linalg.inv(cm.g(p))
    dg = cm.dg(p)
    ddg = cm.ddg(p)
    low = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    dlow = 0.5 * (ddg.transpose(0, 2, 1, 3) + ddg - ddg.transpose(2, 0, 1, 3))
    dginv = -np.einsum("ab,bce,cd->ade", ginv, dg, ginv)
    return np.einsum("ade,dbc->abce", dginv, low) + np.einsum("ad,dbce->abce", ginv, dlow)


def covariant_derivative(config: BundleConfig, X, Y_fn, point, gamma=None) -> np.ndarray:
    """``nabla_X Y`` in the chart, Y a compiled vector field ``p -> (dim,)``.

    The directional derivative of Y uses fourth-order central differences
    along X.
    """
    p = np.asarray(point, dtype=float)
    X = np.asarray(X, dtype=float)
    gam = christoffel_g_numeric(config, p) if gamma is None else gamma
    s = 1e-3
    dY = (-Y_fn(p + 2 * s * X) + 8 * Y_fn(p + s * X) - 8 * Y_fn(p - s * X) + Y_fn(p - 2 * s * X)) / (12 * s)
    return dY + np.einsum("abc,b,c->a", gam, X, Y_fn(p))


# ------------------------------------------------------- closed-form nabla

FRAME_LABELS_HELP = "integers 0..n-1 for e_i, '+' for e_+, 'xi' for xi"


class ClosedFormConnection:
    """Symbolic ``nabla_{e_a} e_b`` from the base data (no chart Christoffels).

    Labels: ``0..n-1`` for ``e_i``, ``'+'`` for ``e_+``, ``'xi'`` for ``xi``.
    """

    def __init__(self, config: BundleConfig):
        self.config = config
        base = config.base
        X = config.coords
        NX = base.coords
        fs = config.frame_sym
        E, E_eta = fs["E"], fs["E_eta"]
        h, gam = base.h, base.christoffel_sym
        d = base.dim
        eta = base.eta

        def nab_h(A, B):
            return [sum(A[i] * sp.diff(B[k], NX[i]) for i in range(d))
                    + sum(gam[k, i, j] * A[i] * B[j] for i in range(d) for j in range(d)) for k in range(d)]

        def eta_of(A):
            return sum(e * a for e, a in zip(eta, A))

        def pr(A):
            c = eta_of(A)
            return [a - c * b for a, b in zip(A, E_eta)]

        def hdot(A, B):
            return sum(h[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        def Psi_of(A, B):
            return sum(config.Psi[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        def psi(A):
            return [sum(base.h_inv[a, b] * A[c] * config.Psi[c, b] for b in range(d) for c in range(d))
                    for a in range(d)]

        def deriv(vec, fn):
            return sum(c * sp.diff(fn, s) for c, s in zip(vec, X))

        lift = config.lift_sym
        xi, ep, H = fs["xi"], fs["e_plus"], fs["H"]
        e = fs["e"]
        f = config.f
        Gi = config.metric_inv_sym
        grad_f = [sum(Gi[a, b] * sp.diff(f, X[b]) for b in range(len(X))) for a in range(len(X))]
        xi_f = deriv(xi, f)

        def add(*vs):
            return [sum(c) for c in zip(*vs)]

        def scale(c, v):
            return [c * a for a in v]

        n = base.n
        self.labels = list(range(n)) + ["+", "xi"]
        nab = {}
        for i in range(n):
            for j in range(n):
                D = nab_h(E[i], E[j])  # (a)
                nab[(i, j)] = add(lift(pr(D)), scale(Psi_of(E[i], E[j]) - hdot(E_eta, D), xi))
            nab[(i, "+")] = add(lift(pr(nab_h(E[i], E_eta))), lift(pr(psi(E[i]))))  # (c)
            nab[("+", i)] = add(lift(pr(nab_h(E_eta, E[i]))), lift(pr(psi(E[i]))),  # (b)
                                scale(-(2 * Psi_of(E[i], E_eta) + deriv(e[i], H) / 2), xi))
            nab[(i, "xi")] = [sp.Integer(0)] * len(X)  # (e), eta(E_i) = 0
            nab[("xi", i)] = nab[(i, "xi")]  # [xi, e_i] = 0
        nab[("+", "+")] = add(lift(pr(nab_h(E_eta, E_eta))), scale(2, lift(pr(psi(E_eta)))),  # (d)
                              scale(-sp.Rational(1, 2), grad_f), scale(-deriv(ep, f) / 2, xi))
        nab[("+", "xi")] = scale(-xi_f / 2, xi)  # (e), eta(E_eta) = 1
        nab[("xi", "+")] = add(nab[("+", "xi")], scale(deriv(xi, H) / 2, xi))  # [xi, e_+] = xi(H)/2 xi
        nab[("xi", "xi")] = [sp.Integer(0)] * len(X)
        self.sym = nab
        keys = list(nab)
        self._keys = {k: i for i, k in enumerate(keys)}
        self._fn = compile_array([nab[k] for k in keys], X)

    def all_at(self, point) -> dict:
        vals = self._fn(np.asarray(point, dtype=float))
        return {k: vals[i] for k, i in self._keys.items()}

    def __call__(self, a, b, point) -> np.ndarray:
        return self._fn(np.asarray(point, dtype=float))[self._keys[(a, b)]]


def closed_form_connection(config: BundleConfig) -> ClosedFormConnection:
    cached = config.__dict__.get("_closed_conn")
    if cached is None:
        cached = ClosedFormConnection(config)
        config.__dict__["_closed_conn"] = cached
    return cached


def cov_deriv_closed_form(config: BundleConfig, X, Y, point) -> np.ndarray:
    """``nabla_X Y`` for frame labels X, Y from the closed-form formulas."""
    return closed_form_connection(config)(X, Y, point)


class _FrameFields:
    """Frame vector fields as compiled callables plus their chart Jacobians."""

    def __init__(self, config: BundleConfig):
        fs = config.frame_sym
        self.labels = list(range(config.base.n)) + ["+", "xi"]
        vecs = list(fs["e"]) + [fs["e_plus"], fs["xi"]]
        self._vec = compile_array(vecs, config.coords)
        self._jac = compile_array(jacobian_array(vecs, config.coords), config.coords)

    def vectors(self, p):
        return self._vec(p)

    def jacobians(self, p):
        return self._jac(p)  # [label, a, c] = d_c V^a


def frame_fields(config: BundleConfig) -> _FrameFields:
    cached = config.__dict__.get("_frame_fields")
    if cached is None:
        cached = _FrameFields(config)
        config.__dict__["_frame_fields"] = cached
    return cached


def cov_deriv_brute_force(config: BundleConfig, point) -> dict:
    """``nabla_{e_a} e_b`` for all frame labels via chart Christoffels."""
    p = np.asarray(point, dtype=float)
    ff = frame_fields(config)
    V = ff.vectors(p)
    J = ff.jacobians(p)
    gam = christoffel_g_numeric(config, p)
    out = {}
    for ia, a in enumerate(ff.labels):
        for ib, b in enumerate(ff.labels):
            out[(a, b)] = J[ib] @ V[ia] + np.einsum("abc,b,c->a", gam, V[ia], V[ib])
    return out


def connection_discrepancy(config: BundleConfig, point) -> tuple[float, tuple]:
    """Largest relative gap between the two connection pipelines at a point.

    Relative to ``max(1, |nabla|)`` per pair.
    """
    cf = closed_form_connection(config).all_at(point)
    bf = cov_deriv_brute_force(config, point)
    worst, where = 0.0, None
    for k, val in cf.items():
        gap = float(np.max(np.abs(val - bf[k]))) / max(1.0, float(np.max(np.abs(bf[k]))))
        if gap > worst:
            worst, where = gap, k
    return worst, where


# ------------------------------------------------------ screen & Killing


@dataclass
class ScreenReport:
    integrable: bool
    max_eta_wedge_psi: float


def screen_integrability(config: BundleConfig, n_points: int = 64, seed: int = 0, tol: float = 1e-10) -> ScreenReport:
    base = config.base
    d = base.dim
    eta, Psi = base.eta, config.Psi
    arr = np.empty((d, d, d), dtype=object)
    for a in range(d):
        for b in range(d):
            for c in range(d):
                arr[a, b, c] = eta[a] * Psi[b, c] + eta[b] * Psi[c, a] + eta[c] * Psi[a, b]
    fn = compile_array(arr, base.coords)
    pts = base.sample_points(n_points, np.random.default_rng(seed))
    sup = max(float(np.max(np.abs(fn(p)))) for p in pts)
    return ScreenReport(sup <= tol, sup)


def killing_candidate(config: BundleConfig, C: float) -> list:
    """Symbolic ``K = zeta + C/2 xi``."""
    fs = config.frame_sym
    return [z + sp.Float(C) / 2 * x for z, x in zip(fs["zeta"], fs["xi"])]


def estimate_killing_constant(config: BundleConfig, eps: float = 0.1, per_axis: int = 32,
                              line_range: float = 2.0, margin: float = 0.05, max_points: int = 2**20) -> float:
    """``C = max g(zeta, zeta) + eps`` on a sample grid, with a safety margin.

    The grid runs over the coordinates ``g(zeta, zeta) = f + 1/rho^2`` actually
    depends on; periodic ones on [0, 2 pi), lines on ``[-line_range, line_range]``.
    """
    fs = config.frame_sym
    gzz = sp.simplify(sum(config.metric_sym[a, b] * fs["zeta"][a] * fs["zeta"][b]
                          for a in range(config.dim) for b in range(config.dim)))
    syms = sorted(gzz.free_symbols, key=lambda s: config.coords.index(s))
    periodic = dict(zip([config.base.u, config.v] + config.base.base_symbols,
                        [True, True] + config.base.periodic[1:]))
    axes = [np.linspace(0, TWO_PI, per_axis, endpoint=False) if periodic[s]
            else np.linspace(-line_range, line_range, per_axis) for s in syms]
    fn = sp.lambdify(syms, gzz, "numpy")
    if not syms:
        mx = float(gzz)
    elif per_axis ** len(syms) <= max_points:
        mesh = np.meshgrid(*axes, indexing="ij")
        mx = float(np.max(fn(*mesh)))
    else:
        rng = np.random.default_rng(0)
        cols = [rng.choice(ax, max_points) for ax in axes]
        mx = float(np.max(fn(*cols)))
    return mx + abs(mx) * margin + eps


def lie_derivative_g(config: BundleConfig, K, point) -> np.ndarray:
    """``(L_K g)(X, Y) = g(nabla_X K, Y) + g(X, nabla_Y K)`` as a chart matrix.

    ``K`` is a symbolic chart vector field (list of expressions).
    """
    p = np.asarray(point, dtype=float)
    Kc = compile_array(K, config.coords)
    JK = compile_array(jacobian_array(K, config.coords), config.coords)(p)  # [a, c] = d_c K^a
    gam = christoffel_g_numeric(config, p)
    nablaK = JK + np.einsum("abc,c->ab", gam, Kc(p))  # [a, b] = (nabla_b K)^a
    g = config.chart_metric.g(p)
    M = g @ nablaK  # [y, x] = g(nabla_x K, d_y)
    return M + M.T
