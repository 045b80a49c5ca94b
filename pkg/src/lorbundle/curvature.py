"""Closed-form and brute-force curvature of the bundle metrics.

Index convention: ``R_abcd = g(R(e_a, e_b) e_c, e_d)`` with
``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]`` and
``Ric(Y, Z) = trace(X -> R(X, Y) Z)``.  Frame labels are ``0..n-1`` for
``e_i``, ``'+'`` for ``e_+`` and ``'xi'``; ``'-'`` (``e_- = e_+ + xi``) is
used internally for traces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .base import TWO_PI
from .bundle import BundleConfig, christoffel_g_derivative, christoffel_g_numeric, closed_form_connection
from .errors import ShapeError, TranscriptionAlarm
from .expr import compile_array, compile_scalar


def riemann_brute_force(config: BundleConfig, point) -> np.ndarray:
    """``Rm[x, y, z, w] = g(R(d_x, d_y) d_z, d_w)`` in chart coordinates."""
    p = np.asarray(point, dtype=float)
    gam = christoffel_g_numeric(config, p)
    dgam = christoffel_g_derivative(config, p)  # [a, b, c, e] = d_e Gamma^a_bc
    # R^a_{bcd}: R(d_c, d_d) d_b
    R = (np.einsum("adbc->abcd", dgam) - np.einsum("acbd->abcd", dgam)
         + np.einsum("ace,edb->abcd", gam, gam) - np.einsum("ade,ecb->abcd", gam, gam))
    g = config.chart_metric.g(p)
    return np.einsum("wa,azxy->xyzw", g, R)


def ricci_brute_force(config: BundleConfig, point) -> np.ndarray:
    """Chart Ricci tensor ``Ric_yz = g^{xw} Rm_{x y z w}``."""
    p = np.asarray(point, dtype=float)
    Rm = riemann_brute_force(config, p)
    ginv = config.chart_metric.inverse(p)
    return np.einsum("xw,xyzw->yz", ginv, Rm)


def frame_tensor(Rm: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Contract a chart 4-tensor with basis columns."""
    return np.einsum("xyzw,xa,yb,zc,wd->abcd", Rm, basis, basis, basis, basis)


# ------------------------------------------------------------ closed form


def _kn(A, B, X, Y, Z, W):
    """Kulkarni-Nomizu product of symmetric 2-tensors (given as callables)."""
    return A(X, W) * B(Y, Z) + A(Y, Z) * B(X, W) - A(X, Z) * B(Y, W) - A(Y, W) * B(X, Z)


class ClosedFormCurvature:
    """Symbolic Riemann frame components and Ricci components from base data.

    With ``variant_ricci`` the Ricci components use the opposite sign of the
    divergence term in ``Ric(e_i, e_+)`` and ``-xi(f)(xi(f)/2 + 1)`` as the
    fibre term of ``Ric(e_+, e_+)``.  Both disagree with the contraction of
    the Riemann components and are kept only for comparison.
    """

    def __init__(self, config: BundleConfig, variant_ricci: bool = False):
        self.config = config
        self.variant_ricci = variant_ricci
        base = config.base
        n, d = base.n, base.dim
        NX, X = base.coords, config.coords
        h, hinv, gam = base.h, base.h_inv, base.christoffel_sym
        Psi = config.Psi
        eta = base.eta
        fs = config.frame_sym
        E, E_eta = fs["E"], fs["E_eta"]
        f = config.f
        conn = closed_form_connection(config).sym

        # --- base tensors (symbolic, N coordinates)
        def hd(A, B):
            return sum(h[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        # R^h: Rh[a,b,c,e] = h(R(d_a, d_b) d_c, d_e)
        dgam = {(a, b, c, e): sp.diff(gam[a, b, c], NX[e])
                for a in range(d) for b in range(d) for c in range(d) for e in range(d)}
        Rup = np.empty((d, d, d, d), dtype=object)  # R^a_{b c e}: R(d_c, d_e) d_b
        for a, b, c, e in itertools.product(range(d), repeat=4):
            Rup[a, b, c, e] = (dgam[(a, e, b, c)] - dgam[(a, c, b, e)]
                               + sum(gam[a, c, k] * gam[k, e, b] - gam[a, e, k] * gam[k, c, b] for k in range(d)))
        Rh = np.empty((d, d, d, d), dtype=object)
        for x, y, z, w in itertools.product(range(d), repeat=4):
            Rh[x, y, z, w] = sum(h[w, a] * Rup[a, z, x, y] for a in range(d))

        def Rh_of(A, B, C, D):
            return sum(Rh[x, y, z, w] * A[x] * B[y] * C[z] * D[w]
                       for x, y, z, w in itertools.product(range(d), repeat=4) if Rh[x, y, z, w] != 0)

        # nabla eta (symmetric), nabla Psi
        Neta = sp.Matrix(d, d, lambda i, j: sp.diff(eta[j], NX[i]) - sum(gam[k, i, j] * eta[k] for k in range(d)))
        NPsi = np.empty((d, d, d), dtype=object)  # [k, a, b] = (nabla_k Psi)_ab
        for k, a, b in itertools.product(range(d), repeat=3):
            NPsi[k, a, b] = (sp.diff(Psi[a, b], NX[k]) - sum(gam[l, k, a] * Psi[l, b] for l in range(d))
                             - sum(gam[l, k, b] * Psi[a, l] for l in range(d)))
        eta_sq = sum(hinv[i, j] * eta[i] * eta[j] for i in range(d) for j in range(d))

        def Neta_of(A, B):
            return sum(Neta[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        def Psi_of(A, B):
            return sum(Psi[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        def NPsi_of(K, A, B):
            return sum(NPsi[k, a, b] * K[k] * A[a] * B[b] for k, a, b in itertools.product(range(d), repeat=3))

        def psi(A):
            return [sum(hinv[a, b] * A[c] * Psi[c, b] for b in range(d) for c in range(d)) for a in range(d)]

        def pr(A):
            c = sum(e * a for e, a in zip(eta, A))
            return [a - c * b for a, b in zip(A, E_eta)]

        def kn_eta(A, B, C, D):
            return _kn(Neta_of, Neta_of, A, B, C, D) / eta_sq

        psi_eta_form = lambda A: Psi_of(A, E_eta)  # Psi(., E_eta)
        neta_eta_form = lambda A: Neta_of(E_eta, A)  # (nabla eta)(E_eta)

        # --- chart-side quantities via closed-form nabla
        vec = {i: fs["e"][i] for i in range(n)}
        vec["+"] = fs["e_plus"]
        vec["xi"] = fs["xi"]
        vec["-"] = fs["e_minus"]

        def nab(a, b):
            if a == "-":
                return [x + y for x, y in zip(nab("+", b), nab("xi", b))]
            if b == "-":
                return [x + y for x, y in zip(nab(a, "+"), nab(a, "xi"))]
            return conn[(a, b)]

        def apply(V, fn):
            return sum(c * sp.diff(fn, s) for c, s in zip(V, X))

        def hess(a, b):
            return apply(vec[a], apply(vec[b], f)) - apply(nab(a, b), f)

        def proj(V):  # d pi of a chart vector
            return [V[0]] + list(V[2:])

        self.hess = hess
        labels_on = list(range(n)) + ["+", "-"]
        eps = {**{i: 1 for i in range(n)}, "+": 1, "-": -1}

        # --- closed-form Riemann components
        comps = {}
        for i, j, k, l in itertools.product(range(n), repeat=4):
            comps[(i, j, k, l)] = Rh_of(E[i], E[j], E[k], E[l]) + kn_eta(E[i], E[j], E[k], E[l])
        for i, j in itertools.product(range(n), repeat=2):
            sym_term = (psi_eta_form(E[i]) * neta_eta_form(E[j]) + psi_eta_form(E[j]) * neta_eta_form(E[i])) / 2
            comps[(i, "+", "+", j)] = (Rh_of(E[i], E_eta, E_eta, E[j]) + kn_eta(E[i], E_eta, E_eta, E[j])
                                       + 2 * sym_term + NPsi_of(E[i], E_eta, E[j]) + NPsi_of(E[j], E_eta, E[i])
                                       + hd(pr(psi(E[i])), pr(psi(E[j]))) - hess(i, j) / 2)
        for i, j, k in itertools.product(range(n), repeat=3):
            wedge = psi_eta_form(E[i]) * Neta_of(E[k], E[j]) - psi_eta_form(E[j]) * Neta_of(E[k], E[i])
            comps[(i, j, k, "+")] = (Rh_of(E[i], E[j], E[k], E_eta) + kn_eta(E[i], E[j], E[k], E_eta)
                                     + wedge + NPsi_of(E[k], E[i], E[j]))
        for i in range(n):
            comps[(i, "+", "+", "xi")] = -hess(i, "xi") / 2
        comps[("+", "xi", "xi", "+")] = -hess("xi", "xi") / 2
        self.listed = comps

        # --- closed-form Ricci components
        def T_eta(A, B):
            return sum(kn_eta(A, E[k], E[k], B) for k in range(n))

        Ric_h = np.empty((d, d), dtype=object)  # Ric^h_yz = h^{xw} Rh_xyzw
        for y, z in itertools.product(range(d), repeat=2):
            Ric_h[y, z] = sum(hinv[x, w] * Rh[x, y, z, w] for x in range(d) for w in range(d))

        def Ric_h_of(A, B):
            return sum(Ric_h[i, j] * A[i] * B[j] for i in range(d) for j in range(d))

        def pistar(form2, A, B):
            return form2(proj(A), proj(B))

        def div_pull_psi(b):
            # (div_g pi*Psi)(e_b) = sum_a eps_a (nabla_{e_a} pi*Psi)(e_a, e_b)
            tot = 0
            for a in labels_on:
                T = lambda A, B: pistar(Psi_of, A, B)
                tot += eps[a] * (apply(vec[a], T(vec[a], vec[b])) - T(nab(a, a), vec[b]) - T(vec[a], nab(a, b)))
            return tot

        eta_c = lambda V: sum(e * x for e, x in zip(eta, proj(V)))
        div_eta = sum(eps[a] * (apply(vec[a], eta_c(vec[a])) - eta_c(nab(a, a))) for a in labels_on)
        lap_g = sum(eps[a] * hess(a, a) for a in labels_on)
        xi_f = apply(vec["xi"], f)
        eta_sharp = [sum(hinv[a, b] * eta[b] for b in range(d)) for a in range(d)]

        def nab_h(A, B):
            return [sum(A[i] * sp.diff(B[k], NX[i]) for i in range(d))
                    + sum(gam[k, i, j] * A[i] * B[j] for i in range(d) for j in range(d)) for k in range(d)]

        # (div_h Psi)_b = h^{ac} (nabla_a Psi)_cb
        div_h_psi = [sum(hinv[a, c] * NPsi[a, c, b] for a in range(d) for c in range(d)) for b in range(d)]
        psibar_sq = sum(hd(pr(psi(E[i])), pr(psi(E[i]))) for i in range(n))

        if variant_ricci:
            div_sign, fiber_term = 1, xi_f * (xi_f / 2 + 1)
        else:
            # contraction of the Riemann components above
            div_sign, fiber_term = -1, hess("+", "xi")
        ric = {}
        for i, j in itertools.product(range(n), repeat=2):
            ric[(i, j)] = Ric_h_of(E[i], E[j]) + T_eta(E[i], E[j])
        for i in range(n):
            ric[(i, "+")] = (Ric_h_of(E[i], E_eta) + T_eta(E[i], E_eta)
                             + div_sign * div_pull_psi(i) + Psi_of(E[i], E_eta) * div_eta
                             - Psi_of(nab_h(E[i], eta_sharp), E_eta) - hess(i, "xi") / 2)
        trace_term = sum(psi_eta_form(E[k]) * neta_eta_form(E[k]) for k in range(n))
        ric[("+", "+")] = (Ric_h_of(E_eta, E_eta) + T_eta(E_eta, E_eta) + 2 * trace_term
                           - 2 * sum(div_h_psi[b] * E_eta[b] for b in range(d)) + psibar_sq
                           - lap_g / 2 - fiber_term)
        ric[("xi", "+")] = -hess("xi", "xi") / 2
        self.ricci_listed = ric

        self.labels = list(range(n)) + ["+", "xi"]
        rkeys = list(comps)
        self._rkeys = rkeys
        self._rfn = compile_array([comps[k] for k in rkeys], X)
        qkeys = list(ric)
        self._qkeys = qkeys
        self._qfn = compile_array([ric[k] for k in qkeys], X)

    def listed_at(self, point) -> dict:
        vals = self._rfn(np.asarray(point, dtype=float))
        return dict(zip(self._rkeys, vals))

    def ricci_at(self, point) -> dict:
        vals = self._qfn(np.asarray(point, dtype=float))
        return dict(zip(self._qkeys, vals))

    def full_tensor_at(self, point) -> np.ndarray:
        """Frame tensor over labels ``(e_1..e_n, e_+, xi)`` filled from the
        listed components by the curvature symmetries; all else zero."""
        idx = {lab: k for k, lab in enumerate(self.labels)}
        N = len(self.labels)
        T = np.zeros((N, N, N, N))
        for (a, b, c, d), val in self.listed_at(point).items():
            a, b, c, d = idx[a], idx[b], idx[c], idx[d]
            for (p, q, r, s), sgn in _symmetry_images(a, b, c, d):
                T[p, q, r, s] = sgn * val
        return T


def _symmetry_images(a, b, c, d):
    out = []
    for (p, q, r, s), sgn in [((a, b, c, d), 1), ((b, a, c, d), -1), ((a, b, d, c), -1), ((b, a, d, c), 1)]:
        out.append(((p, q, r, s), sgn))
        out.append(((r, s, p, q), sgn))
    return out


def closed_form_curvature(config: BundleConfig) -> ClosedFormCurvature:
    cached = config.__dict__.get("_closed_curv")
    if cached is None:
        cached = ClosedFormCurvature(config)
        config.__dict__["_closed_curv"] = cached
    return cached


def frame_basis(config: BundleConfig, point) -> np.ndarray:
    """Columns ``(e_1..e_n, e_+, xi)`` at a point."""
    from .bundle import frame_at

    return frame_at(config, point, check=False).basis()


# ------------------------------------------------------------ reports


@dataclass
class CurvatureReport:
    point: np.ndarray
    closed_form: dict
    brute_force: np.ndarray = field(repr=False)  # chart Rm
    frame_brute_force: np.ndarray = field(repr=False)
    max_discrepancy: float = 0.0
    worst_index: tuple | None = None
    ricci_closed_form: dict = field(default_factory=dict)
    ricci_frame_brute_force: dict = field(default_factory=dict)
    ricci_discrepancy: float = 0.0
    bianchi_residual: float = 0.0
    symmetry_residual: float = 0.0


def riemann_closed_form(config: BundleConfig, point) -> dict:
    """Closed-form nonzero components ``{(a, b, c, d): value}`` at a point."""
    return closed_form_curvature(config).listed_at(point)


def ricci_closed_form(config: BundleConfig, point) -> dict:
    """``{(i, j): Ric_ij, (i, '+'): Ric_i+, ('+', '+'): Ric_++, ('xi', '+'): Ric_xi+}``."""
    return closed_form_curvature(config).ricci_at(point)


def ricci_frame_components(config: BundleConfig, point) -> dict:
    """Brute-force Ricci evaluated on the same frame pairs as the closed form."""
    p = np.asarray(point, dtype=float)
    Ric = ricci_brute_force(config, p)
    B = frame_basis(config, p)
    F = B.T @ Ric @ B
    n = config.base.n
    lab = {i: i for i in range(n)}
    lab["+"], lab["xi"] = n, n + 1
    return {k: float(F[lab[k[0]], lab[k[1]]]) for k in ricci_closed_form(config, p)}


def curvature_report(config: BundleConfig, point, rtol: float = 1e-5, atol: float = 1e-8,
                     raise_on_mismatch: bool = False) -> CurvatureReport:
    p = np.asarray(point, dtype=float)
    cf = closed_form_curvature(config)
    Rm = riemann_brute_force(config, p)
    B = frame_basis(config, p)
    Fb = frame_tensor(Rm, B)
    Fc = cf.full_tensor_at(p)
    diff = np.abs(Fb - Fc) / np.maximum(1.0, np.abs(Fb))
    widx = np.unravel_index(np.argmax(diff), diff.shape)
    worst = float(diff[widx])
    labels = cf.labels
    ric_c = cf.ricci_at(p)
    ric_b = ricci_frame_components(config, p)
    rgap = max(abs(ric_c[k] - ric_b[k]) / max(1.0, abs(ric_b[k])) for k in ric_c)
    sym = max(float(np.max(np.abs(Rm + Rm.transpose(1, 0, 2, 3)))),
              float(np.max(np.abs(Rm + Rm.transpose(0, 1, 3, 2)))),
              float(np.max(np.abs(Rm - Rm.transpose(2, 3, 0, 1)))))
    bianchi = float(np.max(np.abs(Rm + Rm.transpose(1, 2, 0, 3) + Rm.transpose(2, 0, 1, 3))))
    rep = CurvatureReport(p, cf.listed_at(p), Rm, Fb, worst, tuple(labels[i] for i in widx),
                          ric_c, ric_b, rgap, bianchi, sym)
    if raise_on_mismatch and (worst > rtol or rgap > rtol):
        raise TranscriptionAlarm(f"closed form vs brute force: {max(worst, rgap):.3e} at {rep.worst_index}",
                                 rep.worst_index, max(worst, rgap))
    return rep


def t_eta(config: BundleConfig, X, Y, point) -> float:
    """``T_eta(X, Y)`` for chart vectors X, Y."""
    from .base import nabla_eta

    base = config.base
    p = np.asarray(point, dtype=float)
    pn = np.concatenate([p[:1], p[2:]])
    A = nabla_eta(base, pn)
    fr_E = np.zeros((base.n, base.dim))
    warps = base._warps(pn)
    for i in range(base.n):
        fr_E[i, i + 1] = 1.0 / warps[i]
    eta = np.array(base.eta, dtype=object)
    eta_num = np.array([base._rho(pn)] + [0.0] * base.n)
    eta_sq = eta_num @ np.linalg.inv(base.metric(pn)) @ eta_num
    x = np.concatenate([np.asarray(X, float)[:1], np.asarray(X, float)[2:]])
    y = np.concatenate([np.asarray(Y, float)[:1], np.asarray(Y, float)[2:]])
    form = lambda a, b: a @ A @ b
    return float(sum(_kn(form, form, x, E, E, y) for E in fr_E) / eta_sq)


# ------------------------------------------------------------ diagnostics


@dataclass
class EinsteinObstruction:
    lambda_sup: float  # sup |1/2 Hess f(xi, xi)|
    fiber_variation: float  # sup over fibres of (max - min) of the candidate constant


def einstein_obstruction(config: BundleConfig, n_fibers: int = 16, n_per_fiber: int = 64,
                         seed: int = 0) -> EinsteinObstruction:
    """Candidate cosmological constant ``1/2 Hess f(xi, xi) = 1/2 d_v^2 f``.

    ``Hess_g f(xi, xi) = xi(xi f)`` because ``nabla_xi xi = 0``.
    """
    lam = compile_scalar(sp.diff(config.f, config.v, 2) / 2, config.coords)
    rng = np.random.default_rng(seed)
    pts = config.sample_points(n_fibers, rng)
    vs = np.linspace(0, TWO_PI, n_per_fiber, endpoint=False)
    sup, var = 0.0, 0.0
    for p in pts:
        q = np.repeat(p[:, None], n_per_fiber, axis=1)
        q[1] = vs
        vals = np.broadcast_to(lam(q), vs.shape)
        sup = max(sup, float(np.max(np.abs(vals))))
        var = max(var, float(np.ptp(vals)))
    return EinsteinObstruction(sup, var)


def _ricci_flat_shape(config: BundleConfig):
    meta = config.meta
    if "alpha" not in meta or "f_B" not in meta:
        raise ShapeError("config is not of the Ricci-flat shape (needs alpha and f_B)")
    base = config.base
    if base.rho != 1:
        raise ShapeError("Ricci-flat shape requires eta = du")
    alpha = [sp.sympify(a) for a in meta["alpha"]]
    f_B = sp.sympify(meta["f_B"])
    if alpha[0] != 0 or any(sp.diff(a, base.u) != 0 for a in alpha) or sp.diff(f_B, base.u) != 0:
        raise ShapeError("alpha and f_B must live on B")
    from .bundle import psi_alpha_wedge_eta

    if sp.simplify(config.Psi - psi_alpha_wedge_eta(base, alpha)) != sp.zeros(base.dim, base.dim):
        raise ShapeError("Psi is not alpha ^ du")
    if sp.simplify(config.f - f_B) != 0:
        raise ShapeError("f is not f_B (with f_{S^1} = 1)")
    return alpha, f_B


def ricci_flat_residual_expr(config: BundleConfig) -> sp.Expr:
    """``Delta_{h_B} f_B + 4 div_{h_B} alpha`` as a symbolic field on B."""
    alpha, f_B = _ricci_flat_shape(config)
    base = config.base
    NX, gam, hinv = base.coords, base.christoffel_sym, base.h_inv
    d = base.dim
    # h = h_B + du^2 is a product, so the h-calculus restricted to B-indices is h_B's
    idx = range(1, d)
    hess = lambda i, j: sp.diff(f_B, NX[i], NX[j]) - sum(gam[k, i, j] * sp.diff(f_B, NX[k]) for k in idx)
    lap = sum(hinv[i, j] * hess(i, j) for i in idx for j in idx)
    cov = lambda i, j: sp.diff(alpha[j], NX[i]) - sum(gam[k, i, j] * alpha[k] for k in idx)
    div = sum(hinv[i, j] * cov(i, j) for i in idx for j in idx)
    return sp.simplify(lap + 4 * div)


def ricci_flat_residual(config: BundleConfig, n_points: int = 256, seed: int = 0) -> float:
    """Sampled sup of ``|Delta_{h_B} f_B + 4 div_{h_B} alpha|``."""
    expr = ricci_flat_residual_expr(config)
    fn = compile_scalar(expr, config.base.coords)
    pts = config.base.sample_points(n_points, np.random.default_rng(seed))
    return float(np.max(np.abs(np.broadcast_to(fn(pts.T), (n_points,)))))
