"""Riemannian base ``N = (warped lines) x (flat circles) x S^1_u``.

Coordinates on ``N`` are ordered ``(u, b_1, ..., b_n)`` where ``u`` is the
distinguished circle and ``b`` are the coordinates of the factors of ``B``
in the order given.  The metric is ``h = sum phi_i(y_i)^2 dy_i^2 + flat + du^2``
and the distinguished closed 1-form is ``eta = rho(u) du``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import ConsistencyError, DomainError
from .expr import compile_array, compile_scalar, parse_expr

TWO_PI = 2.0 * np.pi
FD_STEP = 1e-3


@dataclass(frozen=True)
class WarpedLine:
    """A real line with metric ``warp(y)^2 dy^2``."""

    name: str
    warp: str = "1"


@dataclass(frozen=True)
class TorusCircle:
    """A flat circle of period 2 pi."""

    name: str


class ProductBase:
    def __init__(self, factors: Sequence[WarpedLine | TorusCircle], rho: str = "1", u_name: str = "u"):
        if not factors:
            raise ValueError("the base B needs at least one factor")
        names = [f.name for f in factors]
        if len(set(names)) != len(names) or u_name in names or "v" in names:
            raise ValueError(f"factor names must be distinct and avoid u, v: {names}")
        self.factors = tuple(factors)
        self.u = sp.Symbol(u_name, real=True)
        self.base_symbols = [sp.Symbol(n, real=True) for n in names]
        self.coords = [self.u] + self.base_symbols
        self.n = len(factors)
        self.dim = self.n + 1
        self.rho = parse_expr(rho, [self.u])
        if self.rho.free_symbols - {self.u}:
            raise ValueError("rho may only depend on u")

        self.warps = []
        diag = [sp.Integer(1)]
        for fac, s in zip(self.factors, self.base_symbols):
            if isinstance(fac, WarpedLine):
                w = parse_expr(fac.warp, [s])
                if w.free_symbols - {s}:
                    raise ValueError(f"warp of {fac.name} may only depend on {fac.name}")
            else:
                w = sp.Integer(1)
            self.warps.append(w)
            diag.append(w**2)
        self.h = sp.diag(*diag)
        self.h_inv = sp.diag(*[1 / d for d in diag])
        self.eta = [self.rho] + [sp.Integer(0)] * self.n
        self.periodic = [True] + [isinstance(f, TorusCircle) for f in self.factors]

        d = self.dim
        X = self.coords
        gam = np.empty((d, d, d), dtype=object)
        for k in range(d):
            for i in range(d):
                for j in range(d):
                    gam[k, i, j] = sp.simplify(
                        sum(
                            self.h_inv[k, l]
                            * (sp.diff(self.h[l, i], X[j]) + sp.diff(self.h[l, j], X[i]) - sp.diff(self.h[i, j], X[l]))
                            for l in range(d)
                        )
                        / 2
                    )
        self.christoffel_sym = gam
        self._gamma = compile_array(gam, X)
        self._h = compile_array(self.h, X)
        self._warps = compile_array(self.warps, X)
        self._rho = compile_scalar(self.rho, X)

    # frame vectors E_i (orthonormal in ker eta) and E_eta, as N-vectors
    def frame_sym(self):
        E = []
        for i, w in enumerate(self.warps):
            vec = [sp.Integer(0)] * self.dim
            vec[i + 1] = 1 / w
            E.append(vec)
        E_eta = [1 / self.rho] + [sp.Integer(0)] * self.n
        return E, E_eta

    def metric(self, point) -> np.ndarray:
        return self._h(point)

    def check_point(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dim,):
            raise DomainError(f"expected a point of dimension {self.dim}, got shape {p.shape}")
        warps = self._warps(p)
        if not np.all(np.isfinite(warps)) or not np.isfinite(self._rho(p)):
            raise DomainError(f"non-finite warp or rho at {p}")
        if np.any(np.abs(warps) == 0.0) or self._rho(p) == 0.0:
            raise DomainError(f"vanishing warp or rho at {p}")
        return p

    def sample_points(self, n_points: int, rng: np.random.Generator, line_range: float = 2.0) -> np.ndarray:
        pts = np.empty((n_points, self.dim))
        for j, per in enumerate(self.periodic):
            pts[:, j] = rng.uniform(0, TWO_PI, n_points) if per else rng.uniform(-line_range, line_range, n_points)
        return pts

    def validate(self, rng: np.random.Generator | None = None, n_points: int = 64) -> None:
        """Check the invariants of the base on a random sample."""
        rng = np.random.default_rng(0) if rng is None else rng
        for p in self.sample_points(n_points, rng):
            self.check_point(p)
        # eta = rho(u) du is closed by construction; the only failure is rho
        # depending on base coordinates, rejected in __init__.


# ---------------------------------------------------------------- fields


def fd_gradient(func: Callable, point: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Fourth-order central differences of ``func`` in every coordinate."""
    point = np.asarray(point, dtype=float)
    cols = []
    for k in range(point.size):
        e = np.zeros_like(point)
        e[k] = step
        val = (-np.asarray(func(point + 2 * e)) + 8 * np.asarray(func(point + e))
               - 8 * np.asarray(func(point - e)) + np.asarray(func(point - 2 * e))) / (12 * step)
        cols.append(val)
    return np.stack(cols, axis=-1)


class _Field:
    rank = 0

    def __init__(self, components=None, symbols=None, func=None):
        if (components is None) == (func is None):
            raise ValueError("give either symbolic components or a numeric callable")
        self.func = func
        self.symbols = list(symbols) if symbols is not None else None
        self.components = components
        if components is not None:
            X = self.symbols
            arr = np.array(components, dtype=object)
            self._value = compile_array(arr, X)
            d1 = np.empty(arr.shape + (len(X),), dtype=object)
            d2 = np.empty(arr.shape + (len(X), len(X)), dtype=object)
            for idx in np.ndindex(arr.shape):
                for a, s in enumerate(X):
                    d1[idx + (a,)] = sp.diff(arr[idx], s)
                    for b, t in enumerate(X):
                        d2[idx + (a, b)] = sp.diff(d1[idx + (a,)], t)
            self._d1 = compile_array(d1, X)
            self._d2 = compile_array(d2, X)

    @property
    def analytic(self) -> bool:
        return self.components is not None

    def __call__(self, point):
        if self.analytic:
            return self._value(point)
        return np.asarray(self.func(np.asarray(point, dtype=float)), dtype=float)

    def partials(self, point) -> np.ndarray:
        """First partials, derivative index last."""
        if self.analytic:
            return self._d1(point)
        return fd_gradient(self, point)

    def second_partials(self, point) -> np.ndarray:
        if self.analytic:
            return self._d2(point)
        return fd_gradient(self.partials, point)


class ScalarField(_Field):
    rank = 0

    def __init__(self, expr=None, symbols=None, func=None):
        super().__init__(None if expr is None else [expr], symbols, func)
        self.expr = expr

    def __call__(self, point):
        val = super().__call__(point)
        return float(np.ravel(val)[0]) if self.analytic else float(val)

    def partials(self, point):
        d = super().partials(point)
        return d[0] if self.analytic else d

    def second_partials(self, point):
        if self.analytic:
            return self._d2(point)[0]
        return fd_gradient(self.partials, point)


class OneForm(_Field):
    rank = 1


class TwoForm(_Field):
    rank = 2

    def __init__(self, components=None, symbols=None, func=None):
        if components is not None:
            m = sp.Matrix(components)
            if m != -m.T:
                raise ValueError("two-form components must be antisymmetric")
        super().__init__(components, symbols, func)


def one_form_d(alpha: OneForm, point) -> np.ndarray:
    """Exterior derivative components ``(d alpha)_ij = d_i a_j - d_j a_i``."""
    D = alpha.partials(point)  # D[j, i] = d_i alpha_j
    return D.T - D


def two_form_d(psi: TwoForm, point) -> np.ndarray:
    """``(d Psi)_ijk = d_i Psi_jk + d_j Psi_ki + d_k Psi_ij``."""
    D = psi.partials(point)  # D[j, k, i] = d_i Psi_jk
    return np.einsum("jki->ijk", D) + np.einsum("kij->ijk", D) + D


# ------------------------------------------------------------- calculus


@dataclass
class BaseFrame:
    point: np.ndarray
    E: np.ndarray  # (n, n+1), rows are the frame vectors E_i
    E_eta: np.ndarray


def base_frame(base: ProductBase, point) -> BaseFrame:
    p = base.check_point(point)
    warps = base._warps(p)
    E = np.zeros((base.n, base.dim))
    for i in range(base.n):
        E[i, i + 1] = 1.0 / warps[i]
    E_eta = np.zeros(base.dim)
    E_eta[0] = 1.0 / base._rho(p)
    return BaseFrame(p, E, E_eta)


def christoffel_h(base: ProductBase, point) -> np.ndarray:
    """Levi-Civita symbols ``G[k, i, j]`` of ``h`` at ``point``."""
    p = base.check_point(point)
    gam = base._gamma(p)
    if not np.all(np.isfinite(gam)):
        raise DomainError(f"non-finite Christoffel symbols at {p}")
    return gam


@dataclass
class CalculusResult:
    sharp: np.ndarray | None = None
    flat: np.ndarray | None = None
    grad: np.ndarray | None = None
    div: float | None = None
    laplacian: float | None = None
    hessian: np.ndarray | None = None


def calculus(base: ProductBase, field, point) -> CalculusResult:
    """Musical maps, gradient, divergence, Laplacian and Hessian at a point.

    Scalar fields get ``grad``, ``hessian``, ``laplacian`` (and ``flat`` = df,
    ``sharp`` = grad); one-forms get ``sharp`` and ``div`` (``flat`` is the
    form itself).
    """
    p = base.check_point(point)
    h = base.metric(p)
    h_inv = np.linalg.inv(h)
    gam = christoffel_h(base, p)
    if field.rank == 0:
        df = field.partials(p)
        hess = field.second_partials(p) - np.einsum("kij,k->ij", gam, df)
        hess = 0.5 * (hess + hess.T)
        grad = h_inv @ df
        return CalculusResult(sharp=grad, flat=df, grad=grad, hessian=hess,
                              laplacian=float(np.einsum("ij,ij->", h_inv, hess)))
    if field.rank == 1:
        a = field(p)
        D = field.partials(p)  # D[j, i] = d_i a_j
        cov = D.T - np.einsum("kij,k->ij", gam, a)  # cov[i, j] = (nabla_i a)_j
        return CalculusResult(sharp=h_inv @ a, flat=a, div=float(np.einsum("ij,ij->", h_inv, cov)))
    raise TypeError("calculus supports scalar fields and one-forms")


def vector_flat(base: ProductBase, X, point) -> np.ndarray:
    return base.metric(base.check_point(point)) @ np.asarray(X, dtype=float)


def vector_div(base: ProductBase, X: Callable, point) -> float:
    """Divergence of a vector field given as a callable of the point."""
    p = base.check_point(point)
    D = fd_gradient(X, p)  # D[a, i] = d_i X^a
    gam = christoffel_h(base, p)
    return float(np.trace(D) + np.einsum("kkj,j->", gam, np.asarray(X(p))))


def nabla_eta(base: ProductBase, point, tol: float = 1e-9) -> np.ndarray:
    """``(nabla^h eta)_ij``; symmetric because eta is closed."""
    p = base.check_point(point)
    eta = OneForm(base.eta, base.coords)
    D = eta.partials(p)
    gam = christoffel_h(base, p)
    cov = D.T - np.einsum("kij,k->ij", gam, eta(p))
    asym = np.max(np.abs(cov - cov.T))
    if asym > tol:
        raise ConsistencyError(f"nabla eta is not symmetric (max {asym:.3e})")
    return cov


def eta_is_recurrent(base: ProductBase, point, tol: float = 1e-10) -> bool:
    """True when ``nabla eta = theta (x) eta`` for some 1-form theta."""
    cov = nabla_eta(base, point)
    eta = np.array([base._rho(base.check_point(point))] + [0.0] * base.n)
    wedge = np.einsum("ij,k->ijk", cov, eta) - np.einsum("ik,j->ijk", cov, eta)
    return bool(np.max(np.abs(wedge)) <= tol)


def metricity_residual(base: ProductBase, point) -> float:
    """``max |nabla h|`` from the Christoffel symbols and analytic dh."""
    p = base.check_point(point)
    dh = np.array([[[float(sp.diff(base.h[i, j], s).subs(dict(zip(base.coords, p))))
                     for s in base.coords] for j in range(base.dim)] for i in range(base.dim)])
    h = base.metric(p)
    gam = christoffel_h(base, p)
    # (nabla_k h)_ij = d_k h_ij - G^l_ki h_lj - G^l_kj h_il
    res = dh - np.einsum("lki,lj->ijk", gam, h) - np.einsum("lkj,il->ijk", gam, h)
    return float(np.max(np.abs(res)))


@dataclass
class PsiEndomorphism:
    matrix: np.ndarray  # acts on N-coordinate vectors: psi(X) = matrix @ X
    bar: np.ndarray  # restriction to ker eta in the frame basis E_i, same convention


def psi_endomorphism(base: ProductBase, psi: TwoForm, point) -> PsiEndomorphism:
    """The endomorphism ``psi`` with ``h(psi X, Y) = Psi(X, Y)``."""
    p = base.check_point(point)
    P = psi(p)
    h_inv = np.linalg.inv(base.metric(p))
    # psi(X)^a = h^{ab} Psi(X, d_b) = h^{ab} X^c P_cb
    M = h_inv @ P.T
    fr = base_frame(base, p)
    bar = np.einsum("ia,ab,jb->ji", fr.E, P, fr.E)  # [j, i] = Psi(E_i, E_j)
    return PsiEndomorphism(M, bar)
