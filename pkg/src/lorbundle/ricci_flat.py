"""Spectral Poisson solver on flat tori and the Ricci-flat bundle builder."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .base import TWO_PI, ProductBase, TorusCircle
from .bundle import BundleConfig, gauge_potential, psi_alpha_wedge_eta, wedge_1_1
from .errors import ConfigurationError, SolvabilityError
from .expr import compile_array, compile_scalar, parse_expr

DEFAULT_RESOLUTION = 64
SOLVABILITY_TOL = 1e-10


@dataclass
class TorusGridField:
    """Real values on the uniform periodic grid ``x_j = 2 pi j / N`` of ``T^k``.

    Axis ``a`` of ``values`` is the ``a``-th torus coordinate.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 1:
            raise ValueError("a grid field needs at least one axis")
        for n in self.values.shape:
            if n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {self.values.shape}")

    @property
    def k(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @classmethod
    def from_function(cls, func, k: int, resolution: int = DEFAULT_RESOLUTION) -> "TorusGridField":
        """Sample ``func(x_1, ..., x_k)`` (vectorized) on the grid."""
        return cls(np.broadcast_to(func(*grid_axes(k, resolution)), (resolution,) * k).copy())

    @classmethod
    def from_expr(cls, expr, symbols, resolution: int = DEFAULT_RESOLUTION) -> "TorusGridField":
        fn = compile_scalar(sp.sympify(expr), list(symbols))
        k = len(symbols)
        axes = grid_axes(k, resolution)
        pts = np.stack([a.ravel() for a in axes])
        return cls(np.broadcast_to(fn(pts), (resolution**k,)).reshape((resolution,) * k).copy())

    def coefficients(self) -> np.ndarray:
        """Normalized Fourier coefficients: ``values = sum c_m exp(i m.x)``."""
        return np.fft.fftn(self.values) / self.values.size

    def round_trip_error(self) -> float:
        back = np.fft.ifftn(self.coefficients() * self.values.size).real
        return float(np.max(np.abs(back - self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def _wavenumbers(self):
        return np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in self.shape], indexing="ij")

    def laplacian(self) -> "TorusGridField":
        ks = self._wavenumbers()
        k2 = sum(kk**2 for kk in ks)
        return TorusGridField(np.fft.ifftn(-k2 * np.fft.fftn(self.values)).real)

    def evaluate(self, points) -> np.ndarray:
        """Trigonometric interpolant at arbitrary points of shape ``(M, k)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = self.coefficients().ravel()
        K = np.stack([kk.ravel() for kk in self._wavenumbers()], axis=1)
        # Nyquist coefficients of real data are real, so the real part keeps
        # their cosine form
        return np.real(np.exp(1j * pts @ K.T) @ c)

    def laplacian_at(self, points) -> np.ndarray:
        """Laplacian of the trigonometric interpolant at arbitrary points."""
        ks = self._wavenumbers()
        k2 = sum(kk**2 for kk in ks)
        return TorusGridField(np.fft.ifftn(-k2 * np.fft.fftn(self.values)).real).evaluate(points)

    def to_expr(self, symbols, rel_tol: float = 1e-13) -> sp.Expr:
        """The interpolant as a trigonometric polynomial; tiny modes are dropped."""
        c = self.coefficients()
        scale = max(float(np.max(np.abs(c))), 1e-300)
        ks = self._wavenumbers()
        expr = sp.Integer(0)
        seen = set()
        for idx in np.ndindex(self.shape):
            m = tuple(int(kk[idx]) for kk in ks)
            if m in seen:
                continue
            neg = tuple(-x for x in m)
            seen.add(m)
            seen.add(neg)
            coef = c[idx]
            if abs(coef) <= rel_tol * scale:
                continue
            phase = sum(mi * s for mi, s in zip(m, symbols))
            if all(x == 0 for x in m):
                expr += float(coef.real)
                continue
            nyquist = any(abs(mi) == n // 2 for mi, n in zip(m, self.shape))
            factor = 1.0 if nyquist else 2.0
            re = float(coef.real) if abs(coef.real) > rel_tol * scale else 0.0
            im = float(coef.imag) if abs(coef.imag) > rel_tol * scale else 0.0
            expr += factor * (re * sp.cos(phase) - im * sp.sin(phase))
        return expr

    def to_csv(self, path) -> None:
        """Row-major values; first line is ``# shape: n1,n2,...``."""
        arr = self.values.reshape(self.shape[0], -1)
        with open(path, "w") as fh:
            fh.write("# shape: " + ",".join(map(str, self.shape)) + "\n")
            np.savetxt(fh, arr, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "TorusGridField":
        with open(path) as fh:
            head = fh.readline()
        if not head.startswith("# shape:"):
            raise ValueError(f"{path}: missing shape header")
        shape = tuple(int(s) for s in head.split(":", 1)[1].split(","))
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data.reshape(shape))


def grid_axes(k: int, resolution: int):
    x = np.arange(resolution) * TWO_PI / resolution
    return np.meshgrid(*([x] * k), indexing="ij")


def poisson_solve(rhs: TorusGridField) -> TorusGridField:
    """Zero-mean solution of ``Delta u = rhs`` on the flat torus."""
    mean = rhs.mean()
    if abs(mean) > SOLVABILITY_TOL:
        raise SolvabilityError(f"right-hand side has mean {mean:.3e}; Delta u = rhs is not solvable", mean)
    ks = rhs._wavenumbers()
    k2 = sum(kk**2 for kk in ks)
    hat = np.fft.fftn(rhs.values)
    k2[(0,) * rhs.k] = 1.0
    sol = -hat / k2
    sol[(0,) * rhs.k] = 0.0
    return TorusGridField(np.fft.ifftn(sol).real)


# ------------------------------------------------------------ builder


@dataclass
class RicciFlatBuild:
    config: BundleConfig
    f_B: sp.Expr
    method: str  # "harmonic", "exact", "spectral"
    class_coefficients: np.ndarray  # alpha = sum c_i dx_i + exact
    residual: float  # sup |Delta f_B + 4 div alpha| on the check grid
    grid: TorusGridField | None = None


def _torus_base(base) -> ProductBase:
    if isinstance(base, ProductBase):
        if not all(isinstance(f, TorusCircle) for f in base.factors):
            raise ConfigurationError("the Ricci-flat builder needs a flat torus base B")
        if base.rho != 1:
            raise ConfigurationError("the Ricci-flat builder needs eta = du")
        return base
    if isinstance(base, int):
        names = ["x", "y", "z", "w"][:base] if base <= 4 else [f"x{i + 1}" for i in range(base)]
        return ProductBase([TorusCircle(n) for n in names])
    return ProductBase([TorusCircle(str(n)) for n in base])


def class_coefficients(alpha, symbols, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Constant parts ``c_i`` of ``alpha = sum c_i dx_i + dg`` (grid means)."""
    return np.array([TorusGridField.from_expr(a, symbols, resolution).mean() for a in alpha])


def exact_potential(alpha, symbols) -> sp.Expr:
    """A function ``g`` with ``dg = alpha`` for exact ``alpha``."""
    g = sp.Integer(0)
    for i, s in enumerate(symbols):
        rest = sp.simplify(alpha[i] - sp.diff(g, s))
        g += sp.integrate(rest, s)
    return sp.simplify(g)


def build_ricci_flat_config(base, alpha, resolution: int = DEFAULT_RESOLUTION, method: str = "auto",
                            name: str = "ricci-flat", integrality_tol: float = 1e-8) -> RicciFlatBuild:
    """Ricci-flat bundle over ``B x S^1`` with ``Psi = alpha ^ du`` and ``f = f_B``.

    ``alpha`` lists the components along the torus coordinates of ``B``
    (strings or sympy expressions).  ``method`` is ``"auto"``,
    ``"spectral"`` or ``"exact"``; ``auto`` uses ``f_B = -4 g`` when
    ``alpha = dg`` and the spectral solver otherwise.
    """
    base = _torus_base(base)
    syms = base.base_symbols
    if len(alpha) != len(syms):
        raise ConfigurationError(f"alpha needs {len(syms)} components")
    alpha = [parse_expr(a, syms) if isinstance(a, (str, int, float)) else sp.sympify(a) for a in alpha]
    for a in alpha:
        if a.free_symbols - set(syms):
            raise ConfigurationError("alpha may only depend on the coordinates of B")
    for i, j in itertools.combinations(range(len(syms)), 2):
        if sp.simplify(sp.diff(alpha[j], syms[i]) - sp.diff(alpha[i], syms[j])) != 0:
            raise ConfigurationError("alpha is not closed")
    coeffs = class_coefficients(alpha, syms, resolution)
    periods = TWO_PI * coeffs
    if np.max(np.abs(periods - np.round(periods))) > integrality_tol:
        raise ConfigurationError(f"alpha is not integral: periods {periods}")
    exact = bool(np.all(np.abs(coeffs) <= integrality_tol))
    if method not in ("auto", "spectral", "exact"):
        raise ConfigurationError(f"unknown method {method!r}")
    if method == "exact" and not exact:
        raise ConfigurationError("alpha is not exact; use the spectral solver")

    div = sum(sp.diff(a, s) for a, s in zip(alpha, syms))
    grid = None
    if sp.simplify(div) == 0:
        f_B, used = sp.Integer(0), "harmonic"
    elif exact and method in ("auto", "exact"):
        f_B = -4 * exact_potential(alpha, syms)
        mean = TorusGridField.from_expr(f_B, syms, resolution).mean()
        f_B = f_B - (mean if abs(mean) > 1e-14 else 0)
        used = "exact"
    else:
        rhs = TorusGridField.from_expr(-4 * div, syms, resolution)
        grid = poisson_solve(rhs)
        f_B, used = grid.to_expr(syms), "spectral"

    full_alpha = [sp.Integer(0)] + alpha
    Psi = psi_alpha_wedge_eta(base, full_alpha)
    P = gauge_potential(base, "alpha_wedge_eta", alpha=full_alpha)
    meta = {"alpha": full_alpha, "f_B": f_B, "method": used}
    cfg = BundleConfig(base, Psi, P, f_B, name=name, meta=meta)
    check = compile_scalar(sum(sp.diff(f_B, s, 2) for s in syms) + 4 * div, syms)
    pts = np.stack([a.ravel() for a in grid_axes(len(syms), min(resolution, 32))])
    residual = float(np.max(np.abs(check(pts))))
    return RicciFlatBuild(cfg, f_B, used, coeffs, residual, grid)


def gauge_shift(config: BundleConfig, phi) -> BundleConfig:
    """Shift the connection by ``-2 phi eta`` and ``f`` by ``4 phi``.

    With ``P' = P - 2 phi eta``, ``Psi' = Psi - d(phi) ^ eta`` and
    ``f' = f + 4 phi`` the chart metric is unchanged.
    """
    base = config.base
    phi = parse_expr(phi, base.coords) if isinstance(phi, (str, int, float)) else sp.sympify(phi)
    if phi.free_symbols - set(base.coords):
        raise ConfigurationError("phi must be a function on N")
    dphi = [sp.diff(phi, s) for s in base.coords]
    Psi = config.Psi - wedge_1_1(dphi, base.eta)
    P = [p - 2 * phi * e for p, e in zip(config.P, base.eta)]
    meta = {k: v for k, v in config.meta.items() if k not in ("alpha", "f_B")}
    meta["gauge_shift"] = str(phi)
    return BundleConfig(base, Psi, P, config.f + 4 * phi, name=config.name + "+shift", meta=meta)


def chart_metric_gap(a: BundleConfig, b: BundleConfig, n_points: int = 64, seed: int = 0) -> float:
    """Sup of ``|g_a - g_b|`` over sampled chart points."""
    pts = a.sample_points(n_points, np.random.default_rng(seed))
    ga = compile_array(a.metric_sym, a.coords)
    gb = compile_array(b.metric_sym, b.coords)
    return float(np.max(np.abs(ga(pts.T) - gb(pts.T))))
