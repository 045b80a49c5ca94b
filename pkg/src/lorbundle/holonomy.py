"""Parallel transport along loops, holonomy-algebra sampling, type
classification and the type-4 verifier.

Matrices of endomorphisms are written in the holonomy frame
``(xi, e_1, ..., e_n, Z)``: ``xi`` spans the parallel null line, ``e_i`` are
the lifted orthonormal base vectors and ``Z`` is the null transversal with
``g(xi, Z) = 1``.  In this basis an element of the stabilizer algebra of the
null line reads

    A xi  = a xi
    A e_i = t_i xi + sum_j O_ji e_j
    A Z   = -a Z - sum_i t_i e_i

with the scaling part ``a``, the orthogonal part ``O`` and the translation
part ``t``.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp
from scipy.integrate import quad_vec, solve_ivp
from scipy.linalg import expm, logm

from .base import TWO_PI, christoffel_h
from .bundle import BundleConfig, christoffel_g_numeric, frame_at
from .curvature import riemann_brute_force
from .errors import ConfigurationError, DomainError, ShapeError
from .expr import compile_array

TRANSPORT_RTOL = 1e-11
TRANSPORT_ATOL = 1e-12
RANK_NOISE = 1e-6
RANK_GAP = 1e3
# curvature endomorphisms below this size (frame entries) are round-off
ZERO_FLOOR = 1e-9
COMMUTE_TOL = 1e-10


def holonomy_frame(config: BundleConfig, point) -> np.ndarray:
    """Columns ``(xi, e_1..e_n, Z)`` at a chart point."""
    fr = frame_at(config, point, check=False)
    return np.column_stack([fr.xi] + list(fr.e) + [fr.Z])


# ------------------------------------------------------------ loops


@dataclass
class Loop:
    """Piecewise linear chart path through ``waypoints`` (shape ``(K, d)``).

    Each segment is traversed in unit parameter time.  A loop is closed when
    its end point is its start point, possibly after shifting periodic
    coordinates by whole periods.
    """

    name: str
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if len(self.waypoints) < 2:
            raise ConfigurationError("a loop needs at least two waypoints")

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def segments(self):
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            yield a, b - a

    def reversed(self) -> "Loop":
        return Loop(self.name + "^-1", self.waypoints[::-1].copy())

    def then(self, other: "Loop") -> "Loop":
        """Concatenation: first ``self``, then ``other``."""
        if np.max(np.abs(self.end - other.start)) > 1e-12:
            raise ConfigurationError("loops do not connect")
        return Loop(f"{self.name}*{other.name}", np.vstack([self.waypoints, other.waypoints[1:]]))


def _axis(config: BundleConfig, ref) -> int:
    names = [s.name for s in config.coords]
    if isinstance(ref, (int, np.integer)):
        if not 0 <= ref < config.dim:
            raise ConfigurationError(f"coordinate index {ref} out of range")
        return int(ref)
    ref = str(ref).strip()
    if ref.lstrip("-").isdigit():
        return _axis(config, int(ref))
    if ref not in names:
        raise ConfigurationError(f"unknown coordinate {ref!r}; expected one of {names}")
    return names.index(ref)


def u_circle(config: BundleConfig, point) -> Loop:
    p = np.asarray(point, dtype=float)
    q = p.copy()
    q[0] += TWO_PI
    return Loop("u-circle", [p, q])


def torus_cycle(config: BundleConfig, axis, point) -> Loop:
    c = _axis(config, axis)
    if not ([True, True] + list(config.base.periodic[1:]))[c]:
        raise ConfigurationError(f"coordinate {config.coords[c]} is not periodic")
    p = np.asarray(point, dtype=float)
    q = p.copy()
    q[c] += TWO_PI
    return Loop(f"torus-cycle({config.coords[c]})", [p, q])


def rectangle(config: BundleConfig, i, j, side: float, point) -> Loop:
    a, b = _axis(config, i), _axis(config, j)
    if a == b:
        raise ConfigurationError("rectangle needs two different coordinates")
    p = np.asarray(point, dtype=float)
    ea, eb = np.eye(config.dim)[a] * side, np.eye(config.dim)[b] * side
    return Loop(f"rectangle({config.coords[a]},{config.coords[b]},{side:g})",
                [p, p + ea, p + ea + eb, p + eb, p])


_NAMED = re.compile(r"^\s*([a-z-]+)\s*(?:\((.*)\))?\s*$")


def parse_loop(spec, config: BundleConfig, point) -> Loop:
    """Loop from a descriptor.

    Accepted forms: ``"u-circle"``, ``"torus-cycle(x1)"``,
    ``"rectangle(u,x1,0.1)"`` (coordinates by name or chart index), or a
    mapping ``{"waypoints": [[...], ...], "name": ...}`` of chart points.
    """
    if isinstance(spec, Loop):
        return spec
    if isinstance(spec, dict):
        if "waypoints" not in spec:
            raise ConfigurationError("loop mapping needs 'waypoints'")
        w = np.asarray(spec["waypoints"], dtype=float)
        if w.ndim != 2 or w.shape[1] != config.dim:
            raise ConfigurationError(f"waypoints must have shape (K, {config.dim})")
        return Loop(spec.get("name", "waypoints"), w)
    m = _NAMED.match(str(spec))
    if not m:
        raise ConfigurationError(f"cannot parse loop {spec!r}")
    kind, args = m.group(1), [a.strip() for a in (m.group(2) or "").split(",") if a.strip()]
    if kind == "u-circle" and not args:
        return u_circle(config, point)
    if kind == "torus-cycle" and len(args) == 1:
        return torus_cycle(config, args[0], point)
    if kind == "rectangle" and len(args) == 3:
        return rectangle(config, args[0], args[1], float(args[2]), point)
    raise ConfigurationError(f"cannot parse loop {spec!r}")


# ------------------------------------------------------------ transport


@dataclass
class TransportOperator:
    """Parallel transport around a loop.

    ``frame`` is the matrix in the holonomy frame at the base point
    (``frame[:, j]`` holds the components of the transported ``j``-th frame
    vector); ``screen`` is its ``e_i`` block, ``omega`` the block over the
    torus directions and ``C`` the ``xi`` coefficients of the transported
    ``e_i``.  ``full`` is the chart-basis matrix when computed generically.
    """

    loop: str
    frame: np.ndarray
    screen: np.ndarray
    omega: np.ndarray
    C: np.ndarray
    full: np.ndarray | None = None
    metric_residual: float = 0.0
    method: str = "chart"

    @property
    def orthogonality_residual(self) -> float:
        k = self.omega.shape[0]
        return float(np.max(np.abs(self.omega.T @ self.omega - np.eye(k)))) if k else 0.0

    @property
    def det_residual(self) -> float:
        return float(abs(np.linalg.det(self.omega) - 1.0)) if self.omega.size else 0.0


def _torus_screen_indices(config: BundleConfig) -> list:
    return [i for i, per in enumerate(config.base.periodic[1:]) if per]


def _chart_transport_matrix(config: BundleConfig, loop: Loop, rtol: float, atol: float) -> np.ndarray:
    d = config.dim
    M = np.eye(d)
    for a, delta in loop.segments():
        if not np.any(delta):
            continue

        def rhs(t, y, a=a, delta=delta):
            G = christoffel_g_numeric(config, a + t * delta)
            return (-np.einsum("abc,b,cm->am", G, delta, y.reshape(d, d))).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), M.ravel(), method="DOP853", rtol=rtol, atol=atol)
        if sol.status != 0:
            raise DomainError(f"transport failed on {loop.name}: {sol.message}")
        M = sol.y[:, -1].reshape(d, d)
    return M


def _closing_map(config: BundleConfig, loop: Loop):
    """Differential of the chart transition that brings the loop's end point
    back over its start point, and the image of the end point.

    The image may still differ from the start in the fibre coordinate.
    """
    gap = loop.end - loop.start
    if np.max(np.abs(gap)) <= 1e-12:
        return np.eye(config.dim), loop.end.copy()
    from .geodesics import chart_wrap

    periodic = [True, True] + list(config.base.periodic[1:])
    k = np.round(gap / TWO_PI)
    lattice = all(abs(gap[c] - TWO_PI * k[c]) <= 1e-12 and (k[c] == 0 or periodic[c]) for c in range(config.dim))
    cw = chart_wrap(config) if lattice else None
    if cw is None:
        raise DomainError(f"loop {loop.name} leaves the gauge chart")
    x = loop.end.copy()
    J = np.eye(config.dim)
    for c in cw.axes:
        while k[c] > 0:
            Jc = np.eye(config.dim)
            Jc[1] = cw._dv_row(c, x)
            x[1] += cw._shift[c](x)
            x[c] -= TWO_PI
            k[c] -= 1
            J = Jc @ J
        while k[c] < 0:
            x[c] += TWO_PI
            Jc = np.eye(config.dim)
            Jc[1] = 2 * np.eye(config.dim)[1] - cw._dv_row(c, x)
            x[1] -= cw._shift[c](x)
            k[c] += 1
            J = Jc @ J
    if k[1] != 0:
        x[1] -= TWO_PI * k[1]
    if np.max(np.abs(np.delete(x - loop.start, 1))) > 1e-9:
        raise DomainError(f"loop {loop.name} does not close in the chart")
    return J, x


def _operator_from_frame(config, loop_name, A, full=None, metric_residual=0.0, method="chart"):
    n = config.base.n
    screen = A[1:n + 1, 1:n + 1]
    tor = _torus_screen_indices(config)
    omega = screen[np.ix_(tor, tor)]
    return TransportOperator(loop_name, A, screen, omega, A[0, 1:n + 1].copy(), full, metric_residual, method)


def transport_generic_chart(config: BundleConfig, loop, point=None, rtol: float = TRANSPORT_RTOL,
                            atol: float = TRANSPORT_ATOL, close_fibre: bool = True) -> TransportOperator:
    """Transport by the chart ODE ``X' = -Gamma(gamma', X)``.

    Periodic shifts of the end point are undone through the gauge transition
    of the chart; a remaining fibre offset is closed by a segment along the
    fibre when ``close_fibre`` is set.  Anything else is a
    :class:`DomainError`.
    """
    loop = parse_loop(loop, config, point if point is not None else np.zeros(config.dim))
    J, x_end = _closing_map(config, loop)
    M = J @ _chart_transport_matrix(config, loop, rtol, atol)
    offset = (x_end[1] - loop.start[1] + np.pi) % TWO_PI - np.pi
    if abs(offset) > 1e-12:
        # close along the fibre
        if not close_fibre:
            raise DomainError(f"loop {loop.name} ends {offset:.3e} away along the fibre")
        fib = Loop("fibre", [x_end, x_end - offset * np.eye(config.dim)[1]])
        M = _chart_transport_matrix(config, fib, rtol, atol) @ M
    g = config.chart_metric.g(loop.start)
    res = float(np.max(np.abs(M.T @ g @ M - g)))
    F = holonomy_frame(config, loop.start)
    A = np.linalg.solve(F, M @ F)
    return _operator_from_frame(config, loop.name, A, M, res, "chart")


def _screen_shape(config: BundleConfig) -> None:
    if config.base.rho != 1:
        raise ShapeError("screen transport needs eta = du")
    if not config.fiber_constant:
        raise ShapeError("screen transport needs f constant along the fibres")
    if any(sp.simplify(config.Psi[0, j]) != 0 for j in range(config.base.dim)):
        raise ShapeError("screen transport needs Psi(eta^#, .) = 0")


class _ScreenData:
    def __init__(self, config: BundleConfig):
        _screen_shape(config)
        base = config.base
        N = base.coords
        n = base.n
        h_inv = base.h_inv
        psi = (h_inv * config.Psi.T)[1:, 1:]  # psi(X)^a = h^ab Psi(X, d_b) on B
        self.n = n
        self._psi = compile_array(psi, N)
        self._E = compile_array([[1 / w] for w in base.warps], N)
        # lift of a B-vector X: v-component -P_b X^b
        self._P = compile_array([config.P[b] for b in range(1, n + 1)], N)
        self._dP = compile_array([[sp.diff(config.P[b], s) for s in N] for b in range(1, n + 1)], N)

    def psi(self, q) -> np.ndarray:
        return self._psi(q)

    def E(self, q) -> np.ndarray:
        return self._E(q)[:, 0]


def _screen_data(config: BundleConfig) -> _ScreenData:
    if "_screen_data" not in config.__dict__:
        config.__dict__["_screen_data"] = _ScreenData(config)
    return config.__dict__["_screen_data"]


def _n_of(x):
    return np.concatenate([[x[0]], x[2:]])


def transport_screen_ode(config: BundleConfig, loop, point=None, rtol: float = TRANSPORT_RTOL,
                         atol: float = TRANSPORT_ATOL) -> TransportOperator:
    """Screen transport ``nabla^h_t V = -u' psi(V)`` along the projected loop.

    The ``xi`` coefficients ``C`` come from quadrature of
    ``-g(nabla_t V^*, Z)`` along the chart path; the ``Z`` column of the
    frame matrix is fixed by metricity.
    """
    loop = parse_loop(loop, config, point if point is not None else np.zeros(config.dim))
    sd = _screen_data(config)
    n = sd.n
    d = config.dim
    V = np.diag(sd.E(_n_of(loop.start)))  # chart components of E_i(0) as columns
    b = np.zeros(n)
    for a, delta in loop.segments():
        if not np.any(delta):
            continue
        dq = _n_of(delta)

        def rhs(t, y, a=a, delta=delta, dq=dq):
            x = a + t * delta
            q = _n_of(x)
            Vm = y[:n * n].reshape(n, n)
            Gh = christoffel_h(config.base, q)[1:, 1:, 1:]
            Vd = -np.einsum("abc,b,cm->am", Gh, dq[1:], Vm) - dq[0] * sd.psi(q) @ Vm
            # chart components of the lifted columns and their t-derivative
            L = np.zeros((d, n))
            L[2:, :] = Vm
            L[1, :] = -sd._P(q) @ Vm
            Ld = np.zeros((d, n))
            Ld[2:, :] = Vd
            Ld[1, :] = -(np.einsum("bs,s->b", sd._dP(q), dq) @ Vm) - sd._P(q) @ Vd
            G = christoffel_g_numeric(config, x)
            cov = Ld + np.einsum("abc,b,cm->am", G, delta, L)
            Z = frame_at(config, x, check=False).Z
            bd = -(Z @ config.chart_metric.g(x) @ cov)
            return np.concatenate([Vd.ravel(), bd])

        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([V.ravel(), b]), method="DOP853", rtol=rtol, atol=atol)
        if sol.status != 0:
            raise DomainError(f"screen transport failed on {loop.name}: {sol.message}")
        V = sol.y[:n * n, -1].reshape(n, n)
        b = sol.y[n * n:, -1]
    S = V / sd.E(_n_of(loop.end))[:, None]
    A = np.zeros((n + 2, n + 2))
    A[0, 0] = 1.0
    A[0, 1:n + 1] = b
    A[1:n + 1, 1:n + 1] = S
    w = -S @ b
    A[0, n + 1] = -0.5 * float(b @ b)
    A[1:n + 1, n + 1] = w
    A[n + 1, n + 1] = 1.0
    return _operator_from_frame(config, loop.name, A, None, 0.0, "screen")


@dataclass
class CommutingReport:
    omega: np.ndarray
    omega_ode: np.ndarray
    shortcut_used: bool
    commutator_norm: float
    ode_gap: float
    commutation_residual: float
    message: str = ""


def _torus_psi(config: BundleConfig, x) -> np.ndarray:
    tor = _torus_screen_indices(config)
    return _screen_data(config).psi(_n_of(x))[np.ix_(tor, tor)]


def commuting_exponential(config: BundleConfig, loop, point=None, n_samples: int = 33,
                          tol: float = COMMUTE_TOL) -> CommutingReport:
    """``Omega = exp(int A)`` with ``A = -u' psi(delta)`` when the sampled
    values of ``psi`` along the loop commute; otherwise the ODE result.

    The torus directions are assumed flat, as in the block constructions.
    """
    loop = parse_loop(loop, config, point if point is not None else np.zeros(config.dim))
    ode = transport_screen_ode(config, loop).omega
    samples = []
    for a, delta in loop.segments():
        for t in np.linspace(0.0, 1.0, n_samples):
            samples.append(_torus_psi(config, a + t * delta))
    comm = 0.0
    for X, Y in itertools.combinations(samples, 2):
        comm = max(comm, float(np.max(np.abs(X @ Y - Y @ X))) if X.size else 0.0)
    psi_end = _torus_psi(config, loop.end)
    if comm > tol:
        res = float(np.max(np.abs(psi_end @ ode - ode @ psi_end))) if ode.size else 0.0
        return CommutingReport(ode, ode, False, comm, 0.0, res,
                               f"shortcut refused: sampled commutator {comm:.3e} exceeds {tol:.1e}")
    total = np.zeros_like(ode)
    for a, delta in loop.segments():
        if delta[0] == 0:
            continue
        integral, _ = quad_vec(lambda t, a=a, delta=delta: -delta[0] * _torus_psi(config, a + t * delta),
                               0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        total += integral
    omega = expm(total)
    gap = float(np.max(np.abs(omega - ode))) if ode.size else 0.0
    res = float(np.max(np.abs(psi_end @ omega - omega @ psi_end))) if ode.size else 0.0
    return CommutingReport(omega, ode, True, comm, gap, res, "")


# ------------------------------------------------------------ algebra sampling


def algebra_coordinates(A: np.ndarray, n: int) -> np.ndarray:
    """``(a, O_ij for i < j, t_1..t_n)`` of a frame-basis matrix."""
    iu = np.triu_indices(n, 1)
    return np.concatenate([[A[0, 0]], A[1:n + 1, 1:n + 1][iu], A[0, 1:n + 1]])


def stabilizer_residual(A: np.ndarray, n: int) -> float:
    """Distance of ``A`` from the stabilizer algebra of the null line (relative)."""
    scale = max(float(np.max(np.abs(A))), 1e-300)
    O = A[1:n + 1, 1:n + 1]
    t = A[0, 1:n + 1]
    res = [np.abs(A[1:, 0]), np.abs(O + O.T), np.abs(A[n + 1, n + 1] + A[0, 0]),
           np.abs(A[1:n + 1, n + 1] + t), np.abs(A[n + 1, 1:n + 1]), np.abs(A[0, n + 1])]
    return float(max(np.max(r) for r in res)) / scale


def numerical_rank(M: np.ndarray, noise: float = RANK_NOISE, gap: float = RANK_GAP,
                   scale: float | None = None) -> tuple[int, bool, np.ndarray]:
    """Rank with a noise floor relative to ``scale`` (the largest singular
    value by default) and whether the singular-value gap is clear."""
    if M.size == 0:
        return 0, True, np.zeros(0)
    s = np.linalg.svd(M, compute_uv=False)
    scale = s[0] if scale is None else scale
    if s[0] <= 1e-300 or s[0] <= noise * scale:
        return 0, True, s
    rel = s / scale
    r = int(np.sum(rel > noise))
    if r == len(s):
        return r, True, s
    below = max(rel[r], 1e-16)
    return r, bool(r == 0 or rel[r - 1] / below >= gap), s


def _span_basis(V: np.ndarray, noise: float = RANK_NOISE) -> tuple[np.ndarray, bool, np.ndarray]:
    if len(V) == 0:
        return np.zeros((0, V.shape[1] if V.ndim == 2 else 0)), True, np.zeros(0)
    scale = np.max(np.abs(V))
    if scale <= 1e-300:
        return np.zeros((0, V.shape[1])), True, np.zeros(0)
    r, clear, s = numerical_rank(V / scale, noise)
    _, _, Vt = np.linalg.svd(V / scale, full_matrices=False)
    return Vt[:r], clear, s


@dataclass
class HolonomySummary:
    """Sampled holonomy algebra in the frame basis at ``base_point``."""

    base_point: list
    n: int
    dimension: int
    orthogonal_dim: int
    scaling: bool
    pure_scaling: bool
    translations_dim: int
    translation_projection_dim: int
    holonomy_type: str
    m: int
    k: int
    stabilizer_residual: float
    singular_values: list
    rank_clear: bool
    n_elements: int
    notes: list = field(default_factory=list)
    generator_translation_dim: int | None = None
    basis: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("basis")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=float)


def curvature_endomorphisms(config: BundleConfig, point) -> list[np.ndarray]:
    """Chart endomorphisms ``R(d_a, d_b)`` for ``a < b``."""
    p = np.asarray(point, dtype=float)
    Rm = riemann_brute_force(config, p)
    ginv = config.chart_metric.inverse(p)
    d = config.dim
    # Rm[x, y, z, w] = g(R(d_x, d_y) d_z, d_w)  ->  End[a, z] = g^{aw} Rm[x, y, z, w]
    return [np.einsum("aw,zw->az", ginv, Rm[x, y]) for x, y in itertools.combinations(range(d), 2)]


def sample_holonomy_algebra(config: BundleConfig, n_points: int = 8, n_planes: int | None = None, seed: int = 0,
                            base_point=None, rtol: float = 1e-10, atol: float = 1e-12,
                            generators: bool = False) -> HolonomySummary:
    """Span of curvature endomorphisms transported to the base point along
    straight chart segments, decomposed in the holonomy frame, and the
    resulting type.

    ``n_planes`` limits the coordinate planes used per point (all by
    default).  With ``generators`` the translation rank of the transports
    around the non-contractible generator loops is added as a diagnostic.
    """
    rng = np.random.default_rng(seed)
    pts = config.sample_points(n_points + 1, rng)
    x0 = np.asarray(base_point, dtype=float) if base_point is not None else pts[0]
    n = config.base.n
    F = holonomy_frame(config, x0)
    Finv = np.linalg.inv(F)
    elems = []
    stab = 0.0
    for q in [x0] + list(pts[1:]):
        M = np.eye(config.dim) if np.allclose(q, x0) else _chart_transport_matrix(
            config, Loop("radial", [x0, q]), rtol, atol)
        Minv = np.linalg.inv(M)
        ends = curvature_endomorphisms(config, q)
        if n_planes is not None and n_planes < len(ends):
            ends = [ends[i] for i in rng.choice(len(ends), n_planes, replace=False)]
        for E in ends:
            A = Finv @ Minv @ E @ M @ F
            if np.max(np.abs(A)) > 1e-13:
                stab = max(stab, stabilizer_residual(A, n))
            elems.append(algebra_coordinates(A, n))
    elems = [e for e in elems if np.max(np.abs(e)) > ZERO_FLOOR]
    D = 1 + n * (n - 1) // 2 + n
    summary = classify_algebra(np.array(elems).reshape(len(elems), D), n, x0, stab)
    if generators:
        summary.generator_translation_dim = generator_translation_dim(config, x0)
    return summary


def generator_transports(config: BundleConfig, point) -> list[TransportOperator]:
    """Transports around the u-circle and the torus cycles through ``point``."""
    names = ["u-circle"] + [f"torus-cycle({s.name})" for s, per in
                            zip(config.base.base_symbols, config.base.periodic[1:]) if per]
    return [transport_generic_chart(config, nm, point) for nm in names]


def generator_translation_dim(config: BundleConfig, point) -> int:
    """Rank of the translation parts of the logarithms of generator transports.

    These loops are not contractible; their transports belong to the full
    holonomy group, not to the restricted algebra.
    """
    n = config.base.n
    rows = []
    for op in generator_transports(config, point):
        L = np.real(logm(op.frame))
        rows.append(L[0, 1:n + 1])
    rows = np.array(rows)
    if np.max(np.abs(rows)) <= ZERO_FLOOR:
        return 0
    return numerical_rank(rows)[0]


def classify_algebra(vectors: np.ndarray, n: int, base_point=None, stab: float = 0.0) -> HolonomySummary:
    """Type of the span of algebra coordinate vectors (see :func:`algebra_coordinates`)."""
    D = 1 + n * (n - 1) // 2 + n
    vectors = np.asarray(vectors, dtype=float).reshape(-1, D)
    B, clear, s = _span_basis(vectors)
    r = len(B)
    sc = [0]
    orth = list(range(1, 1 + n * (n - 1) // 2))
    tr = list(range(1 + n * (n - 1) // 2, D))
    notes = []

    def rank(cols):
        if r == 0 or not cols:
            return 0
        k, ok, _ = numerical_rank(B[:, cols], scale=1.0)  # rows of B are orthonormal
        if not ok:
            notes.append(f"unclear rank for columns {cols[0]}..{cols[-1]}")
        return k

    orth_dim = rank(orth)
    scaling = rank(sc) > 0
    trans_dim = r - rank(sc + orth)  # dim(S intersect translations)
    scale_trans_dim = r - rank(orth)  # dim(S intersect (scaling + translations))
    pure_scaling = scale_trans_dim > trans_dim
    proj = rank(tr)
    clear = clear and not notes
    m = k = 0
    if r == 0:
        typ = "trivial"
    elif trans_dim == n:
        typ = "2" if not scaling else ("1" if pure_scaling else "3")
    elif not scaling and orth_dim > 0 and proj == n and 0 < trans_dim:
        typ = "4"
        k, m = trans_dim, n - trans_dim
    else:
        typ = "decomposable"
        notes.append("span does not act indecomposably (translation part is not all of R^n)")
    if not clear:
        typ = "indeterminate"
    bp = [float(x) for x in base_point] if base_point is not None else []
    return HolonomySummary(bp, n, r, orth_dim, scaling, pure_scaling, trans_dim, proj, typ, m, k,
                           float(stab), [float(x) for x in s[:min(len(s), 2 * D)]], bool(clear),
                           int(len(vectors)), notes, None, B)


# ------------------------------------------------------------ type-4 verification


@dataclass
class ConditionResult:
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)


@dataclass
class Type4Report:
    conditions: list
    n_points: int
    n_paths: int
    sampling_note: str

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    def failures(self) -> list:
        return [c for c in self.conditions if not c.ok]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "n_points": self.n_points, "n_paths": self.n_paths,
                "sampling_note": self.sampling_note,
                "conditions": [{"name": c.name, "residual": c.residual, "tolerance": c.tolerance, "ok": c.ok,
                                "detail": c.detail} for c in self.conditions]}


class _Type4Data:
    def __init__(self, config: BundleConfig, warp_weighted: bool = False):
        self.warp_weighted = warp_weighted
        meta = config.meta.get("type4")
        if meta is None:
            raise ShapeError("config carries no type-4 metadata (build it with build_type4)")
        base = config.base
        names = [s.name for s in base.base_symbols]
        self.config = config
        self.n = base.n
        self.y_idx = [names.index(y) for y in meta["y_names"]]
        self.x_idx = [names.index(x) for x in meta["x_names"]]
        self.Lambda = [tuple(ij) for ij in meta["Lambda"]]
        from .presets import lambda_index

        self.lam = {ij: lambda_index(*ij) for ij in self.Lambda}
        self._warps = compile_array(list(base.warps), base.coords)

    def warps(self, x) -> np.ndarray:
        return np.atleast_1d(self._warps(_n_of(x)))

    def phi_pair(self, A_S1: np.ndarray, x) -> np.ndarray:
        """``g(phi(A), s_l)`` for ``l = 1..m`` with ``A`` the torus block in
        the orthonormal frame (``A[j, i] = g(A E_i, E_j)``).

        ``phi(A) = sum_Lambda A_ij s_lambda`` with the unit vectors
        ``s_l = d_l / phi_l``.  The warp weighting ``phi_l(y_l) d_l`` pairs
        to ``A_ij phi_l^2`` instead and is kept for comparison.
        """
        w = self.warps(x)
        out = np.zeros(len(self.y_idx))
        for (i, j), lam in self.lam.items():
            weight = w[self.y_idx[lam - 1]] ** 2 if self.warp_weighted else 1.0
            out[lam - 1] += A_S1[j - 1, i - 1] * weight
        return out


def _frame_curvature(config: BundleConfig, x):
    """Frame vectors, their matrix and ``R(X, Y)`` as frame-basis matrices for
    frame vectors ``X, Y`` (keys are labels)."""
    fr = frame_at(config, x, check=False)
    F = np.column_stack([fr.xi] + list(fr.e) + [fr.Z])
    Finv = np.linalg.inv(F)
    Rm = riemann_brute_force(config, x)
    ginv = config.chart_metric.inverse(x)
    vecs = {"e+": fr.e_plus, "xi": fr.xi, "Z": fr.Z}
    for i, e in enumerate(fr.e):
        vecs[i] = e

    def R(X, Y):
        E = np.einsum("aw,xyzw,x,y->az", ginv, Rm, vecs[X], vecs[Y])
        return Finv @ E @ F

    return vecs, F, Finv, R


def type4_verify(config: BundleConfig, n_points: int = 6, n_paths: int = 20, seed: int = 0,
                 phi_warp_weighted: bool = False) -> Type4Report:
    """Sampled check of the type-4 criterion.

    The screen curvature ``R^S(X, Y)`` is the screen block of ``R(X, Y)`` in
    the holonomy frame (``xi`` is parallel, so the projected connection has
    exactly this curvature); ``R^ = R - R^S``.  ``phi_warp_weighted`` switches the
    homomorphism to the weighting ``phi_l(y_l) d_l`` (see ``_Type4Data.phi_pair``).
    """
    t4 = _Type4Data(config, phi_warp_weighted)
    n = t4.n
    S1 = [1 + i for i in t4.x_idx]
    S2 = [1 + i for i in t4.y_idx]
    scr = list(range(1, n + 1))
    rng = np.random.default_rng(seed)
    pts = config.sample_points(n_points, rng)
    r_i = r_iia = r_iia_phi = r_iib0 = r_iib = r_form = 0.0
    for x in pts:
        vecs, F, Finv, R = _frame_curvature(config, x)
        labels = list(vecs)
        for X, Y in itertools.combinations(labels, 2):
            RS = R(X, Y)[np.ix_(scr, scr)]
            r_i = max(r_i, float(np.max(np.abs(RS[np.ix_([s - 1 for s in S2], [s - 1 for s in S1])]))),
                      float(np.max(np.abs(RS[:, [s - 1 for s in S2]]))))
            if X in range(n) and Y in range(n):
                r_iia = max(r_iia, float(np.max(np.abs(RS))))
                A1 = RS[np.ix_([s - 1 for s in S1], [s - 1 for s in S1])]
                r_iia_phi = max(r_iia_phi, float(np.max(np.abs(t4.phi_pair(A1, x)))))
        r_form = max(r_form, _screen_formula_residual(config, t4, x, R))
        for a in t4.y_idx:
            Ra = R("e+", a)
            for b in S2:
                v = Ra[:, b].copy()
                v[scr] = 0.0
                r_iib0 = max(r_iib0, float(np.max(np.abs(v))))
        for a in t4.x_idx:
            Ra = R("e+", a)
            A1 = Ra[np.ix_(S1, S1)]
            pair = t4.phi_pair(A1, x)
            for ell, b in enumerate(S2):
                lhs = Ra[:, b].copy()
                lhs[scr] = 0.0
                rhs = np.zeros(n + 2)
                rhs[0] = pair[ell]
                r_iib = max(r_iib, float(np.max(np.abs(lhs - rhs))))
    r_iic, r_pr9 = _condition_iic(config, t4, rng, n_paths)
    conds = [
        ConditionResult("(i) R^S preserves S1 and kills S2", r_i, 1e-8),
        ConditionResult("screen curvature = nabla psi ^ eta", r_form, 1e-8),
        ConditionResult("(ii)(a) R^S(S, S) = 0", r_iia, 1e-8),
        ConditionResult("(ii)(a) phi(R^S(S, S)) = 0", r_iia_phi, 1e-8),
        ConditionResult("(ii)(b) R^(e+, S2) S2 = 0", r_iib0, 1e-7),
        ConditionResult("(ii)(b) R^(e+, X) Y = g(phi(R^S(e+, X)), Y) xi", r_iib, 1e-7),
        ConditionResult("(ii)(c) transport compatibility", r_iic, 1e-6, f"{n_paths} sampled paths"),
        ConditionResult("psi(delta(1)) Omega = Omega psi(delta(1))", r_pr9, 1e-8, f"{n_paths} sampled paths"),
    ]
    note = (f"{n_points} sample points for the pointwise conditions and {n_paths} random two-segment chart "
            "paths for the transport condition; a sampled certificate, not a proof")
    return Type4Report(conds, n_points, n_paths, note)


def _screen_formula_residual(config, t4, x, R) -> float:
    """Compare the screen curvature with ``(nabla_X psi) eta(Y) - (nabla_Y psi) eta(X)``."""
    sd = _screen_data(config)
    n = t4.n
    q = _n_of(x)
    h = 1e-5
    out = 0.0
    fr = frame_at(config, x, check=False)
    vecs = {"e+": fr.e_plus, "xi": fr.xi, "Z": fr.Z}
    for i, e in enumerate(fr.e):
        vecs[i] = e
    eta = np.zeros(config.dim)
    eta[0] = 1.0
    tor = [i for i in t4.x_idx]
    for X, Y in itertools.combinations(list(vecs), 2):
        RS = R(X, Y)[1:n + 1, 1:n + 1]

        def dpsi(vec):
            # derivative of the orthonormal-frame psi along the N-projection of vec (flat torus)
            qv = _n_of(vec)
            qp, qm = q + h * qv, q - h * qv
            mp = np.diag(1 / sd.E(qp)) @ sd.psi(qp) @ np.diag(sd.E(qp))
            mm = np.diag(1 / sd.E(qm)) @ sd.psi(qm) @ np.diag(sd.E(qm))
            return (mp - mm) / (2 * h)

        form = dpsi(vecs[X]) * (eta @ vecs[Y]) - dpsi(vecs[Y]) * (eta @ vecs[X])
        out = max(out, float(np.max(np.abs(RS - form)[np.ix_(tor, tor)])))
    return out


def _condition_iic(config, t4, rng, n_paths):
    """Transport compatibility on random paths from a fixed base point."""
    n = t4.n
    S1 = [1 + i for i in t4.x_idx]
    S2 = [1 + i for i in t4.y_idx]
    scr = list(range(1, n + 1))
    pts = config.sample_points(2 * n_paths + 1, rng)
    x = pts[0]
    Fx = holonomy_frame(config, x)
    Fx_inv = np.linalg.inv(Fx)
    worst = worst_pr9 = 0.0
    for p in range(n_paths):
        w, y = pts[1 + 2 * p], pts[2 + 2 * p]
        loop = Loop(f"path{p}", [x, w, y])
        P = _chart_transport_matrix(config, loop, TRANSPORT_RTOL, TRANSPORT_ATOL)
        Pinv = np.linalg.inv(P)
        vecs, Fy, Fy_inv, R = _frame_curvature(config, y)
        g_y = config.chart_metric.g(y)
        for a in t4.x_idx:
            blk = np.zeros((n + 2, n + 2))
            blk[np.ix_(scr, scr)] = R("e+", a)[np.ix_(scr, scr)]
            RSy = Fy @ blk @ Fy_inv  # chart endomorphism at y
            lhs_pair = t4.phi_pair(blk[np.ix_(S1, S1)], y)  # g(phi_y(R^S), s_l(y))
            Bx = (Fx_inv @ Pinv @ RSy @ P @ Fx)[np.ix_(S1, S1)]
            rhs_pair = t4.phi_pair(Bx, x)
            for ell, b in enumerate(S2):
                # phi_y(R^S) as a chart vector: sum_l pair_l / w_l * s_l(y); s_l = e_{y_l}
                vec = np.zeros(config.dim)
                for l2, b2 in enumerate(S2):
                    vec += lhs_pair[l2] * Fy[:, b2]
                PY = P @ Fx[:, b]
                lhs = float(vec @ g_y @ PY)
                worst = max(worst, abs(lhs - rhs_pair[ell]))
        com = commuting_exponential(config, loop, n_samples=9)
        worst_pr9 = max(worst_pr9, com.commutation_residual)
    return worst, worst_pr9


# ------------------------------------------------------------ xi recurrence


@dataclass
class XiRecurrence:
    parallel: bool
    sup_dv_f: float
    recurrence_samples: list
    formula_residual: float
    recurrence_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def xi_recurrence_report(config: BundleConfig, n_points: int = 64, seed: int = 0) -> XiRecurrence:
    """``nabla xi = theta (x) xi`` sampled from the chart connection and compared
    with ``theta = -1/2 xi(f) pi^* eta``."""
    rng = np.random.default_rng(seed)
    pts = config.sample_points(n_points, rng)
    dfv = compile_array([sp.diff(config.f, config.v)], config.coords)
    sup = 0.0
    samples = []
    form_res = rec_res = 0.0
    for x in pts:
        G = christoffel_g_numeric(config, x)
        nab = -G[:, :, 1]  # [c, a] = (nabla_a xi)^c with xi = -d_v
        theta = -nab[1]  # coefficient along xi = -d_v
        other = np.delete(nab, 1, axis=0)
        rec_res = max(rec_res, float(np.max(np.abs(other))))
        xif = -float(dfv(x)[0])
        sup = max(sup, abs(xif))
        eta = np.zeros(config.dim)
        eta[0] = config.base._rho(_n_of(x))
        form_res = max(form_res, float(np.max(np.abs(theta - (-0.5 * xif) * eta))))
        if len(samples) < 4:
            samples.append({"point": [float(a) for a in x], "theta": [float(a) for a in theta]})
    return XiRecurrence(bool(sup <= 1e-10), sup, samples, form_res, rec_res)
