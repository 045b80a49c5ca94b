"""Geodesics of the chart metric, the structured type-4 reduction and
completeness probes.

The gauge potentials (``2 c x`` terms, ``u``-linear potentials) are not
periodic, so periodic coordinates are reduced through the gauge transition
of :class:`ChartWrap`.  Trajectories report continuous unwrapped positions
alongside the wrapped chart states.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .base import TWO_PI
from .bundle import BundleConfig, estimate_killing_constant, killing_candidate
from .errors import ConsistencyError, ShapeError
from .expr import compile_array, compile_scalar

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
# running sups of |(L_K g)(xd, xd)| growing like t^p with p above this count as unbounded
LINEAR_GROWTH_MAX = 1.25
# chart velocities beyond this end the integration (finite-time blow-up)
VELOCITY_BLOWUP = 1e6


# ------------------------------------------------------------ compiled system


class GeodesicSystem:
    """Vectorized geodesic right-hand side ``xdd = -Gamma(xd, xd)``."""

    def __init__(self, config: BundleConfig):
        self.config = config
        X = config.coords
        d = config.dim
        V = sp.symbols(f"vel0:{d}", real=True)
        G, Gi = config.metric_sym, config.metric_inv_sym
        # lowered: Gamma_{k i j} xd^i xd^j = (d_j g_ki - 1/2 d_k g_ij) xd^i xd^j
        low = []
        for k in range(d):
            s = 0
            for i in range(d):
                for j in range(d):
                    term = sp.diff(G[k, i], X[j]) - sp.diff(G[i, j], X[k]) / 2
                    if term != 0:
                        s += term * V[i] * V[j]
            low.append(s)
        acc = [-sum(Gi[a, k] * low[k] for k in range(d) if low[k] != 0 and Gi[a, k] != 0) for a in range(d)]
        self.d = d
        self._acc = compile_array(acc, list(X) + list(V))
        energy = sum(G[i, j] * V[i] * V[j] for i in range(d) for j in range(d))
        self._energy = compile_scalar(energy, list(X) + list(V))

    def acceleration(self, x, xd) -> np.ndarray:
        return self._acc(np.concatenate([x, xd], axis=0))

    def energy(self, x, xd) -> np.ndarray:
        return self._energy(np.concatenate([x, xd], axis=0))

    def rhs(self, t, y, n_batch: int):
        d = self.d
        Y = y.reshape(2 * d, n_batch)
        x, xd = Y[:d], Y[d:]
        out = np.empty_like(Y)
        out[:d] = xd
        out[d:] = self.acceleration(x, xd)
        return out.ravel()


def geodesic_system(config: BundleConfig) -> GeodesicSystem:
    cached = config.__dict__.get("_geodesic_system")
    if cached is None:
        cached = GeodesicSystem(config)
        config.__dict__["_geodesic_system"] = cached
    return cached


# ------------------------------------------------------------ trajectories


@dataclass
class GeodesicState:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    energy: float


@dataclass
class GeodesicTrajectory:
    """Sampled geodesic in unwrapped chart coordinates ``(u, v, b...)``."""

    t: np.ndarray
    position: np.ndarray  # (M, d)
    velocity: np.ndarray  # (M, d)
    energy: np.ndarray  # (M,)
    periodic: list
    status: int = 0
    message: str = ""
    underflow: bool = False
    blowup: bool = False
    dense: object = field(default=None, repr=False)
    chart_position: np.ndarray | None = field(default=None, repr=False)
    chart_velocity: np.ndarray | None = field(default=None, repr=False)
    winding: np.ndarray | None = field(default=None, repr=False)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def state(self, k: int = -1) -> GeodesicState:
        return GeodesicState(float(self.t[k]), self.position[k], self.velocity[k], float(self.energy[k]))

    def wrapped(self):
        """Positions with periodic coordinates reduced to ``[0, 2 pi)`` and
        the integer winding counts that were removed.

        For wrapped integrations these are the chart states actually
        integrated (the fibre coordinate carries the gauge transitions).
        """
        if self.chart_position is not None:
            return self.chart_position.copy(), self.winding.copy()
        pos = self.position.copy()
        winding = np.zeros_like(pos, dtype=int)
        for j, per in enumerate(self.periodic):
            if per:
                winding[:, j] = np.floor(pos[:, j] / TWO_PI).astype(int)
                pos[:, j] -= TWO_PI * winding[:, j]
        return pos, winding

    def to_csv(self, path, names=None) -> None:
        d = self.position.shape[1]
        names = names or [f"x{i}" for i in range(d)]
        wrapped, winding = self.wrapped()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + names + [f"d{n}" for n in names] + [f"{n}_wrapped" for n in names]
                       + [f"{n}_winding" for n in names] + ["energy"])
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k]))] + [repr(float(a)) for a in self.position[k]]
                           + [repr(float(a)) for a in self.velocity[k]]
                           + [repr(float(a)) for a in wrapped[k]] + [int(a) for a in winding[k]]
                           + [repr(float(self.energy[k]))])


def _periodic_flags(config: BundleConfig) -> list:
    return [True, True] + list(config.base.periodic[1:])


def _is_underflow(sol) -> bool:
    return sol.status == -1 and "step size" in (sol.message or "").lower()


def _blowup_event(d: int, N: int):
    def event(t, y, *args):
        return VELOCITY_BLOWUP - np.max(np.abs(y[d * N:2 * d * N]))

    event.terminal = True
    event.direction = -1
    return event


def _blew_up(sol) -> bool:
    return sol.status == 1 and sol.t_events is not None and len(sol.t_events[0]) > 0


def _exact_primitive(omega, syms) -> sp.Expr:
    """Primitive of an exact 1-form by integrating along coordinate axes."""
    s = sp.Integer(0)
    t = sp.Dummy("t", real=True)
    for i, xi in enumerate(syms):
        comp = omega[i].subs({syms[j]: 0 for j in range(i + 1, len(syms))})
        if comp != 0:
            s += sp.integrate(comp.subs(xi, t), (t, 0, xi))
    return sp.simplify(s)


class ChartWrap:
    """Gauge transitions that bring periodic chart coordinates back to ``[0, 2 pi)``.

    Shifting a periodic coordinate by one period changes the gauge potential
    by an exact form ``dP_shift = P(x) - P(x - 2 pi e_j) = ds_j``; the chart
    map ``x -> x - 2 pi e_j, v -> v + s_j(x)`` is then an isometry of the
    chart metric.  The isometry property is checked numerically on
    construction.
    """

    def __init__(self, config: BundleConfig, n_check: int = 16, tol: float = 1e-9):
        X = config.coords
        N = [config.base.u] + list(config.base.base_symbols)
        chart_idx = [0] + list(range(2, config.dim))
        per = [True] + list(config.base.periodic[1:])
        self.config = config
        self.d = config.dim
        self.axes = [c for c, p in zip(chart_idx, per) if p]
        self._P = compile_array(list(config.P), X)
        self._shift = {}
        self._dshift = {}
        for c in self.axes:
            sym = X[c]
            dP = [sp.expand(p - p.subs(sym, sym - 2 * sp.pi)) for p in config.P]
            if any(q.has(config.v) for q in dP):
                raise ConsistencyError("gauge potential depends on the fibre coordinate")
            s_c = _exact_primitive(dP, N)
            self._shift[c] = compile_scalar(s_c, X)
            self._dshift[c] = compile_array(dP, X)
        self._check(n_check, tol)

    def _dv_row(self, c, x):
        """``d(v') / d(chart)`` of the one-period map along axis ``c`` at ``x``."""
        dP = self._dshift[c](x)
        row = np.zeros(self.d)
        row[0] = dP[0]
        row[2:] = dP[1:]
        row[1] = 1.0
        return row

    def _check(self, n_check, tol):
        cm = self.config.chart_metric
        rng = np.random.default_rng(0)
        pts = self.config.sample_points(n_check, rng)
        for c in self.axes:
            for x in pts:
                x = x.copy()
                x[c] += TWO_PI
                J = np.eye(self.d)
                J[1] = self._dv_row(c, x)
                y = x.copy()
                y[c] -= TWO_PI
                y[1] += self._shift[c](x)
                gap = np.max(np.abs(cm.g(x) - J.T @ cm.g(y) @ J))
                if not np.isfinite(gap) or gap > tol * (1 + np.max(np.abs(cm.g(x)))):
                    raise ConsistencyError(f"chart metric is not invariant under the period shift of axis {c}"
                                           f" (gap {gap:.3e})")

    def reduce(self, x, xd):
        """Wrap one state in place; return the winding increments."""
        wind = np.zeros(self.d, dtype=int)
        for c in self.axes:
            while x[c] >= TWO_PI:
                x[1] += self._shift[c](x)
                xd[1] += self._dshift_dot(c, x, xd)
                x[c] -= TWO_PI
                wind[c] += 1
            while x[c] < 0.0:
                x[c] += TWO_PI
                x[1] -= self._shift[c](x)
                xd[1] -= self._dshift_dot(c, x, xd)
                wind[c] -= 1
        k = np.floor(x[1] / TWO_PI)
        x[1] -= TWO_PI * k
        wind[1] += int(k)
        return wind

    def _dshift_dot(self, c, x, xd):
        dP = self._dshift[c](x)
        return float(dP[0] * xd[0] + np.dot(dP[1:], xd[2:]))

    def potential(self, x) -> np.ndarray:
        """``P`` in chart form (``u``, base components) at points ``(d, M)``."""
        return self._P(x)


def chart_wrap(config: BundleConfig):
    """Cached :class:`ChartWrap`, or ``None`` when the chart does not admit one."""
    if "_chart_wrap" not in config.__dict__:
        try:
            config.__dict__["_chart_wrap"] = ChartWrap(config)
        except (ConsistencyError, NotImplementedError, ValueError, TypeError):
            config.__dict__["_chart_wrap"] = None
    return config.__dict__["_chart_wrap"]


def _p_dot(P, xd):
    return P[0] * xd[0] + np.sum(P[1:] * xd[2:], axis=0)


def integrate_batch(config: BundleConfig, x0, v0, T: float, rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL, n_out: int = 201, method: str = "DOP853",
                    dense: bool = False, wrap: str | bool = "auto") -> list[GeodesicTrajectory]:
    """Integrate several geodesics as one stacked ODE (shared step sizes).

    ``x0`` and ``v0`` have shape ``(N, d)``.  The solver's error norm is an
    RMS over all components, so the tolerances are divided by the square
    root of the component count; every component is then held to them.

    With wrapping on, the solve is restarted at every output time after
    reducing periodic coordinates through :class:`ChartWrap`.  An extra
    state component integrates the fibre coordinate of the unwrapped chart,
    so the returned positions are continuous unwrapped coordinates; the
    wrapped chart states are kept in ``chart_position``.
    """
    sysm = geodesic_system(config)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    N, d = x0.shape
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(v0))):
        raise ValueError("initial data must be finite")
    cw = chart_wrap(config) if wrap else None
    if wrap is True and cw is None:
        raise ConsistencyError("this chart does not admit period-shift wrapping")
    t_eval = np.linspace(0.0, T, n_out)
    shrink = 1.0 / np.sqrt(N) if N > 1 else 1.0
    tol = dict(rtol=max(rtol * shrink, 1e-14), atol=atol * shrink)
    per = _periodic_flags(config)
    if cw is None:
        y0 = np.concatenate([x0.T, v0.T], axis=0).ravel()
        with np.errstate(over="ignore", invalid="ignore"):
            sol = solve_ivp(sysm.rhs, (0.0, T), y0, method=method, t_eval=t_eval,
                            args=(N,), dense_output=dense, events=_blowup_event(d, N), **tol)
        underflow = _is_underflow(sol) or not np.all(np.isfinite(sol.y))
        blowup = _blew_up(sol)
        message = f"velocity exceeded {VELOCITY_BLOWUP:g} at t = {sol.t_events[0][0]:.6g}" if blowup else sol.message
        Y = sol.y.reshape(2 * d, N, -1)
        out = []
        for b in range(N):
            pos, vel = Y[:d, b].T, Y[d:, b].T
            en = np.broadcast_to(sysm.energy(pos.T, vel.T), (len(sol.t),)).copy()
            dense_b = _Segments([(0.0, T, sol.sol)], b, N, d) if dense and sol.sol is not None else None
            out.append(GeodesicTrajectory(sol.t.copy(), pos.copy(), vel.copy(), en, per, sol.status,
                                          message, underflow, blowup, dense_b))
        return out
    return _integrate_wrapped(config, sysm, cw, x0, v0, t_eval, method, dense, tol, per)


def _integrate_wrapped(config, sysm, cw, x0, v0, t_eval, method, dense, tol, per):
    N, d = x0.shape
    X, V = x0.T.copy(), v0.T.copy()
    W = np.zeros((d, N), dtype=int)
    for b in range(N):
        W[:, b] += cw.reduce(X[:, b], V[:, b])
    w = x0[:, 1].copy()  # unwrapped fibre coordinate

    def rhs(t, y, W):
        core = sysm.rhs(t, y[:2 * d * N], N)
        Yc = y[:2 * d * N].reshape(2 * d, N)
        x, xd = Yc[:d], Yc[d:]
        xu = x + TWO_PI * W
        xu[1] = 0.0
        P = cw.potential(np.concatenate([x, xu], axis=1))
        wd = xd[1] + _p_dot(P[:, :N] - P[:, N:], xd)
        return np.concatenate([core, wd])

    M = len(t_eval)
    cpos = np.full((M, N, d), np.nan)
    cvel = np.full((M, N, d), np.nan)
    wind = np.zeros((M, N, d), dtype=int)
    wvals = np.full((M, N), np.nan)
    cpos[0], cvel[0], wind[0], wvals[0] = X.T, V.T, W.T, w
    status, message, underflow, blowup, last = 0, "", False, False, 0
    event = _blowup_event(d, N)
    segments = []
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, M):
            y0 = np.concatenate([X.ravel(), V.ravel(), w])
            sol = solve_ivp(rhs, (t_eval[k - 1], t_eval[k]), y0, method=method, args=(W.copy(),),
                            dense_output=dense, events=event, **tol)
            yk = sol.y[:, -1]
            if sol.status != 0 or not np.all(np.isfinite(yk)):
                status, message = sol.status, sol.message
                underflow = _is_underflow(sol) or not np.all(np.isfinite(yk))
                blowup = _blew_up(sol)
                if blowup:
                    message = f"velocity exceeded {VELOCITY_BLOWUP:g} at t = {sol.t[-1]:.6g}"
                break
            if dense:
                segments.append((t_eval[k - 1], t_eval[k], sol.sol))
            X = yk[:d * N].reshape(d, N).copy()
            V = yk[d * N:2 * d * N].reshape(d, N).copy()
            w = yk[2 * d * N:].copy()
            for b in range(N):
                W[:, b] += cw.reduce(X[:, b], V[:, b])
            cpos[k], cvel[k], wind[k], wvals[k] = X.T, V.T, W.T, w
            last = k
    t = t_eval[:last + 1]
    out = []
    for b in range(N):
        cp, cv, wd = cpos[:last + 1, b], cvel[:last + 1, b], wind[:last + 1, b]
        pos = cp + TWO_PI * wd
        pos[:, 1] = wvals[:last + 1, b]
        vel = cv.copy()
        vel[:, 1] += _p_dot(cw.potential(cp.T), cv.T) - _p_dot(cw.potential(pos.T), cv.T)
        en = np.broadcast_to(sysm.energy(cp.T, cv.T), (len(t),)).copy()
        dense_b = _Segments(segments, b, N, d) if dense else None
        out.append(GeodesicTrajectory(t.copy(), pos, vel, en, per, status, message, underflow, blowup, dense_b,
                                      chart_position=cp.copy(), chart_velocity=cv.copy(), winding=wd.copy()))
    return out


class _Segments:
    """Dense output of one member of a stacked, possibly segmented, solve.

    Values are wrapped chart states of the segment containing ``t``.
    """

    def __init__(self, segments, b, N, d):
        self.segments, self.b, self.N, self.d = segments, b, N, d
        self.starts = np.array([s[0] for s in segments])

    def segment_of(self, t) -> np.ndarray:
        return np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, len(self.segments) - 1)

    def __call__(self, t, segment=None):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = self.segment_of(t) if segment is None else np.broadcast_to(segment, t.shape)
        out = np.empty((2 * self.d, t.size))
        for s in np.unique(seg):
            m = seg == s
            Y = self.segments[s][2](t[m])[:2 * self.d * self.N]
            out[:, m] = Y.reshape(2 * self.d, self.N, -1)[:, self.b]
        return out


def integrate_geodesic(config: BundleConfig, x0, v0, T: float, rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL, n_out: int = 201, method: str = "DOP853",
                       wrap: str | bool = "auto") -> GeodesicTrajectory:
    """Single geodesic with dense output kept for residual checks."""
    return integrate_batch(config, [x0], [v0], T, rtol, atol, n_out, method, dense=True, wrap=wrap)[0]


def geodesic_residual(config: BundleConfig, traj: GeodesicTrajectory, n_check: int = 50, h: float = 1e-4) -> float:
    """Sup of ``|d/dt xd - acc(x, xd)|`` with the derivative taken from the
    dense output by central differences."""
    if traj.dense is None:
        raise ValueError("trajectory has no dense output")
    sysm = geodesic_system(config)
    d = sysm.d
    ts = np.linspace(traj.t[0] + 2 * h, traj.t[-1] - 2 * h, n_check)
    seg = traj.dense.segment_of(ts)
    Y = traj.dense(ts, seg)
    Yp, Ym = traj.dense(ts + h, seg), traj.dense(ts - h, seg)
    fd = (Yp[d:] - Ym[d:]) / (2 * h)
    acc = sysm.acceleration(Y[:d], Y[d:])
    return float(np.max(np.abs(fd - acc)))


# ------------------------------------------------------------ structured type-4 reduction


def _check_structured_shape(config: BundleConfig) -> None:
    base = config.base
    u, v = base.u, config.v
    if base.rho != 1:
        raise ShapeError("structured geodesics need eta = du")
    if config.f.has(u) or config.f.has(v):
        raise ShapeError("structured geodesics need f constant along u and the fibre")
    if sp.simplify(config.P[0]) != 0 or any(p.has(u) for p in config.P):
        raise ShapeError("structured geodesics need a gauge potential without du and u-dependence")


class _StructuredSystem:
    def __init__(self, config: BundleConfig):
        _check_structured_shape(config)
        base = config.base
        B = base.base_symbols
        n = base.n
        u1 = sp.Symbol("u1", real=True)
        V = sp.symbols(f"bv0:{n}", real=True)
        h = [base.h[i + 1, i + 1] for i in range(n)]
        gam = base.christoffel_sym
        Psi = config.Psi
        f = config.f
        acc = []
        for b in range(n):
            geo = -sum(gam[b + 1, i + 1, j + 1] * V[i] * V[j] for i in range(n) for j in range(n))
            # lowered force 2 u1 Psi_ba xd^a + u1^2/2 d_b f
            force = 2 * u1 * sum(Psi[b + 1, a + 1] * V[a] for a in range(n)) + u1**2 / 2 * sp.diff(f, B[b])
            acc.append(geo + force / h[b])
        self.n = n
        self._acc = compile_array(acc, list(B) + list(V) + [u1])
        Pb = [config.P[b + 1] for b in range(n)]
        self._vdot_part = compile_scalar(sum(p * w for p, w in zip(Pb, V)) + f * u1, list(B) + list(V) + [u1])

    def rhs(self, t, y, u1):
        n = self.n
        x, xd = y[:n], y[n:2 * n]
        args = np.concatenate([x, xd, [u1]])
        out = np.empty_like(y)
        out[:n] = xd
        out[n:2 * n] = self._acc(args)
        out[2 * n] = self._const - self._vdot_part(args)
        return out


def structured_geodesic(config: BundleConfig, x0, v0, T: float, rtol: float = DEFAULT_RTOL,
                        atol: float = DEFAULT_ATOL, n_out: int = 201) -> GeodesicTrajectory:
    """Geodesic from the reduced base equation.

    ``u(t) = u0 + u1 t``; the base curve solves
    ``nabla_t xd = (u1^2 / 2) grad f - 2 u1 psi(xd)`` (the factor 2 is the
    normalization ``dP = 2 Psi`` of the chart), and the fibre coordinate
    follows from the conserved momentum of the Killing field ``d_u``:
    ``vd = p_u - P(xd) - (f + 1) u1``.
    """
    sysm = config.__dict__.get("_structured_system")
    if sysm is None:
        sysm = _StructuredSystem(config)
        config.__dict__["_structured_system"] = sysm
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = sysm.n
    u0, u1 = x0[0], v0[0]
    args0 = np.concatenate([x0[2:], v0[2:], [u1]])
    # p_u = g(d_u, xd) = vd + P(xd) + (f + 1) u1
    p_u = v0[1] + sysm._vdot_part(args0) + u1
    sysm._const = p_u - u1
    y0 = np.concatenate([x0[2:], v0[2:], [x0[1]]])
    t_eval = np.linspace(0.0, T, n_out)
    sol = solve_ivp(sysm.rhs, (0.0, T), y0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval,
                    args=(u1,), dense_output=True)
    t = sol.t
    M = len(t)
    pos = np.empty((M, n + 2))
    vel = np.empty((M, n + 2))
    pos[:, 0] = u0 + u1 * t
    vel[:, 0] = u1
    pos[:, 1] = sol.y[2 * n]
    pos[:, 2:] = sol.y[:n].T
    vel[:, 2:] = sol.y[n:2 * n].T
    for k in range(M):
        vel[k, 1] = sysm._const - sysm._vdot_part(np.concatenate([pos[k, 2:], vel[k, 2:], [u1]]))
    en = geodesic_system(config).energy(pos.T, vel.T)
    return GeodesicTrajectory(t, pos, vel, np.broadcast_to(en, (M,)).copy(), _periodic_flags(config),
                              sol.status, sol.message, _is_underflow(sol))


def trajectory_gap(a: GeodesicTrajectory, b: GeodesicTrajectory) -> float:
    """Sup distance of positions sampled at common times."""
    if a.t.shape != b.t.shape or np.max(np.abs(a.t - b.t)) > 1e-12:
        raise ValueError("trajectories are sampled at different times")
    return float(np.max(np.abs(a.position - b.position)))


# ------------------------------------------------------------ completeness probes


class KillingMonitor:
    """Compiled ``g(K, K)``, ``g(K, xd)``, ``g^R(xd, xd)`` and
    ``(L_K g)(xd, xd)`` for ``K = zeta + C/2 xi``."""

    def __init__(self, config: BundleConfig, C: float):
        X = config.coords
        d = config.dim
        V = sp.symbols(f"kv0:{d}", real=True)
        G = config.metric_sym
        K = killing_candidate(config, C)
        L = sp.zeros(d, d)
        for a in range(d):
            for b in range(d):
                L[a, b] = (sum(K[c] * sp.diff(G[a, b], X[c]) for c in range(d))
                           + sum(G[c, b] * sp.diff(K[c], X[a]) + G[a, c] * sp.diff(K[c], X[b]) for c in range(d)))
        gKK = sum(G[a, b] * K[a] * K[b] for a in range(d) for b in range(d))
        gKV = sum(G[a, b] * K[a] * V[b] for a in range(d) for b in range(d))
        gVV = sum(G[a, b] * V[a] * V[b] for a in range(d) for b in range(d))
        LVV = sum(L[a, b] * V[a] * V[b] for a in range(d) for b in range(d))
        self.C = C
        self.K = K
        self.lie_sym = L
        self._fn = compile_array([gKK, gKV, gVV, LVV], list(X) + list(V))

    def __call__(self, x, xd) -> dict:
        vals = self._fn(np.concatenate([np.asarray(x, float), np.asarray(xd, float)], axis=0))
        gKK, gKV, gVV, LVV = vals
        gR = gVV - 2 * gKV**2 / gKK
        return {"gKK": gKK, "gKV": gKV, "gVV": gVV, "lie": LVV, "gR": gR}


@dataclass
class ProbeReport:
    preset: str
    T: float
    n_geodesics: int
    seed: int
    C: float
    horizon_reached: float
    all_reached: bool
    underflow: bool
    sup_gR: float
    sup_lie: float
    sup_abs_gKV: float
    max_energy_drift: float
    killing_timelike: bool
    min_gKK: float
    killing_identity_residual: float
    growth_lie: float = 0.0
    growth_gR: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def bounded(self) -> bool:
        """Monitors finite and growing at most linearly in ``t``."""
        finite = all(np.isfinite(x) for x in (self.sup_gR, self.sup_lie, self.sup_abs_gKV))
        return finite and self.growth_lie <= LINEAR_GROWTH_MAX

    @property
    def complete(self) -> bool:
        """Probe verdict: horizon reached, no step-size underflow, bounded monitors."""
        return self.all_reached and not self.underflow and self.bounded

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bounded"] = self.bounded
        out["complete"] = self.complete
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=float)


def probe_initial_data(config: BundleConfig, n: int, rng: np.random.Generator, u_scale: float = 1.0,
                       speed: float = 1.0):
    x0 = config.sample_points(n, rng)
    v0 = rng.normal(size=x0.shape) * speed
    v0[:, 0] *= u_scale
    return x0, v0


def killing_identity_residual(monitor: KillingMonitor, config: BundleConfig, traj: GeodesicTrajectory,
                              h: float = 1e-4) -> float:
    """Sup of ``|d/dt g(K, xd) - 1/2 (L_K g)(xd, xd)|`` on the sample times."""
    if traj.dense is None:
        raise ValueError("trajectory has no dense output")
    d = config.dim
    ts = np.clip(traj.t, traj.t[0] + h, traj.t[-1] - h)
    seg = traj.dense.segment_of(ts)
    Yp, Ym, Y = traj.dense(ts + h, seg), traj.dense(ts - h, seg), traj.dense(ts, seg)
    dgKV = (monitor(Yp[:d], Yp[d:])["gKV"] - monitor(Ym[:d], Ym[d:])["gKV"]) / (2 * h)
    lie = monitor(Y[:d], Y[d:])["lie"]
    return float(np.max(np.abs(dgKV - lie / 2)))


def completeness_probe(config: BundleConfig, n_geodesics: int = 100, T: float = 1000.0, seed: int = 0,
                       u_scale: float = 1.0, speed: float = 1.0, eps: float = 0.1, chunk: int = 100,
                       rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, n_out: int = 401) -> ProbeReport:
    """Integrate a random geodesic batch and monitor ``g^R`` and ``L_K g``."""
    C = estimate_killing_constant(config, eps=eps)
    mon = KillingMonitor(config, C)
    rng = np.random.default_rng(seed)
    warnings = []
    pts = config.sample_points(256, np.random.default_rng(seed + 1))
    gKK_s = mon(pts.T, np.zeros_like(pts.T))["gKK"]
    min_gKK = float(np.max(gKK_s))
    timelike = bool(np.all(gKK_s < 0))
    if not timelike:
        warnings.append(f"K is not timelike at {int(np.sum(gKK_s >= 0))} of 256 samples")
    x0, v0 = probe_initial_data(config, n_geodesics, rng, u_scale, speed)
    horizon = T
    underflow = False
    kid = 0.0
    running = {"lie": [], "gR": [], "gKV": []}
    drift = 0.0
    blowups = 0
    for s in range(0, n_geodesics, chunk):
        trajs = integrate_batch(config, x0[s:s + chunk], v0[s:s + chunk], T, rtol, atol, n_out,
                                dense=(s == 0))
        for tr in trajs:
            underflow |= tr.underflow
            blowups += tr.blowup
            horizon = min(horizon, tr.t_final)
            pos, _ = tr.wrapped()
            vel = tr.chart_velocity if tr.chart_velocity is not None else tr.velocity
            m = mon(pos.T, vel.T)
            for key in running:
                col = np.full(n_out, np.nan)
                col[:len(tr.t)] = np.abs(m[key])
                running[key].append(col)
            drift = max(drift, tr.energy_drift)
        if s == 0 and trajs[0].dense is not None and not trajs[0].underflow:
            kid = killing_identity_residual(mon, config, trajs[0])
    if blowups:
        warnings.append(f"{blowups} geodesics exceeded velocity {VELOCITY_BLOWUP:g} before T")
    t = np.linspace(0.0, T, n_out)
    sups = {k: np.fmax.accumulate(np.nanmax(np.array(v), axis=0)) for k, v in running.items()}
    growth = {k: growth_exponent(t, sups[k]) for k in ("lie", "gR")}
    return ProbeReport(config.name, float(T), int(n_geodesics), int(seed), float(C), float(horizon),
                       bool(horizon >= T), bool(underflow), float(sups["gR"][-1]), float(sups["lie"][-1]),
                       float(sups["gKV"][-1]), drift, timelike, min_gKK, kid, growth["lie"], growth["gR"],
                       warnings)


def growth_exponent(t, running_sup) -> float:
    """Log-log slope of a running supremum between ``T/10`` and ``T``.

    Returns 0 for monitors that stay (numerically) constant.
    """
    t = np.asarray(t)
    y = np.asarray(running_sup)
    ok = np.isfinite(y)
    if not np.all(ok):
        return float("inf")
    T = t[-1]
    i0 = int(np.searchsorted(t, T / 10))
    a, b = y[i0], y[-1]
    if b <= max(a, 1e-12) * (1 + 1e-9):
        return 0.0
    if a <= 1e-300:
        return float("inf")
    return float(np.log(b / a) / np.log(T / t[i0]))


def alpha_pullback_monitor(config: BundleConfig, traj: GeodesicTrajectory) -> tuple[float, float]:
    """``sup_t |pi^* alpha(xd)|`` and the a-priori bound ``sup |alpha|_h |delta'(0)|_h``.

    Needs ``meta['alpha']`` (components over the N coordinates, zero along u).
    """
    if "alpha" not in config.meta:
        raise ShapeError("config carries no alpha")
    base = config.base
    alpha = [sp.sympify(a) for a in config.meta["alpha"]]
    a_fn = compile_array(alpha[1:], base.coords)
    n = base.n
    h_fn = compile_array([base.h[i + 1, i + 1] for i in range(n)], base.coords)
    NP = np.column_stack([traj.position[:, 0], traj.position[:, 2:]]).T
    A = a_fn(NP)  # (n, M)
    vals = np.sum(A * traj.velocity[:, 2:].T, axis=0)
    pts = base.sample_points(1024, np.random.default_rng(0)).T
    sup_alpha = float(np.max(np.sqrt(np.sum(a_fn(pts) ** 2 / h_fn(pts), axis=0))))
    hv = h_fn(NP[:, :1])[:, 0]
    speed0 = float(np.sqrt(np.sum(hv * traj.velocity[0, 2:] ** 2)))
    return float(np.max(np.abs(vals))), sup_alpha * speed0
