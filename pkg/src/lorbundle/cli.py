"""Command line interface.

``lorbundle <subcommand> (--preset NAME [--params JSON] | --config FILE) [--out DIR]``

Every run writes ``summary.json`` (sorted keys, floats with 17 significant
digits) and CSV tables into ``--out``.  Exit codes: 0 success, 1 malformed
input, 2 tolerance or expected-outcome violation.  ``LORBUNDLE_THREADS``
caps the BLAS/OpenMP thread pools.
"""

import os

_THREADS = os.environ.get("LORBUNDLE_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[_var] = _THREADS

import argparse  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .errors import LorbundleError  # noqa: E402

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2

CONNECTION_TOL = 1e-6
CURVATURE_TOL = 1e-5
RICCI_FLAT_TOL = 1e-8
RICCI_SUP_TOL = 1e-7
ENERGY_TOL = 1e-7
ORTHOGONALITY_TOL = 1e-9
METRIC_TOL = 1e-8
SCREEN_GAP_TOL = 1e-7


# ------------------------------------------------------------ serialization


def dumps(obj, level: int = 0) -> str:
    """Deterministic JSON: sorted keys, two-space indent, ``%.17g`` floats.

    Non-finite floats are written as the strings ``"nan"``, ``"inf"``, ``"-inf"``.
    """
    pad, end = "  " * (level + 1), "  " * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{json.dumps(k)}: {dumps(v, level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, level + 1) for v in obj) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else json.dumps(repr(x))
    return json.dumps(str(obj))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return x


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


class Run:
    """Output directory, summary and violation bookkeeping of one command."""

    def __init__(self, out: str, command: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.summary = {"command": command}
        self.violations = []

    def check(self, name: str, value: float, tol: float) -> None:
        if not (value <= tol):
            self.violations.append({"check": name, "value": value, "tolerance": tol})

    def expect(self, name: str, got, want) -> None:
        if got != want:
            self.violations.append({"check": name, "value": got, "expected": want})

    def finish(self) -> int:
        self.summary["violations"] = self.violations
        self.summary["ok"] = not self.violations
        (self.out / "summary.json").write_text(dumps(self.summary) + "\n", encoding="utf-8")
        for v in self.violations:
            print(f"violation: {dumps(v).replace(chr(10), ' ')}", file=sys.stderr)
        print(f"{self.summary['command']}: {'ok' if not self.violations else 'FAILED'} -> {self.out / 'summary.json'}")
        return EXIT_OK if not self.violations else EXIT_VIOLATION


# ------------------------------------------------------------ config


def load(args):
    """``(config, descriptor or None)`` from ``--preset``/``--params`` or ``--config``."""
    from .presets import PRESETS, build_preset, load_config

    if args.config:
        return load_config(args.config), None
    if not args.preset:
        raise LorbundleError("give --preset NAME or --config FILE")
    try:
        params = json.loads(args.params) if args.params else None
    except json.JSONDecodeError as exc:
        raise LorbundleError(f"--params: invalid JSON ({exc})") from None
    return build_preset(args.preset, params), PRESETS.get(args.preset)


def _points(config, n, seed):
    return config.sample_points(n, np.random.default_rng(seed))


# ------------------------------------------------------------ subcommands


def cmd_check_curvature(args) -> int:
    from .bundle import connection_discrepancy
    from .curvature import curvature_report, ricci_brute_force

    config, _ = load(args)
    run = Run(args.out, "check-curvature")
    rows = []
    worst = {"connection": 0.0, "riemann": 0.0, "ricci": 0.0, "sup_riemann": 0.0, "sup_ricci": 0.0}
    for i, p in enumerate(_points(config, args.points, args.seed)):
        conn, _ = connection_discrepancy(config, p)
        rep = curvature_report(config, p)
        sup_rm = float(np.max(np.abs(rep.brute_force)))
        sup_ric = float(np.max(np.abs(ricci_brute_force(config, p))))
        vals = (conn, rep.max_discrepancy, rep.ricci_discrepancy, sup_rm, sup_ric)
        for key, val in zip(worst, vals):
            worst[key] = max(worst[key], val)
        rows.append([i, *p, *vals])
    names = [s.name for s in config.coords]
    write_csv(run.out / "curvature_points.csv",
              ["index", *names, "connection_gap", "riemann_gap", "ricci_gap", "sup_riemann", "sup_ricci"], rows)
    run.summary.update(config=config.name, points=args.points, seed=args.seed, max_connection_gap=worst["connection"],
                       max_riemann_gap=worst["riemann"], max_ricci_gap=worst["ricci"],
                       sup_riemann=worst["sup_riemann"], sup_ricci=worst["sup_ricci"],
                       all_zero=worst["sup_riemann"] <= 1e-12)
    run.check("connection closed form vs brute force", worst["connection"], CONNECTION_TOL)
    run.check("curvature closed form vs brute force", worst["riemann"], CURVATURE_TOL)
    run.check("Ricci closed form vs brute force", worst["ricci"], CURVATURE_TOL)
    return run.finish()


def cmd_ricci_flat(args) -> int:
    import sympy as sp

    from .curvature import ricci_brute_force
    from .expr import compile_scalar
    from .ricci_flat import TorusGridField, build_ricci_flat_config

    config, _ = load(args)
    if "alpha" not in config.meta:
        raise LorbundleError(f"{config.name}: not a Ricci-flat construction (no alpha in the config)")
    base = config.base
    syms = base.base_symbols
    alpha = [sp.sympify(a) for a in config.meta["alpha"]][1:]
    build = build_ricci_flat_config(base, alpha, resolution=args.resolution, method="spectral", name=config.name)
    run = Run(args.out, "ricci-flat")
    f_grid = TorusGridField.from_expr(build.f_B, syms, args.resolution)
    div = compile_scalar(sum(sp.diff(a, s) for a, s in zip(alpha, syms)), syms)
    axes = np.meshgrid(*[np.arange(args.resolution) * 2 * np.pi / args.resolution] * len(syms), indexing="ij")
    residual = TorusGridField(f_grid.laplacian().values + 4 * np.broadcast_to(div(np.stack(axes)), f_grid.shape))
    names = [s.name for s in syms]
    coords = [a.ravel() for a in axes]
    write_csv(run.out / "f_B.csv", names + ["f_B"],
              [[*map(float, c), float(val)] for *c, val in zip(*coords, f_grid.values.ravel())])
    write_csv(run.out / "residual.csv", names + ["residual"],
              [[*map(float, c), float(val)] for *c, val in zip(*coords, residual.values.ravel())])
    sup_res = float(np.max(np.abs(residual.values)))
    ric = [float(np.max(np.abs(ricci_brute_force(build.config, p))))
           for p in _points(build.config, args.points, args.seed)]
    ref = compile_scalar(config.meta["f_B"], syms)
    gap = float(np.max(np.abs(f_grid.values - np.broadcast_to(ref(np.stack(axes)), f_grid.shape))))
    run.summary.update(config=config.name, resolution=args.resolution, method=build.method, f_B=str(build.f_B),
                       class_coefficients=build.class_coefficients, residual_sup=sup_res,
                       gap_to_config_f=gap, ricci_sup=max(ric), points=args.points)
    run.check("Poisson residual", sup_res, RICCI_FLAT_TOL)
    run.check("brute-force Ricci", max(ric), RICCI_SUP_TOL)
    return run.finish()


def _probe_kwargs(desc):
    return dict(desc.probe) if desc is not None else {}


def cmd_geodesic(args) -> int:
    from .geodesics import geodesic_residual, integrate_geodesic, probe_initial_data

    config, desc = load(args)
    kw = _probe_kwargs(desc)
    rng = np.random.default_rng(args.seed)
    x0, v0 = probe_initial_data(config, 1, rng, kw.get("u_scale", 1.0), kw.get("speed", 1.0))
    x0, v0 = x0[0], v0[0]
    if args.x0:
        x0 = np.array(json.loads(args.x0), dtype=float)
    if args.v0:
        v0 = np.array(json.loads(args.v0), dtype=float)
    if x0.shape != (config.dim,) or v0.shape != (config.dim,):
        raise LorbundleError(f"initial data needs {config.dim} components")
    traj = integrate_geodesic(config, x0, v0, args.T, rtol=args.rtol, atol=args.atol, n_out=args.samples)
    run = Run(args.out, "geodesic")
    traj.to_csv(run.out / "trajectory.csv", [s.name for s in config.coords])
    u_affine = float(np.max(np.abs(traj.position[:, 0] - x0[0] - v0[0] * traj.t)))
    res = geodesic_residual(config, traj)
    run.summary.update(config=config.name, T=args.T, seed=args.seed, x0=x0, v0=v0, t_final=traj.t_final,
                       underflow=traj.underflow, blowup=traj.blowup, rtol=args.rtol, atol=args.atol,
                       energy=float(traj.energy[0]), energy_drift=traj.energy_drift,
                       geodesic_residual=res, u_affine_residual=u_affine, message=traj.message)
    run.check("horizon reached", args.T - traj.t_final, 0.0)
    run.check("energy drift", traj.energy_drift, args.energy_tol)
    return run.finish()


def cmd_probe(args) -> int:
    from .geodesics import completeness_probe

    config, desc = load(args)
    rep = completeness_probe(config, n_geodesics=args.n, T=args.T, seed=args.seed, **_probe_kwargs(desc))
    run = Run(args.out, "probe")
    data = rep.to_dict()
    data["no_underflow"] = not rep.underflow
    run.summary.update(data)
    keys = sorted(k for k, v in data.items() if not isinstance(v, (list, dict)))
    write_csv(run.out / "probe.csv", keys, [[data[k] for k in keys]])
    run.expect("probe complete", rep.complete, True)
    return run.finish()


def cmd_holonomy(args) -> int:
    from .errors import ShapeError
    from .holonomy import parse_loop, transport_generic_chart, transport_screen_ode

    config, _ = load(args)
    point = np.array(json.loads(args.point), dtype=float) if args.point else np.zeros(config.dim)
    if point.shape != (config.dim,):
        raise LorbundleError(f"--point needs {config.dim} components")
    loop = parse_loop(args.loop, config, point)
    run = Run(args.out, "holonomy")
    gen = transport_generic_chart(config, loop)
    run.summary.update(config=config.name, loop=loop.name, point=point, frame=gen.frame, omega=gen.omega, C=gen.C,
                       metric_residual=gen.metric_residual, orthogonality_residual=gen.orthogonality_residual)
    run.check("transport preserves g", gen.metric_residual, METRIC_TOL)
    run.check("screen block orthogonal", gen.orthogonality_residual, ORTHOGONALITY_TOL)
    try:
        scr = transport_screen_ode(config, loop)
    except ShapeError as exc:
        run.summary["screen_ode"] = f"not applicable: {exc}"
    else:
        gap = float(np.max(np.abs(scr.frame - gen.frame)))
        run.summary.update(screen_ode_gap=gap, screen_orthogonality_residual=scr.orthogonality_residual)
        run.check("screen ODE vs chart transport", gap, SCREEN_GAP_TOL)
        run.check("screen ODE block orthogonal", scr.orthogonality_residual, ORTHOGONALITY_TOL)
    write_csv(run.out / "transport.csv", [f"col{j}" for j in range(gen.frame.shape[1])], gen.frame.tolist())
    return run.finish()


def cmd_classify(args) -> int:
    from .holonomy import sample_holonomy_algebra, xi_recurrence_report

    config, desc = load(args)
    summ = sample_holonomy_algebra(config, n_points=args.points, seed=args.seed, generators=True)
    xi = xi_recurrence_report(config, seed=args.seed)
    run = Run(args.out, "classify")
    run.summary.update(config=config.name, points=args.points, seed=args.seed, holonomy=summ.to_dict(),
                       xi_parallel=xi.parallel, xi_sup_dv_f=xi.sup_dv_f)
    if summ.basis is not None and len(summ.basis):
        write_csv(run.out / "algebra_basis.csv", [f"c{j}" for j in range(summ.basis.shape[1])], summ.basis.tolist())
    want = desc.expected.get("holonomy_type") if desc is not None else None
    if want is not None and not args.params:
        run.summary["expected_holonomy_type"] = want
        run.expect("holonomy type", summ.holonomy_type, want)
    return run.finish()


def cmd_verify_type4(args) -> int:
    from .holonomy import type4_verify

    config, _ = load(args)
    rep = type4_verify(config, n_points=args.points, n_paths=args.n, seed=args.seed)
    run = Run(args.out, "verify-type4")
    run.summary.update(config=config.name, seed=args.seed, **rep.to_dict())
    write_csv(run.out / "conditions.csv", ["condition", "residual", "tolerance", "ok"],
              [[c.name, c.residual, c.tolerance, c.ok] for c in rep.conditions])
    for c in rep.failures():
        run.violations.append({"check": c.name, "value": c.residual, "tolerance": c.tolerance})
    return run.finish()


def _preset_outcomes(name, points, seed):
    from .bundle import screen_integrability
    from .curvature import einstein_obstruction, ricci_brute_force
    from .holonomy import sample_holonomy_algebra
    from .presets import PRESETS, build_preset

    config = build_preset(name)
    ric = max(float(np.max(np.abs(ricci_brute_force(config, p)))) for p in _points(config, points, seed))
    got = {"screen_integrable": screen_integrability(config).integrable, "ricci_flat": ric <= RICCI_SUP_TOL,
           "holonomy_type": sample_holonomy_algebra(config, n_points=points, seed=seed).holonomy_type,
           "einstein_sup": einstein_obstruction(config).lambda_sup}
    want = {k: v for k, v in PRESETS[name].expected.items() if k in got}
    return config, got, want, ric


def cmd_report(args) -> int:
    from .presets import preset_names

    names = [args.preset] if args.preset else preset_names()
    run = Run(args.out, "report")
    rows, table = [], {}
    for name in names:
        config, got, want, ric = _preset_outcomes(name, args.points, args.seed)
        table[name] = {"observed": got, "expected": want, "ricci_sup": ric}
        for key, val in want.items():
            if isinstance(val, float):
                ok = abs(got[key] - val) <= 1e-9
            else:
                ok = got[key] == val
            rows.append([name, key, str(val), str(got[key]), ok])
            if not ok:
                run.violations.append({"check": f"{name}: {key}", "value": got[key], "expected": val})
    run.summary.update(presets=table, points=args.points, seed=args.seed)
    write_csv(run.out / "outcomes.csv", ["preset", "quantity", "expected", "observed", "ok"], rows)
    return run.finish()


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorbundle", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, points=None, config=True):
        p = sub.add_parser(name, help=help_)
        if config:
            src = p.add_mutually_exclusive_group()
            src.add_argument("--preset", help="preset name")
            src.add_argument("--config", help="JSON config file")
            p.add_argument("--params", help="JSON object of preset parameters")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0)
        if points is not None:
            p.add_argument("--points", type=int, default=points, help="number of sample points")
        p.set_defaults(func=func)
        return p

    add("check-curvature", cmd_check_curvature, "closed-form vs brute-force connection and curvature", 20)
    p = add("ricci-flat", cmd_ricci_flat, "spectral Ricci-flat solve and residual fields", 8)
    p.add_argument("--resolution", type=int, default=64)
    p = add("geodesic", cmd_geodesic, "integrate one geodesic")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--x0", help="JSON list of chart coordinates")
    p.add_argument("--v0", help="JSON list of chart velocities")
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--energy-tol", type=float, default=ENERGY_TOL)
    # single trajectories are cheap; tight tolerances keep the energy drift below ENERGY_TOL
    p.add_argument("--rtol", type=float, default=1e-12)
    p.add_argument("--atol", type=float, default=1e-14)
    p = add("probe", cmd_probe, "completeness probe over a random geodesic batch")
    p.add_argument("--T", type=float, default=1000.0)
    p.add_argument("--n", type=int, default=100, help="number of geodesics")
    p = add("holonomy", cmd_holonomy, "parallel transport around a loop")
    p.add_argument("--loop", default="u-circle", help="u-circle | torus-cycle(x) | rectangle(a,b,side)")
    p.add_argument("--point", help="JSON list: base point of the loop (default: origin)")
    add("classify", cmd_classify, "sample the holonomy algebra and assign a type", 8)
    p = add("verify-type4", cmd_verify_type4, "check the type-4 conditions", 6)
    p.add_argument("--n", type=int, default=20, help="number of sampled paths")
    p = add("report", cmd_report, "expected-outcome table for one or all presets", 4, config=False)
    p.add_argument("--preset", help="single preset (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LorbundleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def run_cli(argv) -> int:
    return main(list(argv))


if __name__ == "__main__":
    sys.exit(main())
