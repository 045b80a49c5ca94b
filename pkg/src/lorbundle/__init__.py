"""Lorentzian circle bundles over Riemannian bases: charts, curvature,
Ricci-flat construction, geodesics and holonomy.

Submodules are imported on first attribute access so that the command line
entry point can configure thread limits before numpy is loaded.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "base": ["ProductBase", "TorusCircle", "WarpedLine", "ScalarField", "OneForm", "TwoForm", "base_frame",
             "christoffel_h", "calculus", "psi_endomorphism", "nabla_eta", "eta_is_recurrent"],
    "bundle": ["BundleConfig", "TorusBlock", "gauge_potential", "chart_metric", "frame_at",
               "christoffel_g_numeric", "cov_deriv_closed_form", "connection_discrepancy",
               "screen_integrability", "killing_candidate", "estimate_killing_constant"],
    "curvature": ["riemann_brute_force", "ricci_brute_force", "riemann_closed_form", "ricci_closed_form",
                  "curvature_report", "einstein_obstruction", "ricci_flat_residual", "t_eta"],
    "ricci_flat": ["TorusGridField", "poisson_solve", "build_ricci_flat_config", "gauge_shift",
                   "chart_metric_gap"],
    "geodesics": ["integrate_geodesic", "integrate_batch", "structured_geodesic", "completeness_probe",
                  "geodesic_residual", "trajectory_gap", "ProbeReport", "GeodesicTrajectory"],
    "holonomy": ["Loop", "parse_loop", "transport_screen_ode", "transport_generic_chart",
                 "commuting_exponential", "sample_holonomy_algebra", "type4_verify", "xi_recurrence_report",
                 "HolonomySummary", "TransportOperator"],
    "presets": ["build_preset", "build_type4", "config_from_dict", "load_config", "preset_names", "PRESETS"],
    "errors": ["LorbundleError", "DomainError", "ConsistencyError", "GaugeError", "ConfigurationError",
               "ShapeError", "SolvabilityError", "TranscriptionAlarm"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE)


def __getattr__(name):
    if name in _WHERE:
        return getattr(import_module(f".{_WHERE[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + __all__)
