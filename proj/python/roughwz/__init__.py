"""Wong-Zakai approximations driven by fBM: lifts, p-variation, driven ODEs,
Malliavin quantities and mollified density estimates."""

import json as _json

from ._roughwz import (
    ConfigError,
    InconclusiveError,
    NumericalError,
    __version__,
    fbm_covariance,
    fit_rate,
    homogeneous_norm,
    n_functional,
    pvar_seminorm,
    sample_fbm,
    signature,
)
from . import _roughwz as _ext


def _model(model):
    if isinstance(model, str):
        model = {"preset": model}
    return _json.dumps(model)


def build_info():
    return _json.loads(_ext.build_info())


def solve(model, values, solver=None, times=None):
    """Solve the driven ODE along the piecewise-linear path `values` (nodes x d)."""
    return _ext._solve(_model(model), values, _json.dumps(solver or {}), list(times or []))


def derivatives(model, values, direction, order=1):
    """Xi_1..Xi_order along `direction` on the same uniform grid."""
    return list(_ext._derivatives(_model(model), values, direction, order))


def malliavin_covariance(model, values, hurst, t=1.0):
    return _ext._malliavin_covariance(_model(model), values, hurst, t)


def reference_density(model, hurst, t, xi):
    return _ext._reference_density(_model(model), hurst, t, list(xi))


def estimate_density(model, hurst=0.5, t=1.0, m=64, delta=0.5, samples=10000, lo=-3.0, hi=3.0, points=201,
                     seed=1, threads=1):
    return _ext._estimate_density(_model(model), hurst, t, m, delta, samples, lo, hi, points, seed, threads)


def run_study(config):
    """Run a convergence study from a config dict; returns the report dict."""
    return _json.loads(_ext._run_study(_json.dumps(config)))


__all__ = [
    "ConfigError",
    "InconclusiveError",
    "NumericalError",
    "__version__",
    "build_info",
    "derivatives",
    "estimate_density",
    "fbm_covariance",
    "fit_rate",
    "homogeneous_norm",
    "malliavin_covariance",
    "n_functional",
    "pvar_seminorm",
    "reference_density",
    "run_study",
    "sample_fbm",
    "signature",
    "solve",
]
