"""Reduced-rank matrix autoregression: estimation, rank selection and simulation.

Panels are numpy arrays of shape (T, N1, N2). Results come back as plain
dictionaries using the same layout as the JSON files written by the
``rrmar`` command-line tool.
"""

import json

import numpy as np

from . import _rrmar
from ._rrmar import ConfigError, DataError, DimensionError, Error, NonFiniteError, NumericalError

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "NonFiniteError",
    "NumericalError",
    "fit",
    "information_criterion",
    "kernel_density",
    "loglik",
    "phi",
    "run_experiment",
    "select",
    "simulate",
]


def _panel(data):
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError("data must have shape (T, N1, N2)")
    return arr


def simulate(dims, ranks, lags=1, t=250, snr=0.7, burn_in=50, seed=0):
    """Draws a stationary DGP and a series from it. Returns (series, truth)."""
    series, truth = _rrmar.simulate(dims[0], dims[1], ranks[0], ranks[1], lags, t, snr, burn_in, seed)
    return series, json.loads(truth)


def fit(data, ranks, lags=1, n_starts=100, keep=10, seed=0, threads=1, row_labels=None, col_labels=None):
    """Maximum likelihood fit at fixed ranks and lag order.

    The returned dictionary has the fit.json layout plus a ``report`` entry
    holding the rendered co-movement equations.
    """
    text, report = _rrmar.fit(
        _panel(data), ranks[0], ranks[1], lags, n_starts, keep, seed, threads,
        list(row_labels or []), list(col_labels or []),
    )
    out = json.loads(text)
    out["report"] = report
    return out


def select(data, r1_range=None, r2_range=None, lags=(1, 1), cell_starts=40, cell_keep=5,
           criterion="bic", refit_winner=True, seed=0, threads=1):
    """Fits every (r1, r2, p) cell and records AIC and BIC.

    Ranges are inclusive (lo, hi) pairs; they default to the full rank range.
    """
    arr = _panel(data)
    r1 = r1_range or (1, arr.shape[1])
    r2 = r2_range or (1, arr.shape[2])
    grid = _rrmar.select(
        arr, _rrmar.IntRange(*r1), _rrmar.IntRange(*r2), _rrmar.IntRange(*lags),
        cell_starts, cell_keep, criterion, refit_winner, seed, threads,
    )
    return json.loads(grid)


def loglik(data, params):
    """Gaussian log-likelihood (without the 2 pi term) at a parameter dictionary."""
    return _rrmar.loglik(_panel(data), json.dumps(params))


def phi(r1, r2, n1, n2, p):
    """Number of free factor parameters penalized by the information criteria."""
    return _rrmar.phi(r1, r2, n1, n2, p)


def information_criterion(loglik_value, r1, r2, p, n1, n2, t, criterion="bic"):
    return _rrmar.information_criterion(loglik_value, r1, r2, p, n1, n2, t, criterion)


def kernel_density(draws, grid=512):
    """Gaussian kernel density on mean +/- 4 sd with Silverman's bandwidth."""
    x, density, bandwidth, degenerate = _rrmar.kernel_density(list(map(float, draws)), grid)
    return {"x": np.asarray(x), "density": np.asarray(density), "bandwidth": bandwidth, "degenerate": degenerate}


def run_experiment(design, replications, t_list, seed=0, threads=1):
    """Runs a Monte Carlo design with its default settings."""
    return json.loads(_rrmar.run_experiment(design, replications, list(t_list), seed, threads))
