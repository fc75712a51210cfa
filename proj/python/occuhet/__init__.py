"""Zero-inflated site-occupancy models (Python wrapper around the C++ core)."""

import json

from . import _occuhet
from ._occuhet import ValidationError, __version__

__all__ = ["ValidationError", "__version__", "fit_counts", "fit_csv", "bias_rho",
           "limit_omega", "simulate"]


def fit_counts(family, counts, visits=1, method="ml", mixture="none"):
    """Fit from a frequency table {k: number of sites with total k}."""
    counts = {int(k): int(v) for k, v in counts.items()}
    return json.loads(_occuhet.fit_counts(family, counts, visits, method, mixture))


def fit_csv(path, family, y="", visit_columns=(), n_visits=0, detection="1",
            occurrence="1", method="ml", mixture="none", ht=False):
    return json.loads(_occuhet.fit_csv(str(path), family, y, list(visit_columns), n_visits,
                                       detection, occurrence, method, mixture, ht))


def bias_rho(mu, sigma2, psi=1.0):
    return json.loads(_occuhet.bias_rho(mu, sigma2, psi))


def limit_omega(pi, psi):
    exact, approx = _occuhet.limit_omega(list(pi), list(psi))
    return {"exact": exact, "approx": approx}


def simulate(config, replicates=0, seed=-1, threads=1):
    """Run a study from TOML text; returns the summary table."""
    return json.loads(_occuhet.simulate(config, replicates, seed, threads))["rows"]
