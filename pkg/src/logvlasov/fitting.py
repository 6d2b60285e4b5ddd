"""Small helpers for convergence studies."""

import numpy as np


def loglog_slope(h, err):
    """Least-squares slope of log(err) against log(h).

    Returns nan when fewer than two usable (positive, finite) pairs exist.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = (h > 0) & (err > 0) & np.isfinite(h) & np.isfinite(err)
    if np.count_nonzero(ok) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)
    return float(slope)


def observed_orders(err, ratio=2.0):
    """Successive orders log(e_k/e_{k+1})/log(ratio) for a refinement sequence."""
    err = np.asarray(err, dtype=float)
    return np.log(err[:-1] / err[1:]) / np.log(ratio)


def is_monotone_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))
