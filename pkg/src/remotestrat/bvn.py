"""Standard bivariate normal CDF.

Thin wrapper over :func:`scipy.stats.multivariate_normal.cdf`, which in two
dimensions evaluates Genz's deterministic bvnu algorithm (double precision,
no Monte Carlo). Infinite limits and |rho| = 1 are resolved here in closed
form, since the covariance is singular there.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr
from scipy.stats import multivariate_normal


def _singular(x, y, rho):
    if rho > 0:
        return ndtr(np.minimum(x, y))
    return np.maximum(0.0, ndtr(x) - ndtr(-y))


def bvn_grid(xs, ys, rho: float) -> np.ndarray:
    """F[i, j] = P(X <= xs[i], Y <= ys[j]) for unit normals with correlation ``rho``."""
    rho = float(np.clip(rho, -1.0, 1.0))
    X, Y = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), indexing="ij")
    if abs(rho) == 1.0:
        return _singular(X, Y, rho)
    F = np.empty(X.shape)
    fin = np.isfinite(X) & np.isfinite(Y)
    # marginals where one limit is infinite
    F[~fin] = np.where(
        (X[~fin] == -np.inf) | (Y[~fin] == -np.inf), 0.0, ndtr(np.minimum(X[~fin], Y[~fin]))
    )
    if fin.any():
        pts = np.column_stack([X[fin], Y[fin]])
        F[fin] = np.atleast_1d(multivariate_normal.cdf(pts, mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]]))
    return np.clip(F, 0.0, 1.0)


def bvn_cdf(x: float, y: float, rho: float) -> float:
    """P(X <= x, Y <= y) for standard normals with correlation ``rho`` (clamped to [-1, 1])."""
    return float(bvn_grid([x], [y], rho)[0, 0])
