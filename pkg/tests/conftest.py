"""Shared test helpers."""

import math

import numpy as np

from annuflux import analytic


def survival_by_quadrature(geom, modeset, t, n_r=400):
    """2-D quadrature of the survival density over the annulus: Gauss-Legendre
    in radius, trapezoid in angle (periodic, hence spectrally accurate)."""
    nodes, weights = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (geom.D0 - geom.d0) * (nodes + 1.0) + geom.d0
    w = 0.5 * (geom.D0 - geom.d0) * weights
    thetas = np.linspace(-math.pi, math.pi, 4 * modeset.max_order + 9)[:-1]
    total = 0.0
    for theta in thetas:
        total += np.sum(analytic.pdf(geom, modeset, r, theta, t) * r * w)
    return total * (2.0 * math.pi / thetas.size)
