"""Tensor-product Gauss-Legendre quadrature with node doubling.

All integrands in this package are products of Gaussians and polynomials on
finite boxes chosen to contain the mass, for which Gauss-Legendre converges
superexponentially; the doubling loop supplies a cheap error estimate
without adaptivity machinery.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError

Bounds = Sequence[tuple[float, float]]

# Evaluation points are fed to the integrand in chunks of this many rows.
CHUNK = 1 << 19


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule on [a, b]."""
    if n < 1:
        raise ParameterError("need at least one node")
    if not b > a:
        raise ParameterError("empty interval")
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = (a + b) / 2.0, (b - a) / 2.0
    return mid + half * x, half * w


def integrate_tensor(f: Callable[[np.ndarray], np.ndarray], bounds: Bounds,
                     n: int) -> float:
    """Integral of ``f`` over the box, n nodes per dimension.

    ``f`` maps an (m, d) array of points to m values and is called in
    chunks, so the full tensor grid is never materialized for d > 1.
    """
    dim = len(bounds)
    rules = [gauss_legendre(n, a, b) for a, b in bounds]
    if dim == 1:
        x, w = rules[0]
        return float(np.sum(w * f(x[:, None])))
    shapes = [len(r[0]) for r in rules]
    total = int(np.prod(shapes))
    acc = 0.0
    for start in range(0, total, CHUNK):
        stop = min(start + CHUNK, total)
        flat = np.arange(start, stop)
        pts = np.empty((stop - start, dim))
        wts = np.ones(stop - start)
        rem = flat
        for d in range(dim - 1, -1, -1):
            idx = rem % shapes[d]
            rem = rem // shapes[d]
            pts[:, d] = rules[d][0][idx]
            wts *= rules[d][1][idx]
        acc += float(np.sum(wts * f(pts)))
    return acc


def integrate_doubling(f: Callable[[np.ndarray], np.ndarray], bounds: Bounds,
                       tol: float, n_start: int = 32, n_max: int = 512) -> tuple[float, float]:
    """Integral with node doubling until two levels agree within ``tol``.

    Returns (value, estimated error).  Raises if the target is still out of
    reach at ``n_max`` nodes per dimension.
    """
    if n_start * 2 > n_max:
        raise ParameterError("n_max must allow at least one doubling")
    prev = integrate_tensor(f, bounds, n_start)
    n = n_start * 2
    while n <= n_max:
        cur = integrate_tensor(f, bounds, n)
        err = abs(cur - prev)
        if err <= tol:
            return cur, err
        prev = cur
        n *= 2
    raise ParameterError(
        f"quadrature did not reach tol={tol:g} within {n_max} nodes/dim "
        f"(last change {abs(cur - prev):g})"
    )
