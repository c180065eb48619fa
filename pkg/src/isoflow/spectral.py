"""Closed-form spectral statics and the eigenvalue-diffusion generator.

The infinite-time exponent rates form an equidistant ladder

    rate_k = kappa (2k - 1 - N) - mu,   k = 1..N,

independent of the field.  At the May-Wigner scaling sigma^2 = 1/N the
ladder fills a uniform ("square") law of width 1 + tau centred at -mu, and
the sign of the largest rate separates stable from unstable couplings at
mu = (1 + tau) / 2.

``fp_generator_apply`` evaluates the diffusion generator of the exponent
process on an arbitrary smooth density by central finite differences.  It is
used as a numerical oracle: the closed-form joint density of the complex
case must sit in its kernel up to O(h^2) truncation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    AccuracyWarning,
    DegenerateDensityError,
    ParameterError,
    SingularityError,
)
from .flow import FlowParams


def lyapunov_rates(dim: int, kappa: float, mu: float) -> np.ndarray:
    """The ladder kappa (2k - 1 - N) - mu for k = 1..N, ascending."""
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    k = np.arange(1, dim + 1)
    return kappa * (2 * k - 1 - dim) - mu


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Infinite-time exponent rates, ascending and equidistant."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ParameterError("values must be a 1-d array")
        object.__setattr__(self, "values", v)

    @property
    def spacing(self) -> float:
        return float(self.values[1] - self.values[0]) if self.values.size > 1 else 0.0


def lyapunov_infinite(params: FlowParams) -> LyapunovSpectrum:
    """Infinite-time rates of the flow: spacing 2 kappa, mean -mu."""
    return LyapunovSpectrum(lyapunov_rates(params.ensemble.dim, params.kappa, params.mu))


def square_law_support(tau: float, mu: float) -> tuple[float, float]:
    """Support of the limiting uniform law at the scaling sigma^2 = 1/N."""
    half = (1.0 + tau) / 2.0
    return (-mu - half, -mu + half)


def square_law_density(x: Union[float, np.ndarray], tau: float, mu: float):
    """Uniform density 1/(1+tau) on an interval of length 1+tau centred at -mu.

    Valid under the scaling sigma^2 = 1/N.  tau = -1 collapses the support
    to the point -mu; that degenerate (Dirac) case is reported as an error
    rather than a density value.
    """
    if not -1.0 <= tau <= 1.0:
        raise ParameterError(f"tau must lie in [-1, 1], got {tau!r}")
    if tau == -1.0:
        raise DegenerateDensityError(
            "tau = -1 gives a point mass at -mu, not a density"
        )
    lo, hi = square_law_support(tau, mu)
    x_arr = np.asarray(x, dtype=float)
    inside = (x_arr >= lo) & (x_arr <= hi)
    out = np.where(inside, 1.0 / (1.0 + tau), 0.0)
    return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class PhasePoint:
    """A (tau, mu) coupling at the May-Wigner scaling sigma^2 = 1/N."""

    tau: float
    mu: float

    def __post_init__(self):
        if not -1.0 < self.tau < 1.0:
            raise ParameterError(f"tau must lie in (-1, 1), got {self.tau!r}")

    @property
    def margin(self) -> float:
        return self.mu - (1.0 + self.tau) / 2.0


def classify(point: PhasePoint) -> str:
    """Stability of the coupling: sign of mu - (1 + tau)/2."""
    if point.margin > 0:
        return "stable"
    if point.margin < 0:
        return "unstable"
    return "critical"


def omega_gradient(lam: np.ndarray) -> np.ndarray:
    """Gradient of the log-repulsion potential: -sum_{j != i} coth(l_i - l_j)."""
    lam = np.asarray(lam, dtype=float)
    diff = lam[:, None] - lam[None, :]
    with np.errstate(divide="ignore"):
        coth = 1.0 / np.tanh(diff)
    np.fill_diagonal(coth, 0.0)
    return -coth.sum(axis=1)


def potential_energy(lam: np.ndarray, params: FlowParams) -> float:
    """Interaction potential of the exponent diffusion.

    kappa (beta - 2)/4 * sum_{i<j} coth^2(l_i - l_j) plus the constant
    kappa beta (N+1) N (N-1) / 6; identically equal to constant_u for the
    complex field, where the pair term drops out.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if n != params.ensemble.dim:
        raise ParameterError("lambda vector length does not match params")
    _require_distinct(lam, 0.0)
    beta = params.ensemble.beta
    kappa = params.kappa
    i, j = np.triu_indices(n, k=1)
    pair = np.sum(1.0 / np.tanh(lam[i] - lam[j]) ** 2)
    return kappa * (beta - 2) / 4.0 * pair + kappa * beta * (n + 1) * n * (n - 1) / 6.0


def constant_u(params: FlowParams) -> float:
    """The constant kappa (N+1) N (N-1) / 3 of the complex-field potential."""
    n = params.ensemble.dim
    return params.kappa * (n + 1) * n * (n - 1) / 3.0


def _require_distinct(lam: np.ndarray, gap: float) -> None:
    if lam.size < 2:
        return
    s = np.sort(lam)
    smallest = np.min(np.diff(s))
    if smallest <= gap:
        raise SingularityError(
            f"coincident exponents (min gap {smallest:.3e} <= {gap:.3e})"
        )


Density = Callable[[np.ndarray, float], float]


def fp_generator_apply(density: Density, point: np.ndarray, t: float,
                       params: FlowParams, h: float = 1e-3,
                       warn_ratio: float = 0.1) -> float:
    """Residual of the exponent diffusion equation on ``density`` at a point.

    Computes  d_t rho - (kappa/beta) sum_i d_i (d_i + beta dOmega_i) rho
    - mu sum_i d_i rho  by second-order central differences with step ``h``
    in every coordinate and in time.  A density solving the equation returns
    a residual of order h^2.

    Points with exponent gaps below 10 h are rejected (the repulsion term is
    singular at coincidences).  The truncation error is estimated from a
    Richardson pair (h, h/2); when the estimate exceeds ``warn_ratio`` times
    the largest individual term an AccuracyWarning is emitted.
    """
    r_h = _fp_residual(density, point, t, params, h, check=True)
    r_half, scale = _fp_residual(density, point, t, params, h / 2, check=False,
                                 want_scale=True)
    truncation = abs(r_h - r_half) * (4.0 / 3.0)
    if truncation > warn_ratio * scale:
        warnings.warn(
            f"finite-difference truncation ~{truncation:.3e} is large relative "
            f"to the generator terms ~{scale:.3e}; decrease h",
            AccuracyWarning,
            stacklevel=2,
        )
    return r_h


def fp_residual_pair(density: Density, point: np.ndarray, t: float,
                     params: FlowParams, h: float = 1e-3) -> tuple[float, float]:
    """Residuals at steps (h, h/2), for convergence-order checks."""
    r_h = _fp_residual(density, point, t, params, h, check=True)
    r_half = _fp_residual(density, point, t, params, h / 2, check=False)
    return r_h, r_half


def _fp_residual(density: Density, point: np.ndarray, t: float, params: FlowParams,
                 h: float, check: bool, want_scale: bool = False):
    lam = np.asarray(point, dtype=float)
    n = lam.size
    if n != params.ensemble.dim:
        raise ParameterError("point length does not match params")
    if t <= h:
        raise ParameterError("need t > h for the centred time difference")
    if check:
        _require_distinct(lam, 10.0 * h)
    kappa = params.kappa
    beta = params.ensemble.beta
    mu = params.mu

    rho_0 = density(lam, t)
    d_t = (density(lam, t + h) - density(lam, t - h)) / (2.0 * h)

    diffusion = 0.0
    interaction = 0.0
    drift = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        rho_p = density(lam + e, t)
        rho_m = density(lam - e, t)
        d2 = (rho_p + rho_m - 2.0 * rho_0) / h**2
        d1 = (rho_p - rho_m) / (2.0 * h)
        g_p = omega_gradient(lam + e)[i] * rho_p
        g_m = omega_gradient(lam - e)[i] * rho_m
        d_int = (g_p - g_m) / (2.0 * h)
        diffusion += d2
        interaction += d_int
        drift += d1
    residual = d_t - (kappa / beta) * diffusion - kappa * interaction - mu * drift
    if want_scale:
        scale = max(abs(d_t), abs((kappa / beta) * diffusion),
                    abs(kappa * interaction), abs(mu * drift))
        return residual, scale
    return residual


def coth_cyclic_identity(a: float, b: float, c: float) -> float:
    """coth(a-b)coth(c-b) + coth(b-c)coth(a-c) + coth(c-a)coth(b-a).

    Equals 1 for any distinct reals; the cancellation that removes the
    three-body term from the exponent diffusion.
    """
    coth = lambda x: 1.0 / np.tanh(x)
    return (
        coth(a - b) * coth(c - b)
        + coth(b - c) * coth(a - c)
        + coth(c - a) * coth(b - a)
    )
