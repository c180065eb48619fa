"""Closed-form joint exponent density for the complex field and its kernel.

At beta = 2 the exponent process started at the origin has, at every fixed
time, the joint density

    rho_t(l_1..l_N) = (prod_k 1/k!) det[(l_i / 2 kappa t)^(j-1)]
                      * det[Normal(l_i; rate_j t, kappa t)]

with rate_j the infinite-time ladder from the spectral module.  This is a
polynomial ensemble: monomials against shifted Gaussian weights.  Its
correlations are determinantal with kernel K(x, y) = w(y)^T G^{-1} p(x)
where G is the Gram matrix of monomials against weights, available in
closed form through Gaussian raw moments.

Everything is evaluated in log-magnitude + sign form; the Gaussian
determinant is row-rescaled before factorization because its entries span
the square of the dynamic range of the exponents.

The same law is realized by a Hermitian Gaussian matrix with an external
source: H = t diag(rates) + sqrt(kappa t) * (standard Hermitian sample).
Sampling that matrix and diagonalizing gives an independent Monte Carlo
route to the density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gammaln, ndtr

from .ensemble import EnsembleParams, sample_batch
from .errors import (
    ConditioningError,
    DegenerateSourceError,
    ParameterError,
)
from .flow import FlowParams
from .spectral import constant_u, lyapunov_rates

_LOG2 = np.log(2.0)


def gaussian_moment(n: int, mean: float, variance: float) -> float:
    """Raw moment E[Y^n] of a Gaussian via the two-term recursion.

    m_n = mean m_{n-1} + (n-1) variance m_{n-2}; variance may be 0 (point
    mass at the mean).
    """
    if n < 0 or n != int(n):
        raise ParameterError("moment order must be a nonnegative integer")
    if variance < 0:
        raise ParameterError("variance must be >= 0")
    prev, cur = 0.0, 1.0
    for k in range(1, n + 1):
        prev, cur = cur, mean * cur + (k - 1) * variance * prev
    return cur


def gaussian_truncated_moment(n: int, mean: float, variance: float, upper: float) -> float:
    """Lower partial moment: integral of y^n times the Gaussian pdf up to ``upper``.

    Same recursion as the full moment with a boundary correction
    -variance * upper^{n-1} * pdf(upper); n = 0 gives the CDF.
    """
    if n < 0 or n != int(n):
        raise ParameterError("moment order must be a nonnegative integer")
    if variance <= 0:
        raise ParameterError("variance must be positive")
    sd = np.sqrt(variance)
    z = (upper - mean) / sd
    cdf = float(ndtr(z))
    pdf = float(np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi)))
    prev, cur = 0.0, cdf
    for k in range(1, n + 1):
        prev, cur = cur, mean * cur + (k - 1) * variance * prev - variance * upper ** (k - 1) * pdf
    return cur


@dataclass(frozen=True)
class ExactModel:
    """Joint-density parameters at one time: dimension, kappa, mu, t.

    The derived quantities are the rate ladder, the Gaussian weight means
    ``rate_k t`` and common variance ``kappa t``, and the monomial scale
    ``2 kappa t``.
    """

    dim: int
    kappa: float
    mu: float
    t: float

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dim must be >= 1")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not self.t > 0:
            raise ParameterError("t must be positive")

    @classmethod
    def from_flow(cls, params: FlowParams, t: float) -> "ExactModel":
        if params.ensemble.beta != 2:
            raise ParameterError("the closed-form density exists for beta = 2 only")
        return cls(dim=params.ensemble.dim, kappa=params.kappa, mu=params.mu, t=t)

    @property
    def rates(self) -> np.ndarray:
        return lyapunov_rates(self.dim, self.kappa, self.mu)

    @property
    def means(self) -> np.ndarray:
        return self.rates * self.t

    @property
    def variance(self) -> float:
        return self.kappa * self.t

    @property
    def scale(self) -> float:
        return 2.0 * self.kappa * self.t

    def monomials(self, x: np.ndarray) -> np.ndarray:
        """p_j(x) = (x / scale)^(j-1) as columns j = 1..N."""
        x = np.asarray(x, dtype=float)
        return (x[..., None] / self.scale) ** np.arange(self.dim)

    def weights(self, x: np.ndarray) -> np.ndarray:
        """w_k(x) = Gaussian(x; mean_k, variance) as columns k = 1..N."""
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) ** 2 / (2.0 * self.variance)
        return np.exp(-z) / np.sqrt(2.0 * np.pi * self.variance)

    def support_box(self, pad: float = 8.0) -> tuple[float, float]:
        """Interval holding all the mass up to Gaussian tails at ``pad`` sigmas."""
        sd = np.sqrt(self.variance)
        return float(self.means[0] - pad * sd), float(self.means[-1] + pad * sd)


def _scaled_gaussian_logdet(lam: np.ndarray, means: np.ndarray,
                            variance: float) -> tuple[np.ndarray, np.ndarray]:
    """(sign, log) of det[Normal(lam_i; means_j, variance)], batched.

    The log entries are shifted by their row maxima before exponentiation,
    so the factorization happens on an O(1)-ranged matrix.
    """
    log_entries = (
        -((lam[..., :, None] - means) ** 2) / (2.0 * variance)
        - 0.5 * np.log(2.0 * np.pi * variance)
    )
    row_peak = log_entries.max(axis=-1)
    mat = np.exp(log_entries - row_peak[..., None])
    sign, logdet = np.linalg.slogdet(mat)
    return sign, logdet + row_peak.sum(axis=-1)


def _vandermonde_log(lam: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """(sign, log) of det[(lam_i / scale)^(j-1)], batched over leading axes."""
    n = lam.shape[-1]
    diff = lam[..., None, :] - lam[..., :, None]
    iu = np.triu_indices(n, k=1)
    pair = diff[..., iu[0], iu[1]]
    with np.errstate(divide="ignore"):
        log = np.log(np.abs(pair)).sum(axis=-1) - (n * (n - 1) / 2) * np.log(scale)
    sign = np.prod(np.sign(pair), axis=-1)
    return sign, log


def jpdf_log(lam: np.ndarray, model: ExactModel) -> float:
    """Log of the joint density at one exponent vector.

    Symmetric in the entries; -inf at coincident entries where the density
    vanishes.  Computed as the sum of the two log-determinants and the
    factorial prefactor, with the overall sign verified to be nonnegative.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (model.dim,):
        raise ParameterError(f"expected {model.dim} exponents, got shape {lam.shape}")
    return float(jpdf_log_batch(lam[None, :], model)[0])


def jpdf_log_batch(points: np.ndarray, model: ExactModel) -> np.ndarray:
    """Vectorized ``jpdf_log`` over rows of an (M, N) array."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != model.dim:
        raise ParameterError("points must have shape (M, dim)")
    n = model.dim
    prefactor = -np.sum(gammaln(np.arange(1, n + 1) + 1.0))
    v_sign, v_log = _vandermonde_log(points, model.scale)
    w_sign, w_log = _scaled_gaussian_logdet(points, model.means, model.variance)
    sign = v_sign * w_sign
    log = prefactor + v_log + w_log
    # A nonpositive sign only arises from total cancellation; the true
    # density there is zero to working precision.
    return np.where(sign > 0, log, -np.inf)


def jpdf(lam: np.ndarray, model: ExactModel) -> float:
    """Density value; exp of ``jpdf_log`` with -inf mapped to 0."""
    return float(np.exp(jpdf_log(lam, model)))


def _log_sinh_abs(x: np.ndarray) -> np.ndarray:
    """log |sinh x|, overflow-safe; -inf at 0."""
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        return ax + np.log1p(-np.exp(-2.0 * ax)) - _LOG2


def jpdf_general_log(lam: np.ndarray, nu: np.ndarray, t: float,
                     params: FlowParams) -> float:
    """Log joint density for a flow started from distinct log-scales ``nu``.

    exp(-U t / 2) / N! * det[Normal(l_i; nu_j, kappa t)]
    * prod_{i<j} sinh(l_j - l_i) / sinh(nu_j - nu_i),

    evaluated at l + mu t: the drift enters only as a rigid shift.  The
    constant is pinned by normalisation: an Andreief integration of the
    determinant against the sinh factor gives exp(+U t / 2), so this is
    the unique prefactor with unit total mass (and it matches the nu -> 0
    limit ``jpdf_log``).  The initial scales must be strictly increasing;
    for the coincident (origin-started) case use ``jpdf_log``.
    """
    lam = np.asarray(lam, dtype=float)
    nu = np.asarray(nu, dtype=float)
    n = params.ensemble.dim
    if params.ensemble.beta != 2:
        raise ParameterError("the closed-form density exists for beta = 2 only")
    if lam.shape != (n,) or nu.shape != (n,):
        raise ParameterError("lam and nu must have length dim")
    if t <= 0:
        raise ParameterError("t must be positive")
    if np.any(np.diff(nu) <= 0):
        raise ParameterError(
            "initial scales must be strictly increasing; for coincident "
            "starting points use jpdf_log (the singular limit)"
        )
    kappa = params.kappa
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    shifted = lam + params.mu * t
    g_sign, g_log = _scaled_gaussian_logdet(shifted[None, :], nu, kappa * t)
    iu = np.triu_indices(n, k=1)
    lam_pair = shifted[iu[1]] - shifted[iu[0]]
    nu_pair = nu[iu[1]] - nu[iu[0]]
    sinh_log = _log_sinh_abs(lam_pair).sum() - _log_sinh_abs(nu_pair).sum()
    sinh_sign = np.prod(np.sign(lam_pair))
    sign = g_sign[0] * sinh_sign
    log = (
        -0.5 * constant_u(params) * t
        - gammaln(n + 1.0)
        + g_log[0]
        + sinh_log
    )
    return float(log) if sign > 0 else float("-inf")


@dataclass(frozen=True)
class GramKernel:
    """Determinantal kernel of the polynomial ensemble.

    ``gram[j, k]`` is the integral of monomial j against weight k, in closed
    form through Gaussian moments.  ``condition`` records the conditioning
    estimate; above 1e10 the kernel solves per evaluation instead of using
    the cached inverse.
    """

    model: ExactModel
    gram: np.ndarray
    condition: float
    well_conditioned: bool
    inverse_gram: Optional[np.ndarray] = field(default=None, repr=False)
    _lu: tuple = field(default=None, repr=False)

    def evaluate(self, x, y) -> Union[float, np.ndarray]:
        """K(x, y) elementwise over broadcast arguments."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x_b, y_b = np.broadcast_arrays(x, y)
        p = self.model.monomials(x_b.ravel())
        if self.well_conditioned:
            v = p @ self.inverse_gram.T
        else:
            v = lu_solve(self._lu, p.T).T
        w = self.model.weights(y_b.ravel())
        out = np.einsum("mk,mk->m", w, v).reshape(x_b.shape)
        return float(out[0]) if out.size == 1 else out

    def trace_density(self, x) -> Union[float, np.ndarray]:
        return self.evaluate(x, x)


def build_kernel(model: ExactModel, cond_limit: float = 1e14) -> GramKernel:
    """Gram matrix and kernel closure of the ensemble.

    Raises ConditioningError when the Gram matrix is numerically singular
    (extreme kappa t N or mu/kappa); recentering the monomials would be
    required there.
    """
    gram = _full_gram(model)
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > cond_limit:
        raise ConditioningError(
            f"Gram matrix condition {condition:.3e} exceeds {cond_limit:.0e}; "
            "the monomial basis needs recentering/rescaling at these parameters"
        )
    lu = lu_factor(gram)
    well = condition < 1e10
    inverse = lu_solve(lu, np.eye(model.dim)) if well else None
    return GramKernel(model=model, gram=gram, condition=condition,
                      well_conditioned=well, inverse_gram=inverse, _lu=lu)


def level_density(x, kernel: GramKernel) -> Union[float, np.ndarray]:
    """One-point function K(x, x); integrates to the dimension."""
    return kernel.trace_density(x)


def incomplete_gram(model: ExactModel, upper: float) -> np.ndarray:
    """Gram matrix truncated to (-inf, upper]; used for extreme-value CDFs."""
    n = model.dim
    out = np.empty((n, n))
    for j in range(n):
        for k in range(n):
            out[j, k] = (
                gaussian_truncated_moment(j, model.means[k], model.variance, upper)
                / model.scale**j
            )
    return out


def max_cdf(model: ExactModel, x) -> Union[float, np.ndarray]:
    """P(largest exponent <= x) = det Gram(-inf, x] / det Gram."""
    full = np.linalg.det(_full_gram(model))
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.array([np.linalg.det(incomplete_gram(model, u)) / full for u in xs])
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else vals


def min_cdf(model: ExactModel, x) -> Union[float, np.ndarray]:
    """P(smallest exponent <= x) = 1 - det Gram[x, inf) / det Gram."""
    g = _full_gram(model)
    full = np.linalg.det(g)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.array(
        [1.0 - np.linalg.det(g - incomplete_gram(model, u)) / full for u in xs]
    )
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else vals


def _full_gram(model: ExactModel) -> np.ndarray:
    n = model.dim
    out = np.empty((n, n))
    for j in range(n):
        for k in range(n):
            out[j, k] = gaussian_moment(j, model.means[k], model.variance) / model.scale**j
    return out


def sample_gue_external_source(params: FlowParams, t: float,
                               rng: np.random.Generator,
                               count: Optional[int] = None) -> np.ndarray:
    """Eigenvalues of the external-source Hermitian ensemble.

    H = t diag(rates) + sqrt(kappa t) X with X a standard Hermitian Gaussian
    sample; the sorted eigenvalues of H follow the closed-form joint
    density.  Requires beta = 2 and kappa > 0 (a flat source is degenerate:
    the rate ladder must be distinct).
    """
    if params.ensemble.beta != 2:
        raise ParameterError("the external-source construction requires beta = 2")
    if params.kappa <= 0:
        raise DegenerateSourceError(
            "kappa = 0 collapses the source ladder; distinct rates required"
        )
    if t <= 0:
        raise ParameterError("t must be positive")
    n = params.ensemble.dim
    m = 1 if count is None else int(count)
    if m < 1:
        raise ParameterError("count must be >= 1")
    herm = EnsembleParams(dim=n, beta=2, tau=1.0)
    x = sample_batch(herm, m, rng)
    rates = lyapunov_rates(n, params.kappa, params.mu)
    h = t * np.diag(rates)[None, :, :] + np.sqrt(params.kappa * t) * x
    eig = np.linalg.eigvalsh(h)
    return eig[0] if count is None else eig
