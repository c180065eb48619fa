"""Gaussian elliptic ensemble sampled through its isotropic decomposition.

An isotropic Gaussian measure on N x N matrices is fixed by a handful of
covariance coefficients.  Sampling is done by combining independent
(skew-)symmetric or (skew-)Hermitian Gaussian matrices with the appropriate
weights, so no normalization constant is ever needed and the covariance
structure holds exactly by construction.

The one-parameter family used by the flow simulator interpolates between a
symmetric/Hermitian matrix (``tau = 1``), a fully asymmetric one
(``tau = 0``) and a skew matrix (``tau = -1``):

    X = sqrt((1 + tau)/2) * H + sqrt((1 - tau)/2) * A

Covariances (verified by the test-suite estimators):

    beta = 1:  E[X_ij X_kl]  = d_ik d_jl + tau * d_il d_jk
    beta = 2:  E[X*_ij X_kl] = d_ik d_jl
               E[X_ij X_kl]  = tau * d_il d_jk
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class EnsembleParams:
    """Parameters of the elliptic ensemble.

    Attributes
    ----------
    dim : int
        Matrix dimension N >= 1.
    beta : int
        Field selector: 1 for real matrices, 2 for complex.
    tau : float
        Symmetry correlation in [-1, 1].  tau = 1 gives exactly
        symmetric/Hermitian samples, tau = -1 exactly skew ones (the latter
        is reachable only through the decomposition sampler, which is the
        only sampler here).
    """

    dim: int
    beta: int
    tau: float

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim!r}")
        if self.beta not in (1, 2):
            raise ParameterError(f"beta must be 1 or 2, got {self.beta!r}")
        if not (-1.0 <= self.tau <= 1.0):
            raise ParameterError(f"tau must lie in [-1, 1], got {self.tau!r}")

    @property
    def complex_field(self) -> bool:
        return self.beta == 2

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(complex) if self.beta == 2 else np.dtype(float)


@dataclass(frozen=True)
class IsotropyDecomposition:
    """Coefficients of a general isotropic Gaussian matrix measure.

    Real case (``d is None``): E[X_ij X_kl] = a d_ij d_kl + b d_ik d_jl
    + c d_il d_jk, sampled as

        X = sqrt((b+c)/2) H + sqrt((b-c)/2) A + sqrt(a) xi * Id.

    Complex case: E[X_ij X_kl] = a d_ij d_kl + b d_il d_jk and
    E[X*_ij X_kl] = c d_ij d_kl + d d_ik d_jl, sampled as

        X = sqrt((d+b)/2) H + sqrt((d-b)/2) A + z * Id,

    with z a complex scalar Gaussian chosen so E[z^2] = a and E[|z|^2] = c
    (i.e. z = sqrt((c+a)/2) xi + 1j sqrt((c-a)/2) eta).  The general
    coefficients exist for testing the isotropy machinery; the simulation
    path always uses the elliptic choice below.
    """

    a: float
    b: float
    c: float
    d: Optional[float] = None

    def __post_init__(self):
        if self.d is None:
            if self.a < 0 or self.b + self.c < 0 or self.b - self.c < 0:
                raise ParameterError(
                    "real decomposition requires a >= 0 and b +- c >= 0"
                )
        else:
            if self.d + self.b < 0 or self.d - self.b < 0:
                raise ParameterError("complex decomposition requires d +- b >= 0")
            if self.c + self.a < 0 or self.c - self.a < 0:
                raise ParameterError("complex decomposition requires c +- a >= 0")

    @property
    def complex_field(self) -> bool:
        return self.d is not None

    @classmethod
    def from_ensemble(cls, params: EnsembleParams) -> "IsotropyDecomposition":
        """Elliptic coefficients: (0, 1, tau) real, (0, tau, 0, 1) complex."""
        if params.beta == 1:
            return cls(a=0.0, b=1.0, c=params.tau)
        return cls(a=0.0, b=params.tau, c=0.0, d=1.0)

    def covariance(self, i: int, j: int, k: int, l: int, conjugate_first: bool = False) -> float:
        if not self.complex_field:
            return (
                self.a * (i == j) * (k == l)
                + self.b * (i == k) * (j == l)
                + self.c * (i == l) * (j == k)
            )
        if conjugate_first:
            return self.c * (i == j) * (k == l) + self.d * (i == k) * (j == l)
        return self.a * (i == j) * (k == l) + self.b * (i == l) * (j == k)

    def sample(self, dim: int, rng: np.random.Generator) -> np.ndarray:
        """One matrix with these covariances (testing path, not batched)."""
        if not self.complex_field:
            h, s = _symmetric_pair(rng.standard_normal((2, dim, dim)))
            x = np.sqrt((self.b + self.c) / 2.0) * h + np.sqrt((self.b - self.c) / 2.0) * s
            if self.a > 0:
                x = x + np.sqrt(self.a) * rng.standard_normal() * np.eye(dim)
            return x
        h, s = _hermitian_pair(rng.standard_normal((2, 2, dim, dim)))
        x = np.sqrt((self.d + self.b) / 2.0) * h + np.sqrt((self.d - self.b) / 2.0) * s
        if self.c + self.a > 0 or self.c - self.a > 0:
            z = np.sqrt((self.c + self.a) / 2.0) * rng.standard_normal()
            z = z + 1j * np.sqrt((self.c - self.a) / 2.0) * rng.standard_normal()
            x = x + z * np.eye(dim)
        return x


@dataclass(frozen=True)
class GaussianMatrix:
    """A sampled matrix together with the parameters that produced it."""

    entries: np.ndarray
    params: EnsembleParams = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.shape != (self.params.dim, self.params.dim):
            raise ParameterError("entries shape does not match params.dim")
        if not np.all(np.isfinite(e.view(float) if e.dtype.kind == "c" else e)):
            raise ParameterError("entries must be finite")


def normal_block_shape(params: EnsembleParams, count: int) -> tuple:
    """Shape of the standard-normal block consumed per `count` samples.

    This layout is shared by every sampler in the package, which pins the
    draw order of each random stream independently of batching.
    """
    n = params.dim
    if params.beta == 1:
        return (count, 2, n, n)
    return (count, 2, 2, n, n)


def _symmetric_pair(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(symmetric, skew-symmetric) standard Gaussian pair from raw normals.

    ``normals`` has shape (..., 2, n, n).  The symmetric part has
    off-diagonal variance 1 and diagonal variance 2; the skew part has
    off-diagonal variance 1.
    """
    g_h = normals[..., 0, :, :]
    g_a = normals[..., 1, :, :]
    t_h = np.swapaxes(g_h, -1, -2)
    t_a = np.swapaxes(g_a, -1, -2)
    return (g_h + t_h) / np.sqrt(2.0), (g_a - t_a) / np.sqrt(2.0)


def _hermitian_pair(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(Hermitian, skew-Hermitian) standard Gaussian pair from raw normals.

    ``normals`` has shape (..., 2, 2, n, n) holding the real/imaginary parts
    for each of the two matrices.  The Hermitian part has real N(0, 1)
    diagonal and unit-variance complex off-diagonal entries.
    """
    g_h = normals[..., 0, 0, :, :] + 1j * normals[..., 0, 1, :, :]
    g_a = normals[..., 1, 0, :, :] + 1j * normals[..., 1, 1, :, :]
    t_h = np.conj(np.swapaxes(g_h, -1, -2))
    t_a = np.conj(np.swapaxes(g_a, -1, -2))
    return (g_h + t_h) / 2.0, (g_a - t_a) / 2.0


def matrices_from_normals(normals: np.ndarray, params: EnsembleParams) -> np.ndarray:
    """Map a raw normal block (see ``normal_block_shape``) to samples."""
    w_h = np.sqrt((1.0 + params.tau) / 2.0)
    w_a = np.sqrt((1.0 - params.tau) / 2.0)
    if params.beta == 1:
        h, a = _symmetric_pair(normals)
    else:
        h, a = _hermitian_pair(normals)
    return w_h * h + w_a * a


def sample(params: EnsembleParams, rng: np.random.Generator) -> GaussianMatrix:
    """Draw one elliptic matrix.

    Uses the two-term decomposition into symmetric/Hermitian and skew parts,
    which realizes the target covariances exactly for every ``tau`` in
    [-1, 1]; at the endpoints the sample is exactly (skew-)symmetric.
    """
    block = rng.standard_normal(normal_block_shape(params, 1))
    return GaussianMatrix(matrices_from_normals(block, params)[0], params)


def sample_batch(params: EnsembleParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sampling: ``count`` matrices as a (count, N, N) array.

    Draws one contiguous normal block, so the result for a given stream is
    reproducible but differs from ``count`` repeated calls of ``sample``.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    block = rng.standard_normal(normal_block_shape(params, count))
    return matrices_from_normals(block, params)


def covariance(
    params: EnsembleParams, i: int, j: int, k: int, l: int, conjugate_first: bool = False
) -> float:
    """Closed-form covariance of entries (i, j) and (k, l), 0-based.

    For ``beta == 2`` the flag selects between E[X*_ij X_kl] (True) and the
    unconjugated E[X_ij X_kl] (False); real samples ignore it.
    """
    n = params.dim
    for idx in (i, j, k, l):
        if not 0 <= idx < n:
            raise IndexError(f"index {idx} out of range for dim {n}")
    if params.beta == 1:
        return float((i == k) * (j == l) + params.tau * (i == l) * (j == k))
    if conjugate_first:
        return float((i == k) * (j == l))
    return float(params.tau * (i == l) * (j == k))


@dataclass(frozen=True)
class CovarianceEstimate:
    """Monte Carlo covariance estimate with its standard error."""

    value: complex
    stderr: float
    count: int


def estimate_covariance(
    samples: Union[np.ndarray, Sequence[GaussianMatrix]],
    i: int,
    j: int,
    k: int,
    l: int,
    conjugate_first: bool = False,
) -> CovarianceEstimate:
    """Unbiased sample-mean estimator of one covariance component.

    ``samples`` is either a stacked (M, N, N) array or a sequence of
    GaussianMatrix.  The standard error combines the scatter of real and
    imaginary parts, so ``|value - truth| <= z * stderr`` is the natural
    acceptance band.
    """
    if isinstance(samples, np.ndarray):
        stack = samples
    else:
        if len(samples) == 0:
            raise ParameterError("empty sample set")
        stack = np.stack([np.asarray(s.entries) for s in samples])
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ParameterError("samples must stack to shape (M, N, N)")
    m = stack.shape[0]
    if m < 2:
        raise ParameterError("need at least 2 samples for a standard error")
    first = stack[:, i, j]
    if conjugate_first:
        first = np.conj(first)
    prod = first * stack[:, k, l]
    mean = prod.mean()
    if np.iscomplexobj(prod):
        var = prod.real.var(ddof=1) + prod.imag.var(ddof=1)
    else:
        var = prod.var(ddof=1)
        mean = float(mean)
    stderr = float(np.sqrt(var / m))
    return CovarianceEstimate(value=mean, stderr=stderr, count=m)
