"""Linear-algebra kernels for scale-factored matrix products.

A long product of near-identity matrices is carried here in the form
``Q @ diag(exp(ell)) @ B`` with ``Q`` unitary, ``ell`` real log-scales and
``B`` a bounded unit-diagonal triangular factor.  The routines below extract
singular values from that representation without ever forming a matrix whose
entries span the full dynamic range, which is what makes half-log singular
values reliable across hundreds of orders of magnitude.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations

import numpy as np

# Largest dimension for which the exterior-power extraction is used; the
# subset count C(n, n//2) grows too fast beyond this.
EXACT_DIM_MAX = 8


def qr_positive(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization with a real positive diagonal of R.

    Works on stacked inputs ``(..., n, n)``.  The sign/phase ambiguity of the
    factorization is removed so repeated factorizations are reproducible and
    ``log |R_ii|`` is well defined.
    """
    q, r = np.linalg.qr(mat)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    safe = np.where(mag > 0, mag, 1.0)
    with np.errstate(invalid="ignore"):
        phase = np.where(mag > 0, d / safe, 1.0)
    q = q * phase[..., None, :]
    r = r * np.conj(phase)[..., :, None]
    return q, r


@lru_cache(maxsize=None)
def _subset_indices(n: int, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays for all k-subsets of range(n).

    Returns (subsets, row_idx, col_idx) where row_idx/col_idx broadcast to
    select every (subset, subset) minor of an (n, n) matrix as a
    (C, C, k, k) block.
    """
    subs = np.array(list(combinations(range(n), k)), dtype=np.intp)
    c = subs.shape[0]
    row_idx = subs.reshape(c, 1, k, 1)
    col_idx = subs.reshape(1, c, 1, k)
    return subs, row_idx, col_idx


def _top_volume(ell: np.ndarray, factor: np.ndarray, k: int) -> np.ndarray:
    """log of the product of the k largest singular values of diag(e^ell) @ factor.

    Evaluated as the largest singular value of the k-th exterior power, whose
    rows are rescaled so the computation stays in range.  Relative accuracy is
    that of a dense SVD of a bounded matrix.
    """
    n = ell.shape[-1]
    subs, row_idx, col_idx = _subset_indices(n, k)
    row_sums = ell[..., subs].sum(axis=-1)                      # (..., C)
    peak = row_sums.max(axis=-1)                                # (...)
    minors = np.linalg.det(factor[..., row_idx, col_idx])       # (..., C, C)
    scaled = np.exp(row_sums - peak[..., None])[..., :, None] * minors
    smax = np.linalg.svd(scaled, compute_uv=False)[..., 0]
    return peak + np.log(smax)


def log_singular_values(ell: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """All log singular values of ``diag(exp(ell)) @ factor``, ascending.

    ``ell`` has shape (..., n) and ``factor`` (..., n, n) with n at most
    EXACT_DIM_MAX.  Partial products of singular values are obtained from
    exterior powers, so each value is accurate in absolute (log) terms even
    when the spread between them is enormous.
    """
    ell = np.asarray(ell, dtype=float)
    factor = np.asarray(factor)
    n = ell.shape[-1]
    if factor.shape[-1] != n or factor.shape[-2] != n:
        raise ValueError("factor shape does not match ell")
    if n > EXACT_DIM_MAX:
        raise ValueError(f"exact extraction limited to dimension {EXACT_DIM_MAX}")
    batch = ell.shape[:-1]
    sums = np.empty(batch + (n + 1,), dtype=float)
    sums[..., 0] = 0.0
    for k in range(1, n):
        sums[..., k] = _top_volume(ell, factor, k)
    sign, logdet = np.linalg.slogdet(factor)
    if np.any(sign == 0):
        raise np.linalg.LinAlgError("factor is singular")
    sums[..., n] = ell.sum(axis=-1) + logdet
    descending = np.diff(sums, axis=-1)
    return np.sort(descending, axis=-1)


def top_log_singular_value(ell: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """log of the largest singular value of ``diag(exp(ell)) @ factor``.

    Cheap at any dimension: rows far below the dominant scale underflow
    harmlessly after rescaling.
    """
    ell = np.asarray(ell, dtype=float)
    factor = np.asarray(factor)
    peak = ell.max(axis=-1)
    scaled = np.exp(ell - peak[..., None])[..., :, None] * factor
    smax = np.linalg.svd(scaled, compute_uv=False)[..., 0]
    return peak + np.log(smax)


def haar_unitary(dim: int, rng: np.random.Generator, *, complex_field: bool) -> np.ndarray:
    """Haar-distributed orthogonal (real) or unitary (complex) matrix."""
    g = rng.standard_normal((dim, dim))
    if complex_field:
        g = g + 1j * rng.standard_normal((dim, dim))
    q, _ = qr_positive(g)
    return q
