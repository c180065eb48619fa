"""Elliptic ensemble: covariance structure, samplers, estimators."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoflow import (
    CovarianceEstimate,
    EnsembleParams,
    GaussianMatrix,
    IsotropyDecomposition,
    ParameterError,
    covariance,
    estimate_covariance,
    matrices_from_normals,
    normal_block_shape,
    sample,
    sample_batch,
)


def test_params_validation():
    with pytest.raises(ParameterError):
        EnsembleParams(dim=0, beta=2, tau=0.0)
    with pytest.raises(ParameterError):
        EnsembleParams(dim=3, beta=3, tau=0.0)
    with pytest.raises(ParameterError):
        EnsembleParams(dim=3, beta=1, tau=1.5)
    with pytest.raises(ParameterError):
        EnsembleParams(dim=3, beta=1, tau=-1.0001)


def test_params_field_properties():
    real = EnsembleParams(dim=2, beta=1, tau=0.3)
    assert not real.complex_field
    assert real.dtype == np.dtype(float)
    cplx = EnsembleParams(dim=2, beta=2, tau=0.3)
    assert cplx.complex_field
    assert cplx.dtype == np.dtype(complex)


def test_decomposition_from_ensemble():
    dec = IsotropyDecomposition.from_ensemble(EnsembleParams(dim=4, beta=1, tau=0.7))
    assert (dec.a, dec.b, dec.c, dec.d) == (0.0, 1.0, 0.7, None)
    dec = IsotropyDecomposition.from_ensemble(EnsembleParams(dim=4, beta=2, tau=-0.4))
    assert (dec.a, dec.b, dec.c, dec.d) == (0.0, -0.4, 0.0, 1.0)


def test_decomposition_constraints():
    with pytest.raises(ParameterError):
        IsotropyDecomposition(a=-0.1, b=1.0, c=0.0)
    with pytest.raises(ParameterError):
        IsotropyDecomposition(a=0.0, b=1.0, c=1.5)
    with pytest.raises(ParameterError):
        IsotropyDecomposition(a=0.0, b=2.0, c=0.0, d=1.0)
    with pytest.raises(ParameterError):
        IsotropyDecomposition(a=0.5, b=0.0, c=0.1, d=1.0)


def test_decomposition_sample_matches_elliptic():
    # The general sampler at elliptic coefficients must agree in law with
    # the batched elliptic sampler; check a few covariances by MC.
    params = EnsembleParams(dim=3, beta=2, tau=0.5)
    dec = IsotropyDecomposition.from_ensemble(params)
    rng = np.random.default_rng(11)
    stack = np.stack([dec.sample(params.dim, rng) for _ in range(20000)])
    est = estimate_covariance(stack, 0, 1, 0, 1, conjugate_first=True)
    assert abs(est.value - 1.0) <= 4 * est.stderr
    est = estimate_covariance(stack, 0, 1, 1, 0)
    assert abs(est.value - 0.5) <= 4 * est.stderr


@pytest.mark.parametrize("beta", [1, 2])
def test_sample_shapes(beta):
    params = EnsembleParams(dim=5, beta=beta, tau=0.2)
    rng = np.random.default_rng(0)
    m = sample(params, rng)
    assert isinstance(m, GaussianMatrix)
    assert m.entries.shape == (5, 5)
    assert m.entries.dtype == params.dtype
    assert np.all(np.isfinite(m.entries.view(float)))
    batch = sample_batch(params, 7, rng)
    assert batch.shape == (7, 5, 5)
    assert batch.dtype == params.dtype


def test_sample_batch_count_validation():
    params = EnsembleParams(dim=2, beta=1, tau=0.0)
    with pytest.raises(ParameterError):
        sample_batch(params, 0, np.random.default_rng(0))


@pytest.mark.parametrize("beta", [1, 2])
def test_endpoint_symmetry(beta):
    rng = np.random.default_rng(7)
    sym = sample_batch(EnsembleParams(dim=4, beta=beta, tau=1.0), 10, rng)
    assert np.array_equal(sym, np.conj(np.swapaxes(sym, -1, -2)))
    skew = sample_batch(EnsembleParams(dim=4, beta=beta, tau=-1.0), 10, rng)
    assert np.array_equal(skew, -np.conj(np.swapaxes(skew, -1, -2)))


def test_covariance_closed_form_real():
    params = EnsembleParams(dim=3, beta=1, tau=0.4)
    assert covariance(params, 0, 0, 0, 0) == pytest.approx(1.4)
    assert covariance(params, 0, 1, 0, 1) == 1.0
    assert covariance(params, 0, 1, 1, 0) == pytest.approx(0.4)
    assert covariance(params, 0, 0, 1, 1) == 0.0


def test_covariance_closed_form_complex():
    params = EnsembleParams(dim=3, beta=2, tau=0.4)
    assert covariance(params, 0, 1, 0, 1, conjugate_first=True) == 1.0
    assert covariance(params, 0, 1, 1, 0, conjugate_first=True) == 0.0
    assert covariance(params, 0, 1, 1, 0) == pytest.approx(0.4)
    assert covariance(params, 0, 1, 0, 1) == 0.0
    # Diagonal entry: both kinds contribute on (i, i, i, i).
    assert covariance(params, 2, 2, 2, 2, conjugate_first=True) == 1.0
    assert covariance(params, 2, 2, 2, 2) == pytest.approx(0.4)


def test_covariance_index_range():
    params = EnsembleParams(dim=2, beta=1, tau=0.0)
    with pytest.raises(IndexError):
        covariance(params, 0, 2, 0, 0)
    with pytest.raises(IndexError):
        covariance(params, 0, 0, -3, 0)


@pytest.mark.parametrize("beta,tau", [(1, 0.6), (1, -0.8), (2, 0.6), (2, -0.8)])
def test_covariance_monte_carlo(beta, tau):
    # 4e4 samples put the stderr around 0.007; a 4-sigma band is ample.
    params = EnsembleParams(dim=3, beta=beta, tau=tau)
    rng = np.random.default_rng(1234)
    stack = sample_batch(params, 40000, rng)
    kinds = [False] if beta == 1 else [False, True]
    for conj in kinds:
        for idx in [(0, 0, 0, 0), (0, 1, 0, 1), (0, 1, 1, 0), (0, 0, 1, 1), (1, 2, 2, 0)]:
            est = estimate_covariance(stack, *idx, conjugate_first=conj)
            target = covariance(params, *idx, conjugate_first=conj)
            assert abs(est.value - target) <= 4 * est.stderr, (idx, conj)


@given(
    tau=st.floats(-1.0, 1.0),
    idx=st.tuples(*[st.integers(0, 3)] * 4),
    beta=st.sampled_from([1, 2]),
    conj=st.booleans(),
)
@settings(max_examples=200, deadline=None)
def test_covariance_exchange_symmetry(tau, idx, beta, conj):
    # Swapping the two entries leaves every covariance kind invariant:
    # both Kronecker patterns are symmetric under (i,j,k,l) -> (k,l,i,j).
    params = EnsembleParams(dim=4, beta=beta, tau=tau)
    i, j, k, l = idx
    assert covariance(params, i, j, k, l, conj) == covariance(params, k, l, i, j, conj)


@given(tau=st.floats(-1.0, 1.0), idx=st.tuples(*[st.integers(0, 2)] * 4))
@settings(max_examples=200, deadline=None)
def test_covariance_affine_in_tau(tau, idx):
    # c(tau) = c(0) + tau * (c(1) - c(0)) for every component.
    base = EnsembleParams(dim=3, beta=1, tau=0.0)
    top = EnsembleParams(dim=3, beta=1, tau=1.0)
    mid = EnsembleParams(dim=3, beta=1, tau=tau)
    c0 = covariance(base, *idx)
    c1 = covariance(top, *idx)
    assert covariance(mid, *idx) == pytest.approx(c0 + tau * (c1 - c0))


def test_normal_block_shape():
    assert normal_block_shape(EnsembleParams(dim=3, beta=1, tau=0.0), 5) == (5, 2, 3, 3)
    assert normal_block_shape(EnsembleParams(dim=3, beta=2, tau=0.0), 5) == (5, 2, 2, 3, 3)


def test_matrices_from_normals_matches_batch():
    # sample_batch is exactly matrices_from_normals over one contiguous block.
    params = EnsembleParams(dim=4, beta=2, tau=-0.3)
    rng1 = np.random.default_rng(99)
    rng2 = np.random.default_rng(99)
    batch = sample_batch(params, 6, rng1)
    block = rng2.standard_normal(normal_block_shape(params, 6))
    assert np.array_equal(batch, matrices_from_normals(block, params))


def test_estimate_covariance_validation():
    params = EnsembleParams(dim=2, beta=1, tau=0.0)
    rng = np.random.default_rng(0)
    one = sample_batch(params, 1, rng)
    with pytest.raises(ParameterError):
        estimate_covariance(one, 0, 0, 0, 0)
    with pytest.raises(ParameterError):
        estimate_covariance([], 0, 0, 0, 0)
    with pytest.raises(ParameterError):
        estimate_covariance(np.zeros((3, 2)), 0, 0, 0, 0)


def test_estimate_covariance_from_matrices():
    params = EnsembleParams(dim=2, beta=1, tau=0.5)
    rng = np.random.default_rng(5)
    mats = [sample(params, rng) for _ in range(500)]
    est = estimate_covariance(mats, 0, 1, 1, 0)
    assert isinstance(est, CovarianceEstimate)
    assert est.count == 500
    assert abs(est.value - 0.5) <= 4 * est.stderr


def test_gaussian_matrix_validation():
    params = EnsembleParams(dim=2, beta=1, tau=0.0)
    with pytest.raises(ParameterError):
        GaussianMatrix(np.zeros((3, 3)), params)
    with pytest.raises(ParameterError):
        GaussianMatrix(np.array([[0.0, np.inf], [0.0, 0.0]]), params)
