import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.errors import ConfigurationError, InvalidModeError, NumericalFailureError, UnsupportedOrderError
from src.core.metrics import frobenius_norm, relative_error
from src.dataset.synthetic import random_tucker
from src.decomposition.lmlra import (LmlraOptions, energy_ranks, hooi, hosvd, matricized_tucker,
                                     mode_singular_values)
from src.decomposition.trace import MONOTONE_SLACK
from src.tensor.base import unfold
from src.tensor.models import TuckerTensor, reconstruct


def assert_orthonormal(model):
    for f in model.factors:
        assert np.max(np.abs(f.T @ f - np.eye(f.shape[1]))) < 1e-10


def test_full_hosvd_is_lossless(rng):
    t = rng.standard_normal((4, 5, 3))
    model = hosvd(t, t.shape)
    assert relative_error(t, reconstruct(model)) < 1e-12
    assert_orthonormal(model)


def test_hosvd_exact_multilinear_rank(rng):
    t = reconstruct(random_tucker((6, 7, 5), (2, 3, 2), rng))
    model = hosvd(t, (2, 3, 2))
    assert relative_error(t, reconstruct(model)) < 1e-10
    assert model.ranks == (2, 3, 2)


def test_hosvd_error_bound_and_hooi_improvement(rng):
    for _ in range(20):
        t = rng.standard_normal((6, 5, 7))
        ranks = (3, 2, 4)
        approx = hosvd(t, ranks)
        error = frobenius_norm(t - reconstruct(approx))
        discarded = sum(np.sum(s[r:] ** 2) for s, r in zip(mode_singular_values(t), ranks))
        assert error ** 2 <= discarded * (1 + 1e-12)
        assert_allclose(frobenius_norm(t) ** 2, frobenius_norm(approx.core) ** 2 + error ** 2, rtol=1e-10)

        refined, trace = hooi(t, LmlraOptions(ranks, tolerance=1e-12))
        residual = frobenius_norm(t - reconstruct(refined))
        assert residual <= error + MONOTONE_SLACK * frobenius_norm(t)
        assert np.all(np.diff(trace.residuals) <= MONOTONE_SLACK * frobenius_norm(t))
        assert_orthonormal(refined)
        assert_allclose(frobenius_norm(t) ** 2, frobenius_norm(refined.core) ** 2 + residual ** 2, rtol=1e-10)


def test_hooi_exact_input_converges_fast(rng):
    t = reconstruct(random_tucker((6, 7, 5), (2, 3, 2), rng))
    model, trace = hooi(t, LmlraOptions((2, 3, 2)))
    assert trace.iterations <= 2
    assert trace.converged
    assert relative_error(t, reconstruct(model)) < 1e-10
    assert list(trace.relative_errors_by_stage) == ['initialization', 'refinement']


def test_hooi_full_ranks(rng):
    t = rng.standard_normal((3, 4, 2))
    model, trace = hooi(t, LmlraOptions(t.shape))
    assert trace.iterations == 1
    assert relative_error(t, reconstruct(model)) < 1e-12


def test_hooi_random_start_reaches_same_subspace(rng):
    t = reconstruct(random_tucker((8, 7, 6), (2, 2, 2), rng)) + 1e-3 * rng.standard_normal((8, 7, 6))
    reference, _ = hooi(t, LmlraOptions((2, 2, 2), tolerance=1e-13))
    model, trace = hooi(t, LmlraOptions((2, 2, 2), tolerance=1e-13, max_iterations=500, seed=3))
    assert np.all(np.diff(trace.residuals) <= MONOTONE_SLACK * frobenius_norm(t))
    # subspaces are compared through projectors since bases are only fixed up to rotation
    for f, g in zip(model.factors, reference.factors):
        assert_allclose(f @ f.T, g @ g.T, atol=1e-5)


def test_invalid_ranks(rng):
    t = rng.standard_normal((3, 4, 5))
    with pytest.raises(ConfigurationError):
        hosvd(t, (4, 2, 2))
    with pytest.raises(ConfigurationError):
        hosvd(t, (1, 2))
    with pytest.raises(ConfigurationError):
        hooi(t, LmlraOptions((0, 2, 2)))
    with pytest.raises(ConfigurationError):
        LmlraOptions((1, 1, 1), max_iterations=0)


def test_matricized_tucker(rng):
    core = rng.standard_normal((2, 3, 4))
    identity = TuckerTensor(core, (np.eye(2), np.eye(3), np.eye(4)))
    for mode in range(3):
        assert_allclose(matricized_tucker(identity, mode), unfold(core, mode))

    with pytest.raises(InvalidModeError):
        matricized_tucker(identity, 3)
    four = TuckerTensor(np.ones((1, 1, 1, 1)), tuple(np.ones((1, 1)) for _ in range(4)))
    with pytest.raises(UnsupportedOrderError):
        matricized_tucker(four, 0)


def test_energy_ranks(rng):
    t = reconstruct(random_tucker((10, 9, 8), (2, 3, 3), rng))
    assert energy_ranks(t, energy=1.0 - 1e-9) == (2, 3, 3)
    low = energy_ranks(t, energy=0.5)
    assert all(1 <= r <= e for r, e in zip(low, (2, 3, 3)))
    with pytest.raises(ConfigurationError):
        energy_ranks(t, energy=0.0)


@pytest.mark.parametrize('seed', [None, 0])
def test_hooi_non_finite_input(seed):
    t = np.ones((3, 3, 3))
    t[1, 0, 2] = np.nan
    with pytest.raises(NumericalFailureError) as exc:
        hooi(t, LmlraOptions((1, 1, 1), seed=seed))
    assert exc.value.trace is not None
    with pytest.raises(NumericalFailureError):
        energy_ranks(t)
